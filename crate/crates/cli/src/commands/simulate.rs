use std::io::Write;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use hdfrontier::estimators::{parse_kinds, CovDivisor, EstimatorKind};
use hdfrontier::parallel::Execution;
use hdfrontier::simulator::output::{write_density, write_frontiers, write_histogram, write_losses, write_replications};
use hdfrontier::simulator::{
    frontier_comparison, histogram_data, loss_curve, run_monte_carlo, GarchSpec, McOptions, MeanLaw, Param, ScenarioKind,
    ScenarioSpec, SpectrumSpec,
};
use serde::{Deserialize, Serialize};

use super::Context;
use crate::error::{CliError, CliResult};
use crate::run::{self, fmt_num, Overrides, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SimOutput {
    /// Quadratic losses along the dimension grid.
    Losses,
    /// Histograms and limiting densities of the consistent estimator.
    Histograms,
    /// Estimated and population frontiers from one sample.
    Frontiers,
    /// Every replication's estimates.
    Replications,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// normal, t3 or ccc-garch.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    /// Concentration ratio p/n; n is round(p/c).
    #[arg(long)]
    c: Option<f64>,
    /// Sample size, instead of --c.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Estimators, e.g. `sample,consistent`.
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long, value_enum, value_delimiter = ',')]
    outputs: Option<Vec<SimOutput>>,
    /// Dimensions of the loss curve, e.g. `50,100,200,400` (default: p).
    #[arg(long, value_delimiter = ',')]
    p_grid: Option<Vec<usize>>,
    /// Use the 1/(n-1) sample covariance.
    #[arg(long)]
    unbiased_divisor: bool,
    /// Right end of the frontier grid.
    #[arg(long)]
    v_max: Option<f64>,
    #[arg(long)]
    frontier_points: Option<usize>,
}

fn normal() -> ScenarioKind {
    ScenarioKind::Normal
}

fn default_reps() -> usize {
    1000
}

fn default_kinds() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Sample, EstimatorKind::Consistent]
}

fn default_outputs() -> Vec<SimOutput> {
    vec![SimOutput::Losses]
}

fn default_points() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "normal")]
    pub scenario: ScenarioKind,
    pub p: usize,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<EstimatorKind>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<SimOutput>,
    #[serde(default)]
    pub p_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub divisor: CovDivisor,
    #[serde(default)]
    pub spectrum: SpectrumSpec,
    #[serde(default)]
    pub mean_law: MeanLaw,
    #[serde(default)]
    pub garch: Option<GarchSpec>,
    #[serde(default)]
    pub v_max: Option<f64>,
    #[serde(default = "default_points")]
    pub frontier_points: usize,
}

impl SimulateArgs {
    fn overrides(&self) -> CliResult<Overrides> {
        let mut o = Overrides::default();
        o.set("scenario", self.scenario.as_deref().map(ScenarioKind::from_str).transpose()?)
            .set("p", self.p)
            .set("c", self.c)
            .set("n", self.n)
            .set("reps", self.reps)
            .set("kinds", self.kinds.as_deref().map(parse_kinds).transpose()?)
            .set("outputs", self.outputs.as_ref())
            .set("p_grid", self.p_grid.as_ref())
            .set("divisor", self.unbiased_divisor.then_some(CovDivisor::NMinusOne))
            .set("v_max", self.v_max)
            .set("frontier_points", self.frontier_points);
        // a flag for one of c/n replaces the other from the file
        if self.c.is_some() && self.n.is_none() {
            o.set("n", Some(serde_json::Value::Null));
        }
        if self.n.is_some() && self.c.is_none() {
            o.set("c", Some(serde_json::Value::Null));
        }
        Ok(o)
    }
}

impl SimulateConfig {
    /// `(n, c)` from whichever of the two was given.
    fn dims(&self) -> CliResult<(usize, f64)> {
        match (self.c, self.n) {
            (Some(c), None) => {
                if !(c > 0.0 && c < 1.0) {
                    return Err(CliError::usage(format!("c = {c} must lie in (0, 1)")));
                }
                Ok(((self.p as f64 / c).round() as usize, c))
            }
            (None, Some(n)) => Ok((n, self.p as f64 / n as f64)),
            (Some(_), Some(_)) => Err(CliError::usage("give either `c` or `n`, not both")),
            (None, None) => Err(CliError::usage("config: missing field `c` (or `n`)")),
        }
    }

    fn spec(&self, p: usize, n: usize, seed: u64) -> ScenarioSpec {
        let mut spec = ScenarioSpec::new(self.scenario, p, n, seed);
        spec.spectrum = self.spectrum.clone();
        spec.mean_law = self.mean_law;
        if self.garch.is_some() {
            spec.garch = self.garch;
        }
        spec
    }
}

pub fn run(args: &SimulateArgs, ctx: &Context) -> CliResult<()> {
    let loaded = run::load(ctx.config.as_deref(), "simulate")?;
    let cfg: SimulateConfig = run::resolve(loaded.config, args.overrides()?)?;
    let (n, c) = cfg.dims()?;
    if cfg.reps == 0 {
        return Err(CliError::usage("reps must be at least 1"));
    }
    if cfg.kinds.is_empty() || cfg.outputs.is_empty() {
        return Err(CliError::usage("no estimator kinds or outputs requested"));
    }
    let seed = ctx.seed(loaded.seed);
    let spec = cfg.spec(cfg.p, n, seed);
    spec.validate()?;
    let opts = McOptions {
        divisor: cfg.divisor,
        exec: Execution::Parallel,
    };

    let mut out = Run::start(&ctx.outdir, "simulate", &cfg, seed, ctx.jobs)?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "scenario {}, p = {}, n = {}, reps = {}, seed = {seed}", cfg.scenario, cfg.p, n, cfg.reps)?;

    if cfg.outputs.contains(&SimOutput::Losses) {
        let grid = cfg.p_grid.clone().unwrap_or_else(|| vec![cfg.p]);
        let rows = loss_curve(&spec, c, &grid, cfg.reps, &cfg.kinds, opts)?;
        write_losses(out.create("losses.csv")?, &rows)?;
        for row in &rows {
            writeln!(
                stdout,
                "  p = {:<5} {:<11} {}  mean loss {}",
                row.p,
                row.estimator.name(),
                row.param,
                fmt_num(row.mean_loss)
            )?;
        }
    }

    let wants_hist = cfg.outputs.contains(&SimOutput::Histograms);
    if wants_hist || cfg.outputs.contains(&SimOutput::Replications) {
        let mut kinds = cfg.kinds.clone();
        if wants_hist && !kinds.contains(&EstimatorKind::Consistent) {
            kinds.push(EstimatorKind::Consistent);
        }
        let res = run_monte_carlo(&spec, cfg.reps, &kinds, opts)?;
        if cfg.outputs.contains(&SimOutput::Replications) {
            write_replications(out.create("replications.csv")?, &res)?;
        }
        if wants_hist {
            for param in Param::ALL {
                let h = histogram_data(&res, param)?;
                write_histogram(out.create(&format!("histogram_{param}.csv"))?, &h)?;
                write_density(out.create(&format!("density_{param}.csv"))?, &h)?;
            }
        }
    }

    if cfg.outputs.contains(&SimOutput::Frontiers) {
        let cmp = frontier_comparison(&spec, &cfg.kinds, cfg.v_max, cfg.frontier_points)?;
        write_frontiers(out.create("frontiers.csv")?, &cmp)?;
        writeln!(stdout, "  {} frontier curves", cmp.curves.len() + 1)?;
    }

    let dir = out.finish()?;
    writeln!(stdout, "output {}", dir.display())?;
    Ok(())
}
