use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use hdfrontier::frontier::{frontier_curve, frontier_params, merton_constants, CovarianceMatrix, MeanVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::input;
use crate::run::{self, fmt_num, Overrides, Run};

#[derive(Debug, Args)]
pub struct FrontierArgs {
    /// Mean vector, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Covariance rows separated by ';', entries by ','.
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
    /// CSV file holding the mean vector as one row or column.
    #[arg(long)]
    mu_file: Option<PathBuf>,
    /// CSV file holding the covariance matrix, one row per line.
    #[arg(long)]
    sigma_file: Option<PathBuf>,
    /// Write the upper frontier at this many variances to curve.csv.
    #[arg(long)]
    curve_points: Option<usize>,
    /// Largest variance of the curve (default three times the GMV variance).
    #[arg(long)]
    v_max: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierConfig {
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub mu_file: Option<PathBuf>,
    #[serde(default)]
    pub sigma_file: Option<PathBuf>,
    #[serde(default)]
    pub curve_points: Option<usize>,
    #[serde(default)]
    pub v_max: Option<f64>,
}

impl FrontierArgs {
    fn overrides(&self) -> CliResult<Overrides> {
        let mut o = Overrides::default();
        o.set("mu", self.mu.as_deref().map(input::parse_list).transpose()?)
            .set("sigma", self.sigma.as_deref().map(input::parse_rows).transpose()?)
            .set("mu_file", self.mu_file.as_ref())
            .set("sigma_file", self.sigma_file.as_ref())
            .set("curve_points", self.curve_points)
            .set("v_max", self.v_max);
        Ok(o)
    }
}

fn pick<T>(inline: Option<T>, file: Option<&PathBuf>, name: &str, read: impl Fn(&std::path::Path) -> CliResult<T>) -> CliResult<T> {
    match (inline, file) {
        (Some(v), None) => Ok(v),
        (None, Some(path)) => read(path),
        (Some(_), Some(_)) => Err(CliError::usage(format!("give either `{name}` or `{name}_file`, not both"))),
        (None, None) => Err(CliError::usage(format!("config: missing field `{name}` (or `{name}_file`)"))),
    }
}

pub fn run(args: &FrontierArgs, ctx: &Context) -> CliResult<()> {
    let loaded = run::load(ctx.config.as_deref(), "frontier")?;
    let cfg: FrontierConfig = run::resolve(loaded.config, args.overrides()?)?;
    let mu = pick(cfg.mu.clone(), cfg.mu_file.as_ref(), "mu", input::read_vector)?;
    let rows = pick(cfg.sigma.clone(), cfg.sigma_file.as_ref(), "sigma", input::read_matrix)?;
    // The inputs are part of the configuration, so invalid values are usage errors.
    let usage = |e: hdfrontier::Error| CliError::usage(e.to_string());
    let mu = MeanVector::from_slice(&mu).map_err(usage)?;
    let sigma = CovarianceMatrix::new(input::to_matrix(&rows)?).map_err(usage)?;
    if sigma.dim() != mu.len() {
        return Err(CliError::usage(format!(
            "mu has {} entries but sigma is {}x{}",
            mu.len(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    let mc = merton_constants(&mu, &sigma).map_err(usage)?;
    let fp = frontier_params(&mu, &sigma).map_err(usage)?;
    let curve = match cfg.curve_points {
        Some(points) => Some(frontier_curve(fp, cfg.v_max.unwrap_or(3.0 * fp.v_gmv), points)?),
        None => None,
    };

    let seed = ctx.seed(loaded.seed);
    let mut out = Run::start(&ctx.outdir, "frontier", &cfg, seed, ctx.jobs)?;
    out.write_json("frontier.json", &json!({ "params": fp, "merton": mc }))?;
    if let Some(curve) = &curve {
        let mut w = csv::Writer::from_writer(out.create("curve.csv")?);
        w.write_record(["V", "R"]).map_err(hdfrontier::Error::from)?;
        for (v, r) in curve {
            w.write_record([v.to_string(), r.to_string()]).map_err(hdfrontier::Error::from)?;
        }
        w.flush()?;
    }
    let dir = out.finish()?;

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "r_gmv  {}", fmt_num(fp.r_gmv))?;
    writeln!(stdout, "v_gmv  {}", fmt_num(fp.v_gmv))?;
    writeln!(stdout, "slope  {}", fmt_num(fp.slope))?;
    writeln!(stdout, "a      {}", fmt_num(mc.a))?;
    writeln!(stdout, "b      {}", fmt_num(mc.b))?;
    writeln!(stdout, "c      {}", fmt_num(mc.c_m))?;
    writeln!(stdout, "output {}", dir.display())?;
    Ok(())
}
