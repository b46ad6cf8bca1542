use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use hdfrontier::estimators::{estimate, parse_kinds, sample_moments_with, CovDivisor, EstimateReport, EstimatorKind, ReturnsMatrix};
use hdfrontier::inference::{confidence_intervals_with, CiOptions, ConfidenceIntervals};
use hdfrontier::pipeline::ingest_path;
use serde::{Deserialize, Serialize};

use super::Context;
use crate::error::{CliError, CliResult};
use crate::run::{self, fmt_num, Overrides, Run};

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Returns CSV: `timestamp,ASSET1,ASSET2,...`, one row per observation.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Estimators, e.g. `sample,consistent,rte`.
    #[arg(long)]
    kinds: Option<String>,
    /// Confidence level of the intervals.
    #[arg(long)]
    level: Option<f64>,
    /// Use the 1/(n-1) sample covariance.
    #[arg(long)]
    unbiased_divisor: bool,
    /// Center the slope interval at s_c - p/n.
    #[arg(long)]
    center_s_bias: bool,
}

fn default_level() -> f64 {
    0.95
}

fn all_kinds() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub input: PathBuf,
    #[serde(default = "all_kinds")]
    pub kinds: Vec<EstimatorKind>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub divisor: CovDivisor,
    #[serde(default)]
    pub center_s_bias: bool,
}

impl EstimateArgs {
    fn overrides(&self) -> CliResult<Overrides> {
        let mut o = Overrides::default();
        o.set("input", self.input.as_ref())
            .set("kinds", self.kinds.as_deref().map(parse_kinds).transpose()?)
            .set("level", self.level)
            .set("divisor", self.unbiased_divisor.then_some(CovDivisor::NMinusOne))
            .set("center_s_bias", self.center_s_bias.then_some(true));
        Ok(o)
    }
}

#[derive(Debug, Serialize)]
struct Estimate {
    report: EstimateReport,
    ci: Option<ConfidenceIntervals>,
}

pub fn run(args: &EstimateArgs, ctx: &Context) -> CliResult<()> {
    let loaded = run::load(ctx.config.as_deref(), "estimate")?;
    let cfg: EstimateConfig = run::resolve(loaded.config, args.overrides()?)?;
    if cfg.kinds.is_empty() {
        return Err(CliError::usage("no estimator kinds given"));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(CliError::usage(format!("level {} is outside (0, 1)", cfg.level)));
    }
    let panel = ingest_path(&cfg.input).map_err(|e| CliError::from(e).context(cfg.input.display()))?;
    let y = ReturnsMatrix::with_labels(panel.data.transpose(), panel.asset_labels.clone())?;
    let m = sample_moments_with(&y, cfg.divisor)?;
    let opts = CiOptions {
        center_s_bias: cfg.center_s_bias,
    };

    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for &kind in &cfg.kinds {
        match estimate(&m, kind) {
            Ok(report) => {
                let ci = if kind == EstimatorKind::Consistent {
                    Some(confidence_intervals_with(&report, cfg.level, opts)?)
                } else {
                    None
                };
                estimates.push(Estimate { report, ci });
            }
            Err(e) => failures.push((kind, CliError::from(e))),
        }
    }

    let seed = ctx.seed(loaded.seed);
    let mut out = Run::start(&ctx.outdir, "estimate", &cfg, seed, ctx.jobs)?;
    out.write_json("estimates.json", &estimates)?;
    {
        let mut w = csv::Writer::from_writer(out.create("estimates.csv")?);
        w.write_record([
            "estimator", "r_gmv", "v_gmv", "slope", "ci_r_lo", "ci_r_hi", "ci_v_lo", "ci_v_hi", "ci_s_lo", "ci_s_hi", "p", "n",
        ])
        .map_err(hdfrontier::Error::from)?;
        for e in &estimates {
            let fp = e.report.params;
            let mut rec = vec![e.report.kind.to_string(), fp.r_gmv.to_string(), fp.v_gmv.to_string(), fp.slope.to_string()];
            match e.ci {
                Some(ci) => rec.extend([ci.ci_r.0, ci.ci_r.1, ci.ci_v.0, ci.ci_v.1, ci.ci_s.0, ci.ci_s.1].map(|x| x.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), 6)),
            }
            rec.extend([e.report.p.to_string(), e.report.n.to_string()]);
            w.write_record(&rec).map_err(hdfrontier::Error::from)?;
        }
        w.flush()?;
    }
    let dir = out.finish()?;

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "p = {}, n = {}, p/n = {}", m.p, m.n, fmt_num(m.ratio()))?;
    writeln!(stdout, "{:<11} {:>12} {:>12} {:>12}", "estimator", "r_gmv", "v_gmv", "slope")?;
    for e in &estimates {
        let fp = e.report.params;
        writeln!(
            stdout,
            "{:<11} {:>12} {:>12} {:>12}",
            e.report.kind.name(),
            fmt_num(fp.r_gmv),
            fmt_num(fp.v_gmv),
            fmt_num(fp.slope)
        )?;
        if let Some(ci) = e.ci {
            let show = |(lo, hi): (f64, f64)| format!("[{}, {}]", fmt_num(lo), fmt_num(hi));
            writeln!(stdout, "  {}% CI  R {}  V {}  s {}", cfg.level * 100.0, show(ci.ci_r), show(ci.ci_v), show(ci.ci_s))?;
        }
    }
    writeln!(stdout, "output {}", dir.display())?;

    let mut failures = failures.into_iter();
    match failures.next() {
        None => Ok(()),
        Some((kind, e)) => {
            let mut err = e.context(kind);
            for (kind, e) in failures {
                err.message.push_str(&format!("; {kind}: {}", e.message));
            }
            Err(err)
        }
    }
}
