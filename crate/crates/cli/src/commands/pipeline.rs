use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use hdfrontier::estimators::parse_kinds;
use hdfrontier::parallel::Execution;
use hdfrontier::pipeline::{ingest_path, run_pipeline, write_rolling, RollingConfig};
use serde::{Deserialize, Serialize};

use super::Context;
use crate::error::{CliError, CliResult};
use crate::input;
use crate::run::{self, Overrides, Run};

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Returns CSV: `timestamp,ASSET1,ASSET2,...`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Number of assets.
    #[arg(long)]
    p: Option<usize>,
    /// Window length in observations.
    #[arg(long)]
    n: Option<usize>,
    /// Observations per window advance (default: one trading day).
    #[arg(long)]
    step: Option<usize>,
    /// Estimation frequency in minutes: 1, 5, 10, 30 or 60.
    #[arg(long)]
    frequency: Option<u32>,
    /// Holding period the estimates are scaled to, in minutes.
    #[arg(long)]
    horizon: Option<u32>,
    /// Winsorization quantiles `low,high`.
    #[arg(long)]
    winsor: Option<String>,
    #[arg(long, conflicts_with = "winsor")]
    no_winsor: bool,
    /// Estimators, e.g. `sample,consistent,ebe,rte`.
    #[arg(long)]
    kinds: Option<String>,
    /// Asset labels to use instead of the first p columns.
    #[arg(long, value_delimiter = ',')]
    assets: Option<Vec<String>>,
    /// Drop the first return of each day.
    #[arg(long)]
    drop_first_of_day: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub rolling: RollingConfig,
}

impl PipelineArgs {
    fn overrides(&self) -> CliResult<Overrides> {
        let winsor = match (&self.winsor, self.no_winsor) {
            (_, true) => Some(None),
            (Some(s), false) => match input::parse_list(s)?.as_slice() {
                &[lo, hi] => Some(Some((lo, hi))),
                _ => return Err(CliError::usage("--winsor takes two quantiles, e.g. 0.01,0.99")),
            },
            (None, false) => None,
        };
        let mut o = Overrides::default();
        o.set("input", self.input.as_ref())
            .set("rolling.p", self.p)
            .set("rolling.n", self.n)
            .set("rolling.step", self.step)
            .set("rolling.frequency_minutes", self.frequency)
            .set("rolling.target_horizon_minutes", self.horizon)
            .set("rolling.winsor_quantiles", winsor)
            .set("rolling.kinds", self.kinds.as_deref().map(parse_kinds).transpose()?)
            .set("rolling.assets", self.assets.as_ref())
            .set("rolling.drop_first_of_day", self.drop_first_of_day.then_some(true));
        Ok(o)
    }
}

pub fn run(args: &PipelineArgs, ctx: &Context) -> CliResult<()> {
    let loaded = run::load(ctx.config.as_deref(), "pipeline")?;
    let cfg: PipelineConfig = run::resolve(loaded.config, args.overrides()?)?;
    cfg.rolling.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let panel = ingest_path(&cfg.input).map_err(|e| CliError::from(e).context(cfg.input.display()))?;
    let rows = run_pipeline(&panel, &cfg.rolling, Execution::Parallel)?;

    let seed = ctx.seed(loaded.seed);
    let mut out = Run::start(&ctx.outdir, "pipeline", &cfg, seed, ctx.jobs)?;
    write_rolling(out.create("rolling.csv")?, &rows)?;
    let dir = out.finish()?;

    let mut per_kind: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *per_kind.entry(r.report.kind.name()).or_default() += 1;
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{} rows read ({} dropped), {} assets, {}-minute base frequency",
        panel.len(),
        panel.dropped_rows,
        panel.p(),
        panel.frequency_minutes
    )?;
    for (kind, count) in per_kind {
        writeln!(stdout, "  {kind:<11} {count} windows")?;
    }
    writeln!(stdout, "output {}", dir.display())?;
    Ok(())
}
