use std::io::Write;

use clap::{Args, ValueEnum};
use hdfrontier::estimators::{CovDivisor, EstimatorKind};
use hdfrontier::frontier::CovarianceMatrix;
use hdfrontier::parallel::{map_indexed, Execution};
use hdfrontier::rmt::{
    fixed_point_residual, lemma2_quadform_check, lemma3_quadform_check, lemma5_exact_laws, m_at_zero, m_of_z, x_of_z,
    Diagnostic, LimitLawSpec, StieltjesPoint,
};
use hdfrontier::rng::{stream, Domain};
use hdfrontier::simulator::{run_monte_carlo, McOptions, ScenarioKind, ScenarioSpec};
use hdfrontier::stats;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::Context;
use crate::error::{CliError, CliResult};
use crate::run::{self, fmt_num, Overrides, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TheoryCheck {
    /// Marchenko-Pastur transforms: fixed-point residual, test point, m(0+).
    Transforms,
    /// Resolvent quadratic forms of (1/n) X X'.
    Lemma2,
    /// Quadratic forms of the de-meaned sample covariance.
    Lemma3,
    /// Variances of the chi-square and noncentral F central limit laws.
    Lemma4,
    /// Exact finite-sample laws of the sample estimators.
    Lemma5,
}

const ALL_CHECKS: [TheoryCheck; 5] = [
    TheoryCheck::Transforms,
    TheoryCheck::Lemma2,
    TheoryCheck::Lemma3,
    TheoryCheck::Lemma4,
    TheoryCheck::Lemma5,
];

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, value_enum, value_delimiter = ',')]
    checks: Option<Vec<TheoryCheck>>,
    /// Concentration ratio for the quadratic-form and limit-law checks.
    #[arg(long)]
    c: Option<f64>,
    /// Dimension for the quadratic-form and limit-law checks.
    #[arg(long)]
    p: Option<usize>,
    /// Number of seeds; diagnostics are medians over seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Pass threshold for the quadratic-form diagnostics.
    #[arg(long)]
    threshold: Option<f64>,
    /// Replications for the exact-law check.
    #[arg(long)]
    reps: Option<usize>,
    /// Draws for the limit-law checks.
    #[arg(long)]
    limit_reps: Option<usize>,
}

fn d_c() -> f64 {
    0.5
}
fn d_p() -> usize {
    500
}
fn d_seeds() -> usize {
    20
}
fn d_threshold() -> f64 {
    0.05
}
fn d_points() -> usize {
    100
}
fn d_ratios() -> Vec<f64> {
    vec![0.1, 0.5, 0.9, 1.5]
}
fn d_reps() -> usize {
    10_000
}
fn d_limit_reps() -> usize {
    100_000
}
fn d_lambda() -> f64 {
    0.5
}
fn d_p5() -> usize {
    10
}
fn d_n5() -> usize {
    50
}
fn d_checks() -> Vec<TheoryCheck> {
    ALL_CHECKS.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(default = "d_checks")]
    pub checks: Vec<TheoryCheck>,
    #[serde(default = "d_c")]
    pub c: f64,
    #[serde(default = "d_p")]
    pub p: usize,
    #[serde(default = "d_seeds")]
    pub seeds: usize,
    #[serde(default = "d_threshold")]
    pub threshold: f64,
    /// Random upper half-plane points per ratio for the residual check.
    #[serde(default = "d_points")]
    pub points: usize,
    #[serde(default = "d_ratios")]
    pub transform_ratios: Vec<f64>,
    /// Replications for the exact-law check.
    #[serde(default = "d_reps")]
    pub reps: usize,
    /// Draws for the limit-law checks.
    #[serde(default = "d_limit_reps")]
    pub limit_reps: usize,
    /// Noncentrality per observation of the F limit law.
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_p5")]
    pub exact_p: usize,
    #[serde(default = "d_n5")]
    pub exact_n: usize,
}

impl TheoryArgs {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        o.set("checks", self.checks.as_ref())
            .set("c", self.c)
            .set("p", self.p)
            .set("seeds", self.seeds)
            .set("threshold", self.threshold)
            .set("reps", self.reps)
            .set("limit_reps", self.limit_reps);
        o
    }
}

fn record(check: &str, p: usize, n: usize, c: f64, seed: u64, value: f64, threshold: f64, pass: bool) -> Diagnostic {
    Diagnostic {
        check: check.into(),
        p,
        n,
        c,
        seed,
        value,
        threshold,
        pass,
    }
}

const RESIDUAL_TOL: f64 = 1e-12;
const M0_TOL: f64 = 1e-6;

fn transforms(cfg: &TheoryConfig, seed: u64) -> CliResult<(Vec<Diagnostic>, Vec<(f64, f64)>)> {
    let mut out = Vec::new();
    let mut m0 = Vec::new();
    for (i, &c) in cfg.transform_ratios.iter().enumerate() {
        let mut rng = stream(seed, Domain::Theory, 100 + i as u64);
        let mut worst = 0.0f64;
        for _ in 0..cfg.points {
            let z = Complex64::new(rng.random_range(-5.0..5.0), rng.random_range(0.01..5.0));
            let pt = StieltjesPoint::new(z, c)?;
            worst = worst.max(fixed_point_residual(pt, x_of_z(pt)?));
        }
        out.push(record("transforms.residual", 0, 0, c, seed, worst, RESIDUAL_TOL, worst < RESIDUAL_TOL));

        let z = Complex64::new(1.0 + c, 2.0 * c.sqrt());
        let x = x_of_z(StieltjesPoint::new(z, c)?)?;
        let err = (x.im - c.sqrt() * (1.0 + 2f64.sqrt())).abs();
        out.push(record("transforms.test_point", 0, 0, c, seed, err, RESIDUAL_TOL, err < RESIDUAL_TOL));

        if c < 1.0 {
            let limit = m_at_zero(c)?;
            let near = m_of_z(StieltjesPoint::new(Complex64::new(0.0, 1e-12), c)?)?.m;
            let err = (near - limit).norm() / limit;
            out.push(record("transforms.m_zero", 0, 0, c, seed, err, M0_TOL, err < M0_TOL));
            m0.push((c, limit));
        }
    }
    Ok((out, m0))
}

/// Median of each diagnostic over seeds, as a record per diagnostic name.
fn medians(per_seed: Vec<Vec<Diagnostic>>, seed: u64) -> Vec<Diagnostic> {
    let Some(first) = per_seed.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let values: Vec<f64> = per_seed.iter().map(|run| run[k].value).collect();
            let med = stats::median(&values);
            record(&d.check, d.p, d.n, d.c, seed, med, d.threshold, med < d.threshold)
        })
        .collect()
}

fn limit_laws(cfg: &TheoryConfig, seed: u64) -> CliResult<Vec<Diagnostic>> {
    let p = cfg.p;
    let n = (p as f64 / cfg.c).round() as usize;
    // exact variance for the chi-square statistic, limiting one for F
    let laws = [
        ("lemma4.chisq_variance_rel", LimitLawSpec::ChiSqClt { p, n }, 0.03),
        (
            "lemma4.noncentral_f_variance_rel",
            LimitLawSpec::NoncentralFClt { p, n, lambda: cfg.lambda },
            0.05,
        ),
    ];
    let mut out = Vec::new();
    for (name, law, tol) in laws {
        let (_, var) = law.moments();
        let xs = law.sample(cfg.limit_reps, seed)?;
        let rel = (stats::variance(&xs) / var - 1.0).abs();
        out.push(record(name, p, n, cfg.c, seed, rel, tol, rel < tol));
    }
    Ok(out)
}

/// Absolute z-score of `mean(xs)` against `target`.
fn mean_z(xs: &[f64], target: f64) -> f64 {
    (stats::mean(xs) - target).abs() / stats::std_error(xs)
}

fn exact_laws(cfg: &TheoryConfig, seed: u64) -> CliResult<Vec<Diagnostic>> {
    let (p, n) = (cfg.exact_p, cfg.exact_n);
    let spec = ScenarioSpec::new(ScenarioKind::Normal, p, n, seed);
    let opts = McOptions {
        divisor: CovDivisor::NMinusOne,
        exec: Execution::Parallel,
    };
    let res = run_monte_carlo(&spec, cfg.reps, &[EstimatorKind::Sample], opts)?;
    let laws = lemma5_exact_laws(res.truth, p, n)?;
    let est = res.params(EstimatorKind::Sample);
    let v: Vec<f64> = est.iter().map(|fp| laws.v_statistic(fp.v_gmv)).collect();
    let s: Vec<f64> = est.iter().map(|fp| laws.s_statistic(fp.slope)).collect();
    let df = laws.chisq_df as f64;

    let mean = stats::mean(&v);
    let sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var_z = (stats::mean(&sq) * v.len() as f64 / (v.len() - 1) as f64 - 2.0 * df).abs() / stats::std_error(&sq);

    let raw_v: Vec<f64> = est.iter().map(|fp| fp.v_gmv).collect();
    let raw_r: Vec<f64> = est.iter().map(|fp| fp.r_gmv).collect();
    let raw_s: Vec<f64> = est.iter().map(|fp| fp.slope).collect();
    let c = p as f64 / n as f64;
    Ok(vec![
        record("lemma5.v_mean_z", p, n, c, seed, mean_z(&v, df), 3.0, mean_z(&v, df) < 3.0),
        record("lemma5.v_variance_z", p, n, c, seed, var_z, 3.0, var_z < 3.0),
        record("lemma5.s_mean_z", p, n, c, seed, mean_z(&s, laws.f_mean()), 3.0, mean_z(&s, laws.f_mean()) < 3.0),
        {
            let r = stats::correlation(&raw_v, &raw_r).abs();
            record("lemma5.corr_v_r", p, n, c, seed, r, 0.03, r < 0.03)
        },
        {
            let r = stats::correlation(&raw_v, &raw_s).abs();
            record("lemma5.corr_v_s", p, n, c, seed, r, 0.03, r < 0.03)
        },
    ])
}

pub fn run(args: &TheoryArgs, ctx: &Context) -> CliResult<()> {
    let loaded = run::load(ctx.config.as_deref(), "theory-check")?;
    let cfg: TheoryConfig = run::resolve(loaded.config, args.overrides())?;
    if !(cfg.c > 0.0 && cfg.c < 1.0) {
        return Err(CliError::usage(format!("c = {} must lie in (0, 1)", cfg.c)));
    }
    if cfg.seeds == 0 || cfg.reps < 2 || cfg.limit_reps < 2 || cfg.points == 0 {
        return Err(CliError::usage("seeds, points and reps must be positive (reps >= 2)"));
    }
    let seed = ctx.seed(loaded.seed);
    let mut out = Run::start(&ctx.outdir, "theory-check", &cfg, seed, ctx.jobs)?;

    let mut diagnostics: Vec<Diagnostic> = Vec::new();
    let mut runs: Vec<Diagnostic> = Vec::new();
    let mut m_zero = Vec::new();
    for check in &cfg.checks {
        match check {
            TheoryCheck::Transforms => {
                let (d, m0) = transforms(&cfg, seed)?;
                diagnostics.extend(d);
                m_zero = m0;
            }
            TheoryCheck::Lemma2 | TheoryCheck::Lemma3 => {
                let sigma = CovarianceMatrix::diagonal(&vec![1.0; cfg.p])?;
                let per_seed = map_indexed(Execution::Parallel, cfg.seeds, |i| {
                    let s = seed.wrapping_add(i as u64);
                    match check {
                        TheoryCheck::Lemma2 => lemma2_quadform_check(cfg.c, cfg.p, s).map(|d| d.records(cfg.threshold)),
                        _ => lemma3_quadform_check(cfg.c, cfg.p, &sigma, s).map(|d| d.records(cfg.threshold)),
                    }
                })
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
                diagnostics.extend(medians(per_seed.clone(), seed));
                runs.extend(per_seed.into_iter().flatten());
            }
            TheoryCheck::Lemma4 => diagnostics.extend(limit_laws(&cfg, seed)?),
            TheoryCheck::Lemma5 => diagnostics.extend(exact_laws(&cfg, seed)?),
        }
    }
    let m_zero_json: Vec<_> = m_zero.iter().map(|&(c, m)| json!({ "c": c, "m": m })).collect();
    out.write_json(
        "diagnostics.json",
        &json!({ "diagnostics": diagnostics, "m_at_zero": m_zero_json, "per_seed": runs }),
    )?;
    let dir = out.finish()?;

    let mut stdout = std::io::stdout().lock();
    for d in &diagnostics {
        writeln!(
            stdout,
            "{} {:<34} c = {:<4} value {:<12} threshold {}",
            if d.pass { "PASS" } else { "FAIL" },
            d.check,
            d.c,
            fmt_num(d.value),
            fmt_num(d.threshold)
        )?;
    }
    for (c, m) in &m_zero {
        writeln!(stdout, "m(0+) = {} at c = {c}", fmt_num(*m))?;
    }
    writeln!(stdout, "output {}", dir.display())?;

    let failed: Vec<&str> = diagnostics.iter().filter(|d| !d.pass).map(|d| d.check.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::check_failed(format!("{} check(s) failed: {}", failed.len(), failed.join(", "))))
    }
}
