//! CSV emitters for simulation results.

use std::io::Write;

use super::{FrontierComparison, HistogramData, LossRow, MonteCarloResult};
use crate::error::Result;

/// `p,n,c,scenario,estimator,param,mean_loss,q05,q95`
pub fn write_losses<W: Write>(w: W, rows: &[LossRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// `bin_lo,bin_hi,count`
pub fn write_histogram<W: Write>(w: W, h: &HistogramData) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_lo", "bin_hi", "count"])?;
    for (i, count) in h.counts.iter().enumerate() {
        out.write_record([h.edges[i].to_string(), h.edges[i + 1].to_string(), count.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `x,density`
pub fn write_density<W: Write>(w: W, h: &HistogramData) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "density"])?;
    for (x, d) in h.grid.iter().zip(&h.density) {
        out.write_record([x.to_string(), d.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `V,R,kind`, long format; grid points left of a curve's vertex are omitted.
pub fn write_frontiers<W: Write>(w: W, cmp: &FrontierComparison) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["V", "R", "kind"])?;
    for curve in std::iter::once(&cmp.population).chain(&cmp.curves) {
        for (v, r) in cmp.grid.iter().zip(&curve.r) {
            if let Some(r) = r {
                out.write_record([v.to_string(), r.to_string(), curve.label().to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// `rep,estimator,r_gmv,v_gmv,slope`, one row per successful estimate.
pub fn write_replications<W: Write>(w: W, res: &MonteCarloResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rep", "estimator", "r_gmv", "v_gmv", "slope"])?;
    for (k, kind) in res.kinds.iter().enumerate() {
        for (rep, est) in res.estimates[k].iter().enumerate() {
            if let Some(e) = est {
                let fp = e.params;
                out.write_record([
                    rep.to_string(),
                    kind.to_string(),
                    fp.r_gmv.to_string(),
                    fp.v_gmv.to_string(),
                    fp.slope.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
