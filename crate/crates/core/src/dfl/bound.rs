//! Right-hand side of the convergence bound for the average model.

use serde::Serialize;

use super::sim::SlotRecord;
use super::task::LearnConsts;
use crate::error::{Error, Result};
use crate::topology::Topology;

/// The six terms of the bound, in order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTerms {
    pub initial: f64,
    pub variance: f64,
    pub variance_fast: f64,
    pub consensus: f64,
    pub consensus_fast: f64,
    /// Non-vanishing error from skipped devices and dropped packets.
    pub participation: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.initial + self.variance + self.variance_fast + self.consensus + self.consensus_fast + self.participation
    }

    pub fn transient(&self) -> f64 {
        self.total() - self.participation
    }
}

/// Participation sum `Σ_t Σ_j Σ_{i≠j} (((m−1) a_ij q_ijt − 1) β_jt + 1)`.
pub fn participation_sum(topo: &Topology, trace: &[SlotRecord]) -> f64 {
    let m = topo.m();
    let mut total = 0.0;
    for rec in trace {
        for j in 0..m {
            let b = f64::from(u8::from(rec.beta[j]));
            for i in (0..m).filter(|&i| i != j) {
                total += ((m as f64 - 1.0) * topo.weight(i, j) * rec.q[i * m + j] - 1.0) * b + 1.0;
            }
        }
    }
    total
}

/// Evaluates every term for a run of `trace.len()` slots. `initial_gap` is
/// `F(w̄_1) − F(w*)` or any upper bound on it.
pub fn convergence_bound(consts: &LearnConsts, topo: &Topology, initial_gap: f64, trace: &[SlotRecord]) -> Result<BoundTerms> {
    let m = topo.m();
    let t = trace.len();
    if m < 2 || t == 0 {
        return Err(Error::arg("the bound needs at least two devices and one slot"));
    }
    if trace.iter().any(|r| r.beta.len() != m || r.q.len() != m * m) {
        return Err(Error::ShapeMismatch("trace does not match the topology".into()));
    }
    let lambda = topo.lambda();
    if !(lambda < 1.0) {
        return Err(Error::arg("mixing matrix has no spectral gap"));
    }
    let (mf, tf, kf) = (m as f64, t as f64, consts.k_steps as f64);
    let (l, g2, c1) = (consts.l, consts.g * consts.g, consts.c1());
    let c2 = c1 + 4.0 * kf * g2;
    let gap = 1.0 - lambda;
    Ok(BoundTerms {
        initial: 256.0 * l * initial_gap / (mf * tf).sqrt(),
        variance: mf.sqrt() * c1 / (2.0 * kf * tf.sqrt()),
        variance_fast: mf * c1 / (256.0 * kf * tf),
        consensus: mf.sqrt() * c2 / (128.0 * gap * kf * tf.powf(1.5)),
        consensus_fast: mf * c2 / (128.0 * 128.0 * gap * kf * tf * tf),
        participation: 4.0 * (kf * l + kf.sqrt()) * g2 / ((mf - 1.0) * kf * tf) * participation_sum(topo, trace),
    })
}
