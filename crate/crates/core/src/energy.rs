//! Harvesting, battery dynamics and per-slot energy accounting.
//!
//! Battery levels are held as integer multiples of a quantum `Δb`, so level
//! index and quanta coincide: level `k` stores `k·Δb` joules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Solar panel area used by [`solar_harvest`] (m²).
pub const PANEL_AREA_M2: f64 = 25e-4;
/// Panel conversion efficiency used by [`solar_harvest`].
pub const PANEL_EFFICIENCY: f64 = 0.2;

/// Per-device computation and battery constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Local SGD steps per slot.
    pub k_steps: usize,
    /// CPU frequency (cycles/s).
    pub cpu_hz: f64,
    /// CPU cycles per sample.
    pub cycles_per_sample: f64,
    /// Mini-batch size.
    pub batch: usize,
    /// Effective switched capacitance multiplying `I²`; 1 keeps the bare product.
    #[serde(default = "one")]
    pub capacitance: f64,
    /// Transmission duration (s).
    pub tau: f64,
    /// Battery capacity (J).
    pub b_max: f64,
    /// Number of evenly spaced battery levels, including 0 and `b_max`.
    pub levels: usize,
}

fn one() -> f64 {
    1.0
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_steps == 0 || self.batch == 0 {
            return Err(Error::arg("local steps and batch size must be positive"));
        }
        for (name, v) in [
            ("cpu_hz", self.cpu_hz),
            ("cycles_per_sample", self.cycles_per_sample),
            ("capacitance", self.capacitance),
            ("tau", self.tau),
            ("b_max", self.b_max),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::arg(format!("{name} must be positive")));
            }
        }
        if self.levels < 2 {
            return Err(Error::arg("need at least two battery levels"));
        }
        Ok(())
    }

    /// Battery quantum `Δb` (J).
    pub fn quantum(&self) -> f64 {
        self.b_max / (self.levels - 1) as f64
    }

    pub fn level_joules(&self, k: usize) -> f64 {
        k as f64 * self.quantum()
    }

    /// Energy of one slot of local computation (J), unquantized.
    pub fn computation_energy(&self) -> f64 {
        self.k_steps as f64 * self.capacitance * self.cpu_hz.powi(2) * self.cycles_per_sample * self.batch as f64
    }

    /// Energy drawn in one slot, in battery quanta (round half up).
    pub fn consumed_quanta(&self, power: f64) -> usize {
        snap(self.raw_consumed(power), self.quantum())
    }

    fn raw_consumed(&self, power: f64) -> f64 {
        if power <= 0.0 {
            0.0
        } else {
            self.computation_energy() + power * self.tau
        }
    }
}

fn snap(joules: f64, quantum: f64) -> usize {
    // The epsilon absorbs representation error in values meant to sit on a half.
    (joules / quantum + 0.5 + 1e-9).floor() as usize
}

/// Energy drawn in one slot (J), rounded to the battery quantum.
///
/// `scheduled` must equal `power > 0`; a device that trains also transmits.
pub fn energy_consumed(power: f64, scheduled: bool, params: &EnergyParams) -> Result<f64> {
    if power < 0.0 || !power.is_finite() {
        return Err(Error::arg("transmit power must be non-negative"));
    }
    if scheduled != (power > 0.0) {
        return Err(Error::arg("a device is scheduled exactly when it transmits"));
    }
    Ok(params.consumed_quanta(power) as f64 * params.quantum())
}

/// Indices of `powers` affordable from battery level `b`.
pub fn feasible_actions(b: usize, powers: &[f64], params: &EnergyParams) -> Vec<usize> {
    powers
        .iter()
        .enumerate()
        .filter(|&(_, &p)| params.consumed_quanta(p) <= b)
        .map(|(k, _)| k)
        .collect()
}

/// `min(b + u - e, b_max)` on level indices.
pub fn battery_step(b: usize, u: usize, e: usize, levels: usize) -> Result<usize> {
    if e > b {
        return Err(Error::CausalityViolation { consumed: e, battery: b });
    }
    Ok((b - e + u).min(levels - 1))
}

/// I.i.d. per-slot harvest distribution (J).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestModel {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

impl HarvestModel {
    pub fn point(u: f64) -> Self {
        HarvestModel {
            support: vec![u],
            probs: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() || self.support.len() != self.probs.len() {
            return Err(Error::arg("harvest support and probabilities must match and be non-empty"));
        }
        if self.support.iter().any(|&u| u < 0.0 || !u.is_finite()) {
            return Err(Error::arg("harvest amounts must be non-negative"));
        }
        if self.probs.iter().any(|&p| p < 0.0) || (self.probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::arg("harvest probabilities must form a distribution"));
        }
        Ok(())
    }

    /// Snaps the support to the battery grid; returns `P(U = k quanta)` for `k < levels`
    /// with all mass at or above `levels - 1` folded into the last entry.
    pub fn quantize(&self, params: &EnergyParams) -> Result<QuantHarvest> {
        self.validate()?;
        let mut pmf = vec![0.0; params.levels];
        for (&u, &p) in self.support.iter().zip(&self.probs) {
            let k = snap(u, params.quantum()).min(params.levels - 1);
            pmf[k] += p;
        }
        Ok(QuantHarvest { pmf })
    }
}

/// Harvest distribution on the battery grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantHarvest {
    pmf: Vec<f64>,
}

impl QuantHarvest {
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Next-level distribution from post-decision level `y = b - e`.
    pub fn kernel_from(&self, y: usize) -> Vec<f64> {
        let n = self.pmf.len();
        let mut out = vec![0.0; n];
        for (u, &p) in self.pmf.iter().enumerate() {
            out[(y + u).min(n - 1)] += p;
        }
        out
    }

    /// Row-stochastic `levels × levels` matrix indexed by post-decision level.
    pub fn kernel_matrix(&self) -> Vec<f64> {
        (0..self.pmf.len()).flat_map(|y| self.kernel_from(y)).collect()
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        crate::channel::sample_index(&self.pmf, rng)
    }
}

/// Distribution of the next battery level given level `b` and consumption `e` (quanta).
pub fn battery_kernel(b: usize, e: usize, harvest: &QuantHarvest) -> Result<Vec<f64>> {
    if e > b {
        return Err(Error::CausalityViolation { consumed: e, battery: b });
    }
    Ok(harvest.kernel_from(b - e))
}

/// Harvest model from a discrete irradiance distribution (W/m²) over a slot of
/// `slot_s` seconds, using the reference panel.
pub fn solar_harvest(irradiance: &[f64], probs: &[f64], slot_s: f64) -> HarvestModel {
    HarvestModel {
        support: irradiance
            .iter()
            .map(|&g| g * PANEL_AREA_M2 * PANEL_EFFICIENCY * slot_s)
            .collect(),
        probs: probs.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit() -> EnergyParams {
        EnergyParams {
            k_steps: 1,
            cpu_hz: 1.0,
            cycles_per_sample: 1.0,
            batch: 1,
            capacitance: 1.0,
            tau: 1.0,
            b_max: 4.0,
            levels: 5,
        }
    }

    fn scenario() -> EnergyParams {
        EnergyParams {
            k_steps: 2,
            cpu_hz: 0.01,
            cycles_per_sample: 0.5,
            batch: 4,
            capacitance: 1.0,
            tau: 1e-3,
            b_max: 3e-3,
            levels: 4,
        }
    }

    #[test]
    fn consumption_examples() {
        let p = unit();
        assert_eq!(energy_consumed(0.0, false, &p).unwrap(), 0.0);
        assert_eq!(p.computation_energy() + 1.0 * p.tau, 2.0);
        assert_eq!(energy_consumed(1.0, true, &p).unwrap(), 2.0);
        assert!(energy_consumed(1.0, false, &p).is_err());
        // 2·0.01²·0.5·4 = 4e-4 J computing, 0.6·1e-3 = 6e-4 J sending.
        let s = scenario();
        assert!((s.computation_energy() - 4e-4).abs() < 1e-15);
        assert_eq!(s.consumed_quanta(0.6), 1);
        assert_eq!(s.consumed_quanta(1.6), 2);
        // 4e-4 + 1.1e-3 = 1.5 quanta rounds up.
        assert_eq!(s.consumed_quanta(1.1), 2);
        assert_eq!(s.consumed_quanta(0.0), 0);
    }

    #[test]
    fn feasibility() {
        let p = unit();
        let powers = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(feasible_actions(0, &powers, &p), vec![0]);
        assert_eq!(feasible_actions(4, &powers, &p), vec![0, 1, 2, 3]);
        for b in 0..5 {
            let expect: Vec<usize> = (0..4).filter(|&k| k < b || k == 0).collect();
            assert_eq!(feasible_actions(b, &powers, &p), expect);
        }
    }

    #[test]
    fn battery_steps() {
        assert_eq!(battery_step(4, 1, 0, 5).unwrap(), 4);
        assert_eq!(battery_step(2, 1, 1, 5).unwrap(), 2);
        assert!(matches!(battery_step(1, 0, 2, 5), Err(Error::CausalityViolation { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..1000 {
            let b = rng.random_range(0..5);
            let e = rng.random_range(0..=b);
            let u = rng.random_range(0..7);
            assert_eq!(battery_step(b, u, e, 5).unwrap(), (b + u - e).min(4));
        }
    }

    #[test]
    fn kernel_examples() {
        let p = unit();
        let zero = HarvestModel::point(0.0).quantize(&p).unwrap();
        assert_eq!(battery_kernel(3, 1, &zero).unwrap(), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let coin = HarvestModel {
            support: vec![0.0, 1.0],
            probs: vec![0.5, 0.5],
        }
        .quantize(&p)
        .unwrap();
        assert_eq!(battery_kernel(3, 0, &coin).unwrap(), vec![0.0, 0.0, 0.0, 0.5, 0.5]);
        assert!(battery_kernel(0, 1, &coin).is_err());
    }

    #[test]
    fn kernel_rows_and_sampling() {
        let p = unit();
        let h = HarvestModel {
            support: vec![0.0, 1.0, 3.0, 6.0],
            probs: vec![0.4, 0.3, 0.2, 0.1],
        }
        .quantize(&p)
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for b in 0..5 {
            for e in 0..=b {
                let row = battery_kernel(b, e, &h).unwrap();
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let n = 100_000;
                let mut counts = [0usize; 5];
                for _ in 0..n {
                    counts[battery_step(b, h.sample(&mut rng), e, 5).unwrap()] += 1;
                }
                for k in 0..5 {
                    assert!((counts[k] as f64 / n as f64 - row[k]).abs() < 0.01);
                }
            }
        }
    }

    #[test]
    fn solar_reference_panel() {
        let h = solar_harvest(&[0.0, 400.0], &[0.5, 0.5], 0.005);
        assert!((h.support[1] - 1e-3).abs() < 1e-15);
        let q = h.quantize(&scenario()).unwrap();
        assert_eq!(q.pmf(), &[0.5, 0.5, 0.0, 0.0]);
    }
}
