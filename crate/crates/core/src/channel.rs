//! Finite-state Markov fading on D2D links and the interference-coupled
//! packet error model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Topology;

const ROW_TOL: f64 = 1e-12;
const STEADY_TOL: f64 = 1e-10;

/// Ascending channel power gains `H_1 < ... < H_{N_h}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GainLevels(Vec<f64>);

impl GainLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::arg("need at least two gain levels"));
        }
        if levels.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::arg("gain levels must be positive and finite"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::arg("gain levels must be strictly increasing"));
        }
        Ok(GainLevels(levels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for GainLevels {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        GainLevels::new(v)
    }
}

impl From<GainLevels> for Vec<f64> {
    fn from(g: GainLevels) -> Self {
        g.0
    }
}

/// Homogeneous Markov chain over gain levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelChain {
    levels: GainLevels,
    psi: Vec<f64>,
    steady: Vec<f64>,
}

impl ChannelChain {
    /// Tridiagonal chain from level-crossing rates.
    ///
    /// `crossing(k)` is the crossing rate at the lower threshold of level `k`
    /// (0-based); the value for `k = 0` is never used. Row `k` moves up with
    /// probability `Z(H_{k+1}) τ / P(H_k)`, down with `Z(H_k) τ / P(H_k)` and
    /// stays otherwise; boundary rows drop the missing branch.
    pub fn from_crossing(
        levels: GainLevels,
        crossing: impl Fn(usize) -> f64,
        steady: &[f64],
        tau: f64,
    ) -> Result<Self> {
        let n = levels.len();
        if steady.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} steady probabilities for {n} levels",
                steady.len()
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::arg("slot duration must be positive"));
        }
        check_distribution(steady, "steady distribution")?;
        if steady.iter().any(|&p| p <= 0.0) {
            return Err(Error::arg("steady probabilities must be positive"));
        }
        let mut psi = vec![0.0; n * n];
        for k in 0..n {
            let up = if k + 1 < n { crossing(k + 1) * tau / steady[k] } else { 0.0 };
            let down = if k > 0 { crossing(k) * tau / steady[k] } else { 0.0 };
            if up < 0.0 || down < 0.0 || !up.is_finite() || !down.is_finite() {
                return Err(Error::InvalidParameters(format!("negative crossing rate at level {k}")));
            }
            let stay = 1.0 - up - down;
            if stay < 0.0 {
                return Err(Error::InvalidParameters(format!(
                    "self-transition of level {k} is {stay:.4}: slot too long for slow fading"
                )));
            }
            psi[k * n + k] = stay;
            if k + 1 < n {
                psi[k * n + k + 1] = up;
            }
            if k > 0 {
                psi[k * n + k - 1] = down;
            }
        }
        let chain = ChannelChain {
            levels,
            psi,
            steady: steady.to_vec(),
        };
        chain.check_steady()?;
        Ok(chain)
    }

    /// Chain from an explicit row-stochastic matrix; the stationary law is computed.
    pub fn from_matrix(levels: GainLevels, psi: Vec<f64>) -> Result<Self> {
        let n = levels.len();
        if psi.len() != n * n {
            return Err(Error::ShapeMismatch(format!("transition matrix must be {n}x{n}")));
        }
        for k in 0..n {
            check_distribution(&psi[k * n..(k + 1) * n], &format!("row {k}"))?;
        }
        let steady = stationary(n, &psi);
        Ok(ChannelChain { levels, psi, steady })
    }

    pub fn identity(levels: GainLevels) -> Self {
        let n = levels.len();
        let mut psi = vec![0.0; n * n];
        for k in 0..n {
            psi[k * n + k] = 1.0;
        }
        ChannelChain {
            levels,
            psi,
            steady: vec![1.0 / n as f64; n],
        }
    }

    /// Rayleigh fading quantized into `n` equiprobable power-gain bins.
    ///
    /// Each level is the conditional mean gain of its bin and crossing rates
    /// follow the Rayleigh level-crossing formula at the bin thresholds.
    pub fn rayleigh(n: usize, mean_gain: f64, doppler_hz: f64, tau: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::arg("need at least two channel states"));
        }
        if !(mean_gain > 0.0) || doppler_hz < 0.0 {
            return Err(Error::arg("mean gain must be positive, Doppler non-negative"));
        }
        let rho = mean_gain;
        let thresholds: Vec<f64> = (0..=n)
            .map(|k| {
                if k == n {
                    f64::INFINITY
                } else {
                    -rho * (1.0 - k as f64 / n as f64).ln()
                }
            })
            .collect();
        let p = 1.0 / n as f64;
        let levels: Vec<f64> = (0..n)
            .map(|k| {
                let (a, b) = (thresholds[k], thresholds[k + 1]);
                let upper = if b.is_finite() { (b + rho) * (-b / rho).exp() } else { 0.0 };
                ((a + rho) * (-a / rho).exp() - upper) / p
            })
            .collect();
        let crossing = |k: usize| {
            let g = thresholds[k];
            (2.0 * std::f64::consts::PI * g / rho).sqrt() * doppler_hz * (-g / rho).exp()
        };
        Self::from_crossing(GainLevels::new(levels)?, crossing, &vec![p; n], tau)
    }

    pub fn n(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &GainLevels {
        &self.levels
    }

    #[inline]
    pub fn gain(&self, k: usize) -> f64 {
        self.levels.0[k]
    }

    pub fn steady(&self) -> &[f64] {
        &self.steady
    }

    pub fn matrix(&self) -> &[f64] {
        &self.psi
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.n();
        &self.psi[k * n..(k + 1) * n]
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        sample_index(self.row(k), rng)
    }

    fn check_steady(&self) -> Result<()> {
        let n = self.n();
        for j in 0..n {
            let v: f64 = (0..n).map(|k| self.steady[k] * self.psi[k * n + j]).sum();
            if (v - self.steady[j]).abs() > STEADY_TOL {
                return Err(Error::InvalidParameters(format!(
                    "steady distribution not preserved at level {j}"
                )));
            }
        }
        Ok(())
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::arg(format!("{what} has negative entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(Error::arg(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn stationary(n: usize, psi: &[f64]) -> Vec<f64> {
    // Lazy power iteration converges for any stochastic matrix, periodic or not.
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let mut next = vec![0.0; n];
        for k in 0..n {
            for j in 0..n {
                next[j] += pi[k] * 0.5 * (psi[k * n + j] + if k == j { 1.0 } else { 0.0 });
            }
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    pi
}

/// Draws an index from a probability row.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Assignment of fading chains to directed links.
///
/// With reciprocity one chain ("slot") serves both directions of an edge;
/// otherwise every directed link `j -> i` has its own slot. Device `i`'s state
/// carries the slots of its incoming links.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap {
    m: usize,
    reciprocal: bool,
    slot_index: Vec<Option<usize>>,
    owners: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

impl ChannelMap {
    pub fn new(topo: &Topology, reciprocal: bool) -> Self {
        let m = topo.m();
        let mut slot_index = vec![None; m * m];
        let mut owners: Vec<Vec<usize>> = Vec::new();
        if reciprocal {
            for (i, j) in topo.edges() {
                let s = owners.len();
                owners.push(vec![i, j]);
                slot_index[i * m + j] = Some(s);
                slot_index[j * m + i] = Some(s);
            }
        } else {
            for i in 0..m {
                for &j in topo.neighbors(i) {
                    slot_index[i * m + j] = Some(owners.len());
                    owners.push(vec![i]);
                }
            }
        }
        let incoming = (0..m)
            .map(|i| {
                let mut v: Vec<usize> = topo
                    .neighbors(i)
                    .iter()
                    .filter_map(|&j| slot_index[i * m + j])
                    .collect();
                v.sort_unstable();
                v
            })
            .collect();
        ChannelMap {
            m,
            reciprocal,
            slot_index,
            owners,
            incoming,
        }
    }

    pub fn reciprocal(&self) -> bool {
        self.reciprocal
    }

    pub fn slot_count(&self) -> usize {
        self.owners.len()
    }

    /// Slot holding the gain of the link from transmitter `j` to receiver `i`.
    #[inline]
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        self.slot_index[i * self.m + j]
    }

    /// Devices whose local state includes `slot`.
    pub fn owners(&self, slot: usize) -> &[usize] {
        &self.owners[slot]
    }

    /// Slots in device `i`'s local state.
    pub fn device_slots(&self, i: usize) -> &[usize] {
        &self.incoming[i]
    }
}

/// Current gain-level index of every slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkGainState(pub Vec<usize>);

/// Advances every slot one step along its own chain.
pub fn step_links<R: Rng + ?Sized>(state: &LinkGainState, chains: &[ChannelChain], rng: &mut R) -> LinkGainState {
    LinkGainState(
        state
            .0
            .iter()
            .zip(chains)
            .map(|(&k, chain)| chain.sample_next(k, rng))
            .collect(),
    )
}

/// Radio constants shared by every link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Waterfall threshold φ.
    pub phi: f64,
    /// Noise variance σ_i² at each receiver.
    pub sigma2: Vec<f64>,
    /// Transmission duration (s).
    pub tau: f64,
}

impl RadioParams {
    pub fn uniform(phi: f64, sigma2: f64, tau: f64, m: usize) -> Self {
        RadioParams {
            phi,
            sigma2: vec![sigma2; m],
            tau,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.phi > 0.0) || !(self.tau > 0.0) {
            return Err(Error::arg("phi and tau must be positive"));
        }
        if self.sigma2.len() != m || self.sigma2.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::arg(format!("need {m} positive noise variances")));
        }
        Ok(())
    }
}

/// `1 - exp(-φ (interference + σ²) / (p h))`, or 1 when the transmitter is silent.
#[inline]
pub fn error_rate(phi: f64, sigma2: f64, power: f64, gain: f64, interference: f64) -> f64 {
    if power <= 0.0 {
        return 1.0;
    }
    let x = phi * (interference + sigma2) / (power * gain);
    -(-x).exp_m1()
}

/// Packet error rate of the link from `j` to its neighbour `i`.
///
/// `gain(slot)` returns the current power gain of a channel slot; all
/// neighbours of `i` other than `j` interfere.
pub fn packet_error_rate(
    topo: &Topology,
    map: &ChannelMap,
    radio: &RadioParams,
    powers: &[f64],
    gain: impl Fn(usize) -> f64,
    i: usize,
    j: usize,
) -> Result<f64> {
    if powers.len() != topo.m() {
        return Err(Error::ShapeMismatch(format!("{} powers for {} devices", powers.len(), topo.m())));
    }
    if let Some(k) = powers.iter().position(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::arg(format!("negative transmit power for device {k}")));
    }
    let own = map
        .slot(i, j)
        .ok_or_else(|| Error::arg(format!("{j} is not a neighbour of {i}")))?;
    let interference: f64 = topo
        .neighbors(i)
        .iter()
        .filter(|&&k| k != j)
        .map(|&k| powers[k] * gain(map.slot(i, k).expect("neighbour slot")))
        .sum();
    Ok(error_rate(radio.phi, radio.sigma2[i], powers[j], gain(own), interference))
}

/// Success indicator: 1 with probability `1 - q`.
pub fn sample_success<R: Rng + ?Sized>(q: f64, rng: &mut R) -> bool {
    success_from_uniform(q, rng.random())
}

/// Success decision from a pre-drawn uniform, for common random numbers.
#[inline]
pub fn success_from_uniform(q: f64, u: f64) -> bool {
    u >= q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::TopologyKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_levels() -> GainLevels {
        GainLevels::new(vec![0.5, 2.0]).unwrap()
    }

    #[test]
    fn two_state_chain_from_crossing() {
        // Z(H_2)τ = 0.1·P(H_1) = 0.2·P(H_2) forces P = (2/3, 1/3).
        let steady = [2.0 / 3.0, 1.0 / 3.0];
        let z2 = 0.1 * steady[0];
        let c = ChannelChain::from_crossing(two_levels(), |_| z2, &steady, 1.0).unwrap();
        let expect = [0.9, 0.1, 0.2, 0.8];
        for (a, b) in c.matrix().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        // Solve πP = π directly: π1·0.1 = π2·0.2.
        let pi1 = 0.2 / 0.3;
        assert!((c.steady()[0] - pi1).abs() < 1e-12);
    }

    #[test]
    fn zero_crossing_is_identity() {
        let c = ChannelChain::from_crossing(two_levels(), |_| 0.0, &[0.5, 0.5], 1.0).unwrap();
        assert_eq!(c.matrix(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn three_state_symmetric_is_tridiagonal() {
        let levels = GainLevels::new(vec![0.2, 1.0, 3.0]).unwrap();
        let steady = [1.0 / 3.0; 3];
        let c = ChannelChain::from_crossing(levels, |k| [0.0, 0.05, 0.05][k], &steady, 2.0).unwrap();
        // Direct evaluation: 0.05·2/(1/3) = 0.3 per branch.
        let expect = [0.7, 0.3, 0.0, 0.3, 0.4, 0.3, 0.0, 0.3, 0.7];
        for (a, b) in c.matrix().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        for k in 0..3 {
            assert!((c.row(k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_long_slot_is_rejected() {
        let r = ChannelChain::from_crossing(two_levels(), |_| 1.0, &[0.5, 0.5], 1.0);
        assert!(matches!(r, Err(Error::InvalidParameters(_))));
    }

    #[test]
    fn rayleigh_chain_preserves_steady() {
        for n in 2..7 {
            let c = ChannelChain::rayleigh(n, 1.0, 50.0, 1e-3).unwrap();
            let m = c.n();
            for j in 0..m {
                let v: f64 = (0..m).map(|k| c.steady()[k] * c.row(k)[j]).sum();
                assert!((v - c.steady()[j]).abs() < 1e-8);
            }
            // Conditional means average back to the mean gain.
            let mean: f64 = c.levels().as_slice().iter().sum::<f64>() / n as f64;
            assert!((mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_and_permutation_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let id = ChannelChain::identity(two_levels());
        let s = LinkGainState(vec![0, 1, 1]);
        assert_eq!(step_links(&s, &vec![id.clone(); 3], &mut rng), s);
        let flip = ChannelChain::from_matrix(two_levels(), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(step_links(&LinkGainState(vec![0]), &[flip], &mut rng).0, vec![1]);
    }

    #[test]
    fn empirical_transitions_match_rows() {
        let c = ChannelChain::from_crossing(
            GainLevels::new(vec![0.2, 1.0, 3.0]).unwrap(),
            |k| [0.0, 0.1, 0.08][k],
            &[0.3, 0.4, 0.3],
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [[0usize; 3]; 3];
        let mut k = 0;
        for _ in 0..100_000 {
            let next = c.sample_next(k, &mut rng);
            counts[k][next] += 1;
            k = next;
        }
        for a in 0..3 {
            let total: usize = counts[a].iter().sum();
            for b in 0..3 {
                let f = counts[a][b] as f64 / total as f64;
                assert!((f - c.row(a)[b]).abs() < 0.01, "({a},{b}) {f} vs {}", c.row(a)[b]);
            }
        }
    }

    #[test]
    fn per_examples() {
        let topo = Topology::build(TopologyKind::Line, 3, 0).unwrap();
        let map = ChannelMap::new(&topo, true);
        let radio = RadioParams::uniform(1.0, 1.0, 1.0, 3);
        // Receiver 1 hears 0 with 2 interfering; unit everything gives 1 - e^-2.
        let q = packet_error_rate(&topo, &map, &radio, &[1.0, 0.0, 1.0], |_| 1.0, 1, 0).unwrap();
        assert!((q - (1.0 - (-2.0f64).exp())).abs() < 1e-15);
        assert!((q - 0.864664716763387).abs() < 1e-12);
        let silent = packet_error_rate(&topo, &map, &radio, &[0.0, 0.0, 1.0], |_| 1.0, 1, 0).unwrap();
        assert_eq!(silent, 1.0);
        let loud = 1e6 * 1.0 / (1.0 * 1.0);
        let q = packet_error_rate(&topo, &map, &radio, &[loud, 0.0, 0.0], |_| 1.0, 1, 0).unwrap();
        assert!(q < 1e-6);
        assert!(packet_error_rate(&topo, &map, &radio, &[-1.0, 0.0, 0.0], |_| 1.0, 1, 0).is_err());
        assert!(packet_error_rate(&topo, &map, &radio, &[1.0, 0.0, 0.0], |_| 1.0, 2, 0).is_err());
    }

    #[test]
    fn per_monotone_on_grid() {
        let mut prev_own = 1.0;
        for k in 1..50 {
            let p = k as f64 * 0.1;
            let q = error_rate(0.7, 0.3, p, 0.9, 0.4);
            assert!(q < prev_own && (0.0..=1.0).contains(&q));
            prev_own = q;
            let mut prev_int = 0.0;
            for l in 0..50 {
                let qi = error_rate(0.7, 0.3, p, 0.9, l as f64 * 0.1);
                assert!(qi > prev_int || l == 0 || (qi == prev_int && qi > 1.0 - 1e-12));
                prev_int = qi;
            }
        }
    }

    #[test]
    fn success_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!((0..1000).all(|_| sample_success(0.0, &mut rng)));
        assert!((0..1000).all(|_| !sample_success(1.0, &mut rng)));
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_success(0.3, &mut rng)).count();
        assert!((hits as f64 / n as f64 - 0.7).abs() < 0.01);
    }

    #[test]
    fn channel_map_slots() {
        let topo = Topology::build(TopologyKind::Ring, 4, 0).unwrap();
        let rec = ChannelMap::new(&topo, true);
        assert_eq!(rec.slot_count(), 4);
        assert_eq!(rec.slot(0, 1), rec.slot(1, 0));
        assert_eq!(rec.slot(0, 2), None);
        assert_eq!(rec.device_slots(0).len(), 2);
        let dir = ChannelMap::new(&topo, false);
        assert_eq!(dir.slot_count(), 8);
        assert_ne!(dir.slot(0, 1), dir.slot(1, 0));
        assert_eq!(dir.owners(dir.slot(0, 1).unwrap()), &[0]);
    }
}
