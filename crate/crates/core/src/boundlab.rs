//! Empirical check of the geometric decay of the localized policy gap.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::localized::{synthesize_with, LocalizedModel, LocalizedOptions};
use crate::mdp::{backward_induction, evaluate_exact, InitialState, Mdp, SolveOptions};

/// `Q ≤ 4(L+1)G²` in learning units; this is the bound itself.
pub fn q_bound_from_consts(l: f64, g: f64) -> f64 {
    4.0 * (l + 1.0) * g * g
}

/// Largest possible cumulative cost over `horizon` slots: every device silent
/// every slot. Plays the role of `4(L+1)G²` when costs are normalized.
pub fn normalized_q_bound(mdp: &Mdp, horizon: usize) -> f64 {
    let topo = mdp.topology();
    let per_slot: f64 = (0..mdp.m()).map(|j| 1.0 - topo.weight(j, j)).sum();
    mdp.cost_scale() * per_slot * horizon as f64
}

/// `D = 32 γ m (L+1) G² |P|²` written through the Q bound.
pub fn d_analytic(gamma: f64, m: usize, n_joint_actions: usize, q_bound: f64) -> f64 {
    8.0 * gamma * m as f64 * q_bound * (n_joint_actions as f64).powi(2)
}

/// Largest temperature for which the decay guarantee holds (`D ≤ 1`).
pub fn gamma_cap(m: usize, n_joint_actions: usize, q_bound: f64) -> f64 {
    1.0 / (8.0 * m as f64 * q_bound * (n_joint_actions as f64).powi(2))
}

/// `(R, J(π_loc(R)) − J(π*))` for `R = 0..=r_max`. `opts.rounds` is ignored.
pub fn gap_curve(mdp: &Mdp, opts: &LocalizedOptions, init: &InitialState, r_max: usize) -> Result<Vec<(usize, f64)>> {
    let opt = backward_induction(mdp, opts.horizon, SolveOptions::default())?;
    let j_star = evaluate_exact(mdp, &opt.policy, init)?;
    let model = LocalizedModel::new(mdp, opts.kappa, opts.defaults, opts.max_local_entries)?;
    (0..=r_max)
        .into_par_iter()
        .map(|r| {
            let o = LocalizedOptions { rounds: r, ..*opts };
            let pol = synthesize_with(mdp, &model, &o)?;
            Ok((r, evaluate_exact(mdp, &pol, init)? - j_star))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Prefactor `C` in `gap(R) ≈ C·D̂^R`.
    pub c: f64,
    pub d_hat: f64,
    pub r2: f64,
    /// Two-sided p-value of the log-gap slope (NaN with a perfect fit or two points).
    pub p_value: f64,
    /// Points used after dropping the tail that reached numerical zero.
    pub points: usize,
}

/// Least squares of `ln gap` on `R` over the positive prefix of `curve`.
pub fn fit_rate(curve: &[(usize, f64)]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .take_while(|&&(_, g)| g > 1e-12)
        .map(|&(r, g)| (r as f64, g.ln()))
        .collect();
    let n = pts.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!("{n} positive gap points, need 4")));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - icept - slope * p.0).powi(2)).sum();
    let r2 = if syy <= 1e-24 { 1.0 } else { 1.0 - sse / syy };
    let p_value = if sse <= 1e-24 {
        f64::NAN
    } else {
        let se = (sse / (nf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 2.0).expect("positive degrees of freedom");
        2.0 * (1.0 - t.cdf((slope / se).abs()))
    };
    Ok(RateFit {
        c: icept.exp(),
        d_hat: slope.exp(),
        r2,
        p_value,
        points: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::testutil::tiny;
    use crate::topology::TopologyKind;

    #[test]
    fn geometric_series_is_recovered() {
        let curve: Vec<(usize, f64)> = (0..4).map(|r| (r, 0.5f64.powi(r as i32))).collect();
        let fit = fit_rate(&curve).unwrap();
        assert!((fit.d_hat - 0.5).abs() < 1e-12 && (fit.c - 1.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_has_unit_rate() {
        let fit = fit_rate(&[(0, 0.3), (1, 0.3), (2, 0.3), (3, 0.3), (4, 0.3)]).unwrap();
        assert!((fit.d_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_or_vanishing_curves_are_rejected() {
        assert!(matches!(fit_rate(&[(0, 1.0), (1, 0.1), (2, 0.01)]), Err(Error::InsufficientData(_))));
        let early_zero = [(0, 1.0), (1, 0.1), (2, 0.0), (3, 0.0), (4, 0.0)];
        assert!(fit_rate(&early_zero).is_err());
        let noisy = [(0, 1.0), (1, 0.4), (2, 0.2), (3, 0.05), (4, 0.03), (5, 0.0)];
        let fit = fit_rate(&noisy).unwrap();
        assert_eq!(fit.points, 5);
        assert!(fit.d_hat < 1.0 && fit.p_value < 0.05);
    }

    #[test]
    fn cap_gives_unit_rate() {
        let g = gamma_cap(3, 8, 2.5);
        assert!((d_analytic(g, 3, 8, 2.5) - 1.0).abs() < 1e-12);
        assert_eq!(q_bound_from_consts(1.0, 1.0), 8.0);
    }

    #[test]
    fn full_coverage_curve_is_nonnegative_and_reaches_optimum() {
        let mdp = tiny(TopologyKind::Complete, 3, 2, false);
        let init = InitialState::Distribution(mdp.steady_uniform_init());
        let curve = gap_curve(&mdp, &LocalizedOptions::new(1, 1e4, 0, 3), &init, 12).unwrap();
        assert_eq!(curve.len(), 13);
        assert!(curve.iter().all(|&(_, g)| g > -1e-9));
        assert!(curve[12].1 < 1e-3);
    }
}
