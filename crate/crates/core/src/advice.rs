//! Advice finders for the small- and medium-norm regimes, plus the direct
//! t-estimator they share. An advice is a value r ≥ t_μ handed to the base
//! estimator so it can pick a near-optimal sample count.

use crate::error::{Error, Result};
use crate::norm::{
    estimate_l2_moments, estimate_l3, estimate_l3_amplified, estimate_l3_magnitude,
};
use crate::oracle::Oracle;
use crate::report::{AdviceReport, TraceEntry};

/// Combination step of the direct t-estimator: the accurate pair (ℓ₂₂, ℓ₃₃)
/// yields Y₁, the coarse pair (ℓ′₂₂, ℓ′₃₃) yields the fallback Y₂, and the
/// output is min{2(Y₁ + δ), Y₂}.
pub fn t_directly_combine(
    l22: f64,
    l33: f64,
    l22_coarse: f64,
    l33_coarse: f64,
    delta: f64,
) -> (f64, f64, f64) {
    let y1 = (l33 / (l22 * l22) - 1.0).max(0.0);
    let y2 = 2.0 * l33_coarse / (l22_coarse / 1.5).powi(2);
    let out = (2.0 * (y1 + delta)).min(y2);
    (y1, y2, out)
}

/// Estimates t_μ by its definition: with probability ≥ 1 − eta the output
/// lies in [t_μ, 15t_μ + 3δ], and E[output] = O(t_μ + δ).
pub fn estimate_t_directly(
    oracle: &mut dyn Oracle,
    delta: f64,
    eta: f64,
    scale: f64,
) -> Result<AdviceReport> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta {delta} not in (0, 1]"
        )));
    }
    let eta_prime = eta.min(delta);
    let start = oracle.drawn();
    let l22 = estimate_l2_moments(oracle, delta / 40.0, eta_prime / 4.0, scale)?.value;
    let l33 = estimate_l3(oracle, delta / 30.0, eta_prime / 4.0, scale)?.value;
    let l22_coarse = estimate_l2_moments(oracle, 0.5, eta_prime / 4.0, scale)?.value;
    let l33_coarse = estimate_l3_amplified(oracle, 0.5, eta_prime / 4.0, scale)?.value;
    let (y1, y2, out) = t_directly_combine(l22, l33, l22_coarse, l33_coarse, delta);
    assert!(out <= y2 && out <= 2.0 * (y1 + delta));
    let samples = oracle.drawn() - start;
    Ok(AdviceReport::new(
        out,
        samples,
        vec![TraceEntry {
            proc: "estimate-t-directly",
            branch: format!("y1={y1:.6},y2={y2:.6}"),
            samples,
        }],
    ))
}

/// Reference magnitude a = ((9/2)·eps·ℓ₂^{3/2})^{1/3} for the small-norm
/// finder's L3 probe.
pub fn small_advice_magnitude(eps: f64, l2: f64) -> f64 {
    (4.5 * eps * l2.powf(1.5)).cbrt()
}

/// Advice finder for the small-‖μ‖₂ regime: a fixed-factor ‖μ‖₂² estimate
/// sizes an additive L3 probe, and (1 + 1/200)(ℓ₃ + a³)/ℓ₂² dominates t_μ
/// with probability ≥ 1 − eta at expected size O(t_μ + eps/‖μ‖₂ + 1).
pub fn find_advice_small(
    oracle: &mut dyn Oracle,
    eps: f64,
    eta: f64,
    scale: f64,
) -> Result<AdviceReport> {
    check_unit("eps", eps)?;
    let start = oracle.drawn();
    let l2 = estimate_l2_moments(oracle, 1.0 / 1000.0, eta / 2.0, scale)?.value;
    let a = small_advice_magnitude(eps, l2).min(1.0);
    let l3 = estimate_l3_magnitude(oracle, a, eta / 2.0, scale)?.value;
    let r = (1.0 + 1.0 / 200.0) * (l3 + a.powi(3)) / (l2 * l2);
    assert!(r >= 0.0);
    let samples = oracle.drawn() - start;
    Ok(AdviceReport::new(
        r,
        samples,
        vec![TraceEntry {
            proc: "find-advice-small",
            branch: format!("a={a:.6}"),
            samples,
        }],
    ))
}

/// The medium finder's resolution δ = min{1, eps/√ℓ₂}.
pub fn medium_advice_delta(eps: f64, l2: f64) -> f64 {
    (eps / l2.sqrt()).min(1.0)
}

/// Advice finder for the medium-‖μ‖₂ regime: picks δ ≈ eps/‖μ‖₂ from a rough
/// norm estimate and estimates t directly at that resolution.
pub fn find_advice_medium(
    oracle: &mut dyn Oracle,
    eps: f64,
    eta: f64,
    scale: f64,
) -> Result<AdviceReport> {
    check_unit("eps", eps)?;
    let start = oracle.drawn();
    let l2 = estimate_l2_moments(oracle, 0.1, 1.0 / 3.0, scale)?.value;
    let delta = medium_advice_delta(eps, l2);
    let inner = estimate_t_directly(oracle, delta, eta, scale)?;
    let samples = oracle.drawn() - start;
    let mut trace = inner.trace;
    trace.push(TraceEntry {
        proc: "find-advice-medium",
        branch: format!("delta={delta:.6}"),
        samples,
    });
    Ok(AdviceReport::new(inner.r, samples, trace))
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} {v} not in (0, 1]")))
    }
}
