//! The magnitude verifier and the top-level unbiased estimator.
//!
//! The top level classifies the input into one of three advice regimes from a
//! coarse norm estimate, double-checks a suspected non-small norm with the
//! magnitude verifier, obtains an advice r ≥ t_μ from the matching finder and
//! hands it to the unbiased base estimator. The output is exactly unbiased
//! regardless of which branch fired.

use crate::advice::{find_advice_medium, find_advice_small};
use crate::error::{Error, Result};
use crate::finite::find_advice_large;
use crate::norm::{estimate_l2_base, estimate_l2_bc, estimate_l2_moments};
use crate::oracle::{Oracle, ScopedBudget};
use crate::report::{AdviceReport, EstimateReport, TraceEntry};

/// The Markov budget of one verifier round: Q = ⌈scale·C_Q/eps⌉ with
/// C_Q = 2√2·10⁶, a constant upper bound consistent with the BC estimator's
/// expected cost over {ν : ‖ν‖₂ ≥ 2eps}; rounds are truncated at 12Q draws.
pub const MAGNITUDE_Q_CONSTANT: f64 = 2.0 * std::f64::consts::SQRT_2 * 1e6;

pub fn magnitude_round_budget(eps: f64, scale: f64) -> u64 {
    ((scale * MAGNITUDE_Q_CONSTANT / eps).ceil() as u64).max(1)
}

/// Verifier round count R = ⌈18 ln(2/(min{1, ℓ₂}·eta))⌉.
pub fn magnitude_rounds(ell2: f64, eta: f64) -> u64 {
    (18.0 * (2.0 / (ell2.min(1.0) * eta)).ln()).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magnitude {
    Accept,
    Reject,
}

#[derive(Debug, Clone)]
pub struct MagnitudeReport {
    pub decision: Magnitude,
    pub samples: u64,
    pub trace: Vec<TraceEntry>,
}

/// Distinguishes ‖μ‖₂ ≤ eps (accept, with probability ≥ 1 − min{O(‖μ‖₂²), eta})
/// from ‖μ‖₂ ≥ 2eps (reject, with probability ≥ 1 − eta). A cheap norm
/// estimate accepts immediately when the norm looks small; otherwise a
/// majority over R truncated BC rounds decides.
pub fn test_l2_magnitude(
    oracle: &mut dyn Oracle,
    eps: f64,
    eta: f64,
    scale: f64,
) -> Result<MagnitudeReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps {eps} must be positive")));
    }
    let round_budget = 12 * magnitude_round_budget(eps, scale);
    let eps = eps.min(0.25);
    let start = oracle.drawn();
    let ell1 = estimate_l2_bc(oracle, 0.25, eta / 2.0, scale)?.value;
    if ell1.sqrt() <= 1.5 * eps {
        let samples = oracle.drawn() - start;
        return Ok(MagnitudeReport {
            decision: Magnitude::Accept,
            samples,
            trace: vec![TraceEntry {
                proc: "test-L2-magnitude",
                branch: "accept-early".into(),
                samples,
            }],
        });
    }
    let ell2 = estimate_l2_moments(oracle, 0.25, 0.5, scale)?.value;
    let rounds = magnitude_rounds(ell2, eta);
    let mut heavy_rounds = 0u64;
    for _ in 0..rounds {
        let mut scoped = ScopedBudget::new(oracle, round_budget);
        let outcome = estimate_l2_bc(&mut scoped, 0.25, 0.25, scale);
        let ell_round = match outcome {
            Ok(rep) => Some(rep.value),
            Err(Error::BudgetExceeded { .. }) if scoped.exhausted() => None,
            Err(e) => return Err(e),
        };
        if let Some(v) = ell_round {
            if v.sqrt() >= 1.5 * eps {
                heavy_rounds += 1;
            }
        }
    }
    let decision = if heavy_rounds >= rounds / 2 {
        Magnitude::Reject
    } else {
        Magnitude::Accept
    };
    let samples = oracle.drawn() - start;
    Ok(MagnitudeReport {
        decision,
        samples,
        trace: vec![TraceEntry {
            proc: "test-L2-magnitude",
            branch: format!("rounds={rounds},heavy={heavy_rounds}"),
            samples,
        }],
    })
}

/// Which advice finder the top level selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdviceBranch {
    Small,
    Medium,
    Large,
}

impl AdviceBranch {
    pub fn name(self) -> &'static str {
        match self {
            AdviceBranch::Small => "small",
            AdviceBranch::Medium => "medium",
            AdviceBranch::Large => "large",
        }
    }
}

/// True iff the coarse estimate sends the run to the small-norm finder.
pub fn takes_small_branch(sqrt_ell: f64, eps: f64) -> bool {
    sqrt_ell <= 4.0 * eps
}

/// Given that the magnitude verifier rejected, true iff the run goes to the
/// medium finder rather than the large one.
pub fn takes_medium_branch(sqrt_ell: f64, eps: f64) -> bool {
    sqrt_ell <= 2.0 * eps.powf(2.0 / 3.0)
}

/// Source of the advice for the top-level estimator. The faithful source runs
/// the spec'd finders at the pipeline's own scale; the other implementations
/// exist for experiments and tests (forcing branches, or running the advice
/// stage at its own constant scale when the pipeline scale would make the
/// finders' inner fixed-accuracy sub-calls astronomically expensive).
pub trait AdviceStrategy {
    fn advise(
        &mut self,
        branch: AdviceBranch,
        oracle: &mut dyn Oracle,
        eps: f64,
        eta: f64,
        scale: f64,
    ) -> Result<AdviceReport>;
}

/// Runs the real finder for the branch at the pipeline scale.
pub struct FaithfulAdvice;

impl AdviceStrategy for FaithfulAdvice {
    fn advise(
        &mut self,
        branch: AdviceBranch,
        oracle: &mut dyn Oracle,
        eps: f64,
        eta: f64,
        scale: f64,
    ) -> Result<AdviceReport> {
        match branch {
            AdviceBranch::Small => find_advice_small(oracle, eps, eta, scale),
            AdviceBranch::Medium => find_advice_medium(oracle, eps, eta, scale),
            AdviceBranch::Large => find_advice_large(oracle, eps, eta, scale),
        }
    }
}

/// Runs the real finder with its own scale instead of the pipeline's.
pub struct RescaledAdvice(pub f64);

impl AdviceStrategy for RescaledAdvice {
    fn advise(
        &mut self,
        branch: AdviceBranch,
        oracle: &mut dyn Oracle,
        eps: f64,
        eta: f64,
        _scale: f64,
    ) -> Result<AdviceReport> {
        FaithfulAdvice.advise(branch, oracle, eps, eta, self.0)
    }
}

/// Injects a fixed advice value without sampling; for branch-forcing tests.
pub struct FixedAdvice(pub f64);

impl AdviceStrategy for FixedAdvice {
    fn advise(
        &mut self,
        branch: AdviceBranch,
        _oracle: &mut dyn Oracle,
        _eps: f64,
        _eta: f64,
        _scale: f64,
    ) -> Result<AdviceReport> {
        Ok(AdviceReport::new(
            self.0,
            0,
            vec![TraceEntry {
                proc: "fixed-advice",
                branch: branch.name().into(),
                samples: 0,
            }],
        ))
    }
}

/// The top-level unbiased estimator with the faithful advice source.
pub fn estimate_l2_top_level(
    oracle: &mut dyn Oracle,
    eps: f64,
    eta: f64,
    scale: f64,
) -> Result<EstimateReport> {
    estimate_l2_top_level_with(oracle, eps, eta, scale, &mut FaithfulAdvice)
}

/// The top-level unbiased estimator: classify, verify, find an advice, and
/// run the advised base estimator. Exactly one advice source fires per run;
/// the trace records which. E[output] = ‖μ‖₂² regardless of the branch, and
/// with probability ≥ 1 − eta the output is in (1 ± eps)‖μ‖₂².
pub fn estimate_l2_top_level_with(
    oracle: &mut dyn Oracle,
    eps: f64,
    eta: f64,
    scale: f64,
    advice_source: &mut dyn AdviceStrategy,
) -> Result<EstimateReport> {
    check_unit("eps", eps)?;
    if !(eta > 0.0 && eta <= 1.0 / 3.0) {
        return Err(Error::InvalidParameter(format!(
            "eta {eta} not in (0, 1/3]"
        )));
    }
    let start = oracle.drawn();
    let ell = estimate_l2_bc(oracle, 0.25, (eps * eps).min(eta / 4.0), scale)?.value;
    let sqrt_ell = ell.sqrt();

    let (branch_name, advice): (String, f64) = if takes_small_branch(sqrt_ell, eps) {
        let rep = advice_source.advise(AdviceBranch::Small, oracle, eps, eta / 4.0, scale)?;
        ("small".into(), rep.r)
    } else {
        let verdict = test_l2_magnitude(oracle, eps, eta / 4.0, scale)?;
        if verdict.decision == Magnitude::Accept {
            ("magnitude-accept".into(), 0.0)
        } else if takes_medium_branch(sqrt_ell, eps) {
            let rep = advice_source.advise(AdviceBranch::Medium, oracle, eps, eta / 4.0, scale)?;
            ("medium".into(), rep.r)
        } else {
            let rep = advice_source.advise(AdviceBranch::Large, oracle, eps, eta / 4.0, scale)?;
            ("large".into(), rep.r)
        }
    };

    let base = estimate_l2_base(oracle, eps, eta / 4.0, Some(advice), scale)?;
    let samples = oracle.drawn() - start;
    let mut trace = base.trace;
    trace.push(TraceEntry {
        proc: "estimate-L2-top-level",
        branch: format!("{branch_name},r={advice:.6}"),
        samples,
    });
    Ok(EstimateReport::new(base.value, samples, trace))
}

/// Branch recorded by a top-level report, for harness attribution.
pub fn report_branch(report: &EstimateReport) -> &str {
    report
        .top_branch()
        .and_then(|b| b.split(',').next())
        .unwrap_or("?")
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} {v} not in (0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{derive_seed, SampleOracle};
    use crate::zoo;

    #[test]
    fn branch_thresholds() {
        // ‖μ‖₂ = 0.5, eps = 0.01: 4ε = 0.04 < 0.5 and 2ε^{2/3} ≈ 0.0928 < 0.5
        assert!(!takes_small_branch(0.5, 0.01));
        assert!(!takes_medium_branch(0.5, 0.01));
        // small eps keeps nothing small; large eps sweeps everything small
        assert!(takes_small_branch(0.25, 0.25));
        assert!((2.0 * 0.01f64.powf(2.0 / 3.0) - 0.0928).abs() < 1e-3);
    }

    #[test]
    fn rounds_formula() {
        // ℓ₂ = 0.25, eta = 0.1 → ⌈18 ln 80⌉ = 79
        assert_eq!(magnitude_rounds(0.25, 0.1), 79);
    }

    #[test]
    fn magnitude_accepts_small_norm() {
        // uniform(10⁴): ‖μ‖₂ = 0.01 ≤ eps = 0.1
        let d = zoo::uniform(10_000).unwrap();
        let trials = 120;
        let mut accepts = 0u32;
        for t in 0..trials {
            let mut o = SampleOracle::new(&d, derive_seed(0xA1, t));
            let rep = test_l2_magnitude(&mut o, 0.1, 0.1, 1e-4).unwrap();
            if rep.decision == Magnitude::Accept {
                accepts += 1;
            }
        }
        assert!(accepts as f64 / trials as f64 >= 0.9);
    }

    #[test]
    fn magnitude_rejects_large_norm() {
        // uniform(4): ‖μ‖₂ = 0.5 ≥ 2·0.1
        let d = zoo::uniform(4).unwrap();
        let trials = 120;
        let mut rejects = 0u32;
        for t in 0..trials {
            let mut o = SampleOracle::new(&d, derive_seed(0xA2, t));
            let rep = test_l2_magnitude(&mut o, 0.1, 0.1, 1e-4).unwrap();
            if rep.decision == Magnitude::Reject {
                rejects += 1;
            }
        }
        assert!(rejects as f64 / trials as f64 >= 0.9);
    }

    #[test]
    fn exactly_one_branch_fires() {
        let d = zoo::uniform(16).unwrap();
        let mut o = SampleOracle::new(&d, 51);
        let rep =
            estimate_l2_top_level_with(&mut o, 0.25, 1.0 / 3.0, 1e-4, &mut FixedAdvice(0.0))
                .unwrap();
        let tops: Vec<&str> = rep
            .trace
            .iter()
            .filter(|t| t.proc == "estimate-L2-top-level")
            .map(|t| t.branch.as_str())
            .collect();
        assert_eq!(tops.len(), 1);
        assert!(tops[0].starts_with("small"), "branch {}", tops[0]);
    }

    #[test]
    fn unbiased_with_each_forced_branch() {
        // The base estimator is unbiased for every advice value, so forcing
        // any branch keeps E[output] = ‖μ‖₂².
        let d = zoo::uniform(16).unwrap();
        let truth = d.l2_squared();
        for advice in [0.0, 2.0] {
            let trials = 3000;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for t in 0..trials {
                let mut o = SampleOracle::new(&d, derive_seed(0xF0 + advice as u64, t));
                let rep = estimate_l2_top_level_with(
                    &mut o,
                    0.25,
                    1.0 / 3.0,
                    1e-5,
                    &mut FixedAdvice(advice),
                )
                .unwrap();
                sum += rep.value;
                sum_sq += rep.value * rep.value;
            }
            let mean = sum / trials as f64;
            let var = sum_sq / trials as f64 - mean * mean;
            let se = (var / trials as f64).sqrt().max(1e-12);
            assert!(
                (mean - truth).abs() <= 4.0 * se,
                "advice {advice}: mean {mean} vs {truth} (se {se})"
            );
        }
    }
}
