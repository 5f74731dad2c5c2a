//! Generic probabilistic combinators: median amplification, additive
//! indicator estimation, and crash-guarded rejection sampling.

use crate::dist::Label;
use crate::error::{Error, Result};
use crate::oracle::Oracle;
use crate::report::EstimateReport;

/// Number of independent copies the median amplifier runs to push a
/// 2/3-confidence estimate to confidence 1 − eta.
pub fn amplification_rounds(eta: f64) -> u64 {
    if eta >= 1.0 / 3.0 {
        1
    } else {
        (18.0 * (1.0 / eta).ln()).ceil() as u64
    }
}

/// Runs `q = ⌈18 ln(1/eta)⌉` independent copies of `base` and returns their
/// lower median (rank ⌊q/2⌋, minimum at rank 1). For eta ≥ 1/3 a single run
/// is returned unchanged. Sample accounting is the caller's: copies execute
/// sequentially on whatever oracle `base` captures, so the cost is the sum of
/// the copies' costs.
pub fn amplify_median<F>(eta: f64, mut base: F) -> Result<f64>
where
    F: FnMut() -> Result<f64>,
{
    let q = amplification_rounds(eta);
    if q == 1 {
        return base();
    }
    let mut outcomes = Vec::with_capacity(q as usize);
    for _ in 0..q {
        outcomes.push(base()?);
    }
    Ok(lower_median(&mut outcomes))
}

/// Lower median: the value of rank ⌊q/2⌋ (1-based), clamped to rank 1.
pub fn lower_median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    let rank = (values.len() / 2).max(1);
    let (_, median, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *median
}

/// A black box that draws one sample per call and reports whether the sampled
/// label satisfies the predicate. Houses p = E[indicator].
pub struct IndicatorOracle<'a, F: Fn(Label) -> bool> {
    oracle: &'a mut dyn Oracle,
    predicate: F,
}

impl<'a, F: Fn(Label) -> bool> IndicatorOracle<'a, F> {
    pub fn new(oracle: &'a mut dyn Oracle, predicate: F) -> Self {
        Self { oracle, predicate }
    }

    /// Consumes exactly one sample.
    pub fn sample(&mut self) -> Result<bool> {
        Ok((self.predicate)(self.oracle.draw()?))
    }

    pub fn drawn(&self) -> u64 {
        self.oracle.drawn()
    }
}

/// First-phase call count M₁ = ⌈12 ln(10/eta)/eps⌉.
pub fn indicator_phase_one(eps: f64, eta: f64) -> u64 {
    (12.0 * (10.0 / eta).ln() / eps).ceil() as u64
}

/// Second-phase call count M₂ = ⌈6 ln(10/eta)(s1/m1 + eps)/eps²⌉.
pub fn indicator_phase_two(eps: f64, eta: f64, s1: u64, m1: u64) -> u64 {
    ((6.0 * (10.0 / eta).ln()) * (s1 as f64 / m1 as f64 + eps) / (eps * eps)).ceil() as u64
}

/// Unbiased additive estimator for p = E[indicator]: a cheap first phase
/// determines the magnitude of p, the second phase sizes itself by it. The
/// output is S₂/M₂ with E[output] = p exactly and |output − p| ≤ eps with
/// probability ≥ 1 − eta. Consumes exactly M₁ + M₂ calls; M₂ is a function of
/// S₁ alone.
pub fn estimate_indicator_additive<F: Fn(Label) -> bool>(
    indicator: &mut IndicatorOracle<'_, F>,
    eps: f64,
    eta: f64,
) -> Result<EstimateReport> {
    check_unit("eps", eps)?;
    check_eta(eta)?;
    let start = indicator.drawn();
    let m1 = indicator_phase_one(eps, eta);
    let mut s1 = 0u64;
    for _ in 0..m1 {
        if indicator.sample()? {
            s1 += 1;
        }
    }
    let m2 = indicator_phase_two(eps, eta, s1, m1);
    let mut s2 = 0u64;
    for _ in 0..m2 {
        if indicator.sample()? {
            s2 += 1;
        }
    }
    let samples = indicator.drawn() - start;
    debug_assert_eq!(samples, m1 + m2);
    Ok(EstimateReport::leaf(
        s2 as f64 / m2 as f64,
        samples,
        "estimate-indicator-additive",
        format!("m1={m1},m2={m2}"),
    ))
}

/// Exact sampling from the conditional distribution μ_A by rejection.
///
/// Serving the i-th request is allowed to push the cumulative number of base
/// draws (across all requests so far) up to 4·(i + ⌈12 ln(1/eta)⌉); running
/// past that crashes the sampler. If μ(A) > 1/2 the sampler survives
/// arbitrarily many requests with probability ≥ 1 − eta. A crash is reported
/// as [`Error::RejectionCrash`], a distinguished result for the caller to
/// interpret.
pub struct ConditionalOracle<'a, F: Fn(Label) -> bool> {
    base: &'a mut dyn Oracle,
    membership: F,
    log_term: u64,
    served: u64,
    consumed: u64,
}

impl<'a, F: Fn(Label) -> bool> ConditionalOracle<'a, F> {
    pub fn new(base: &'a mut dyn Oracle, membership: F, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(Self {
            base,
            membership,
            log_term: (12.0 * (1.0 / eta).ln()).ceil() as u64,
            served: 0,
            consumed: 0,
        })
    }

    /// Cumulative draw allowance while serving request number `i` (1-based).
    pub fn budget_for_request(&self, i: u64) -> u64 {
        4 * (i + self.log_term)
    }

    pub fn served(&self) -> u64 {
        self.served
    }
}

impl<F: Fn(Label) -> bool> Oracle for ConditionalOracle<'_, F> {
    fn draw(&mut self) -> Result<Label> {
        let request = self.served + 1;
        let budget = self.budget_for_request(request);
        while self.consumed < budget {
            let label = self.base.draw()?;
            self.consumed += 1;
            if (self.membership)(label) {
                self.served = request;
                return Ok(label);
            }
        }
        Err(Error::RejectionCrash { request })
    }

    fn drawn(&self) -> u64 {
        self.base.drawn()
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} {v} not in (0, 1]")))
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 / 3.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "eta {eta} not in (0, 1/3]"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{derive_seed, SampleOracle};
    use crate::zoo;

    #[test]
    fn amplification_round_counts() {
        assert_eq!(amplification_rounds(1.0 / 3.0), 1);
        assert_eq!(amplification_rounds(0.01), 83); // ⌈18 ln 100⌉
    }

    #[test]
    fn median_of_constant_base() {
        let out = amplify_median(0.05, || Ok(7.0)).unwrap();
        assert_eq!(out, 7.0);
    }

    #[test]
    fn single_run_at_one_third() {
        let mut calls = 0;
        let out = amplify_median(1.0 / 3.0, || {
            calls += 1;
            Ok(calls as f64)
        })
        .unwrap();
        assert_eq!(out, 1.0);
        assert_eq!(calls, 1);
    }

    #[test]
    fn lower_median_rank() {
        // even length: rank q/2
        let mut v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(lower_median(&mut v), 2.0);
        let mut v = [5.0, 1.0, 3.0];
        assert_eq!(lower_median(&mut v), 1.0); // rank ⌊3/2⌋ = 1
    }

    #[test]
    fn indicator_constant_cases() {
        let d = zoo::uniform(4).unwrap();
        let mut o = SampleOracle::new(&d, 1);
        let mut always = IndicatorOracle::new(&mut o, |_| true);
        let rep = estimate_indicator_additive(&mut always, 0.1, 0.1).unwrap();
        assert_eq!(rep.value, 1.0);

        let mut o = SampleOracle::new(&d, 2);
        let mut never = IndicatorOracle::new(&mut o, |_| false);
        let rep = estimate_indicator_additive(&mut never, 0.1, 0.1).unwrap();
        assert_eq!(rep.value, 0.0);
        // S₁ = 0 ⇒ M₂ = ⌈6 ln(10/eta)/eps⌉
        let m1 = indicator_phase_one(0.1, 0.1);
        let m2 = (6.0f64 * 100.0f64.ln() / 0.1).ceil() as u64;
        assert_eq!(rep.samples, m1 + m2);
    }

    #[test]
    fn indicator_unbiased_and_concentrated() {
        // p = 0.3, eps = 0.05, eta = 0.1
        let d = zoo::uniform(10).unwrap();
        let trials = 10_000u64;
        let (mut sum, mut sum_sq, mut misses) = (0.0f64, 0.0f64, 0u32);
        for t in 0..trials {
            let mut o = SampleOracle::new(&d, derive_seed(0xABCD, t));
            let mut ind = IndicatorOracle::new(&mut o, |l| l < 3);
            let rep = estimate_indicator_additive(&mut ind, 0.05, 0.1).unwrap();
            sum += rep.value;
            sum_sq += rep.value * rep.value;
            if (rep.value - 0.3).abs() > 0.05 {
                misses += 1;
            }
        }
        let mean = sum / trials as f64;
        let var = sum_sq / trials as f64 - mean * mean;
        let se = (var / trials as f64).sqrt();
        assert!(
            (mean - 0.3).abs() <= 3.0 * se,
            "mean {mean} off 0.3 by more than 3 se ({se})"
        );
        assert!(misses as f64 / trials as f64 <= 0.1);
    }

    #[test]
    fn conditional_budget_formula() {
        // eta = 1/3 → ⌈12 ln 3⌉ = 14, budget for request i is 4(i + 14)
        let d = zoo::uniform(2).unwrap();
        let mut o = SampleOracle::new(&d, 3);
        let c = ConditionalOracle::new(&mut o, |_| true, 1.0 / 3.0).unwrap();
        assert_eq!(c.budget_for_request(1), 4 * (1 + 14));
        assert_eq!(c.budget_for_request(10), 4 * (10 + 14));
    }

    #[test]
    fn full_support_never_crashes() {
        let d = zoo::uniform(5).unwrap();
        let mut o = SampleOracle::new(&d, 4);
        let mut c = ConditionalOracle::new(&mut o, |_| true, 0.1).unwrap();
        for _ in 0..10_000 {
            c.draw().unwrap();
        }
        assert_eq!(c.served(), 10_000);
    }

    #[test]
    fn crash_rate_within_eta() {
        // μ(A) = 0.6 > 1/2, eta = 0.1: empirical crash rate ≤ eta over many
        // trials of 1000 requests each.
        let d = zoo::uniform(10).unwrap();
        let trials = 10_000u64;
        let mut crashes = 0u32;
        for t in 0..trials {
            let mut o = SampleOracle::new(&d, derive_seed(0xFEED, t));
            let mut c = ConditionalOracle::new(&mut o, |l| l < 6, 0.1).unwrap();
            for _ in 0..1000 {
                match c.draw() {
                    Ok(_) => {}
                    Err(Error::RejectionCrash { .. }) => {
                        crashes += 1;
                        break;
                    }
                    Err(e) => panic!("unexpected error {e:?}"),
                }
            }
        }
        assert!(
            crashes as f64 / trials as f64 <= 0.1,
            "crash rate {} above eta",
            crashes as f64 / trials as f64
        );
    }

    #[test]
    fn conditional_frequencies_match_mu_a() {
        // 5-element A inside uniform(10): conditional frequencies should be
        // uniform over A. Pearson statistic at 1e5 draws stays far below a
        // generous cutoff (df = 4, cutoff ~ 1e-3 tail is 18.5; use 30).
        let d = zoo::uniform(10).unwrap();
        let mut o = SampleOracle::new(&d, 9);
        let mut c = ConditionalOracle::new(&mut o, |l| l < 5, 0.1).unwrap();
        let draws = 100_000u64;
        let mut counts = [0u64; 5];
        for _ in 0..draws {
            counts[c.draw().unwrap() as usize] += 1;
        }
        let expect = draws as f64 / 5.0;
        let chi_sq: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        assert!(chi_sq < 30.0, "chi-square {chi_sq} too large");
    }

    #[test]
    fn median_amplification_preserves_expectation_bound() {
        // Heavy-tailed base: X = U^{-1/2} for U uniform on (0,1), E[X] = 2.
        // The lower median of k copies must not inflate the mean by more than
        // 9× for k ≤ 9 and 12× in general. (amplify_median itself never runs
        // with 1 < q < 20, so small k drives lower_median directly.)
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        let trials = 20_000;
        let heavy = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            (1.0 - rng.random::<f64>()).powf(-0.5)
        };
        for k in [3usize, 9, 83] {
            let mut sum_base = 0.0;
            let mut sum_med = 0.0;
            for _ in 0..trials {
                sum_base += heavy(&mut rng);
                let mut copies: Vec<f64> = (0..k).map(|_| heavy(&mut rng)).collect();
                sum_med += lower_median(&mut copies);
            }
            let ratio = sum_med / sum_base;
            let cap = if k <= 9 { 9.0 + 0.5 } else { 12.0 };
            assert!(ratio <= cap, "inflation {ratio} above {cap} at k={k}");
        }
        // and through the amplifier itself at q = ⌈18 ln 100⌉ = 83
        let mut sum_base = 0.0;
        let mut sum_med = 0.0;
        for _ in 0..2_000 {
            sum_base += heavy(&mut rng);
            sum_med += amplify_median(0.01, || Ok(heavy(&mut rng))).unwrap();
        }
        assert!(sum_med / sum_base <= 12.0);
    }
}
