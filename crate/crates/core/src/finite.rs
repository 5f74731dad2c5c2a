//! Finite-domain machinery: friendliness, δ-statistics estimators, good
//! partitions, and the large-norm advice finder that reduces a general
//! distribution to a friendly conditional one.

use std::collections::{HashMap, HashSet};

use crate::dist::{compensated_sum, ExplicitDistribution, Label};
use crate::error::{Error, Result};
use crate::norm::{estimate_l2_base, estimate_l2_bc};
use crate::oracle::Oracle;
use crate::primitives::{
    amplify_median, estimate_indicator_additive, ConditionalOracle, IndicatorOracle,
};
use crate::report::{AdviceReport, EstimateReport, TraceEntry};

/// Mass floor of a friendly distribution over N elements.
pub fn friendly_threshold(n: usize) -> f64 {
    7.0 / (13.0 * n as f64)
}

/// True iff every entry (zero-mass entries included in N) has mass at least
/// 7/(13N).
pub fn is_friendly(d: &ExplicitDistribution) -> bool {
    let thr = friendly_threshold(d.domain_size());
    d.masses().all(|m| m >= thr)
}

/// Analytic lower bound on t_μ for a friendly μ:
/// (1/(90(N‖μ‖₂²)²))·(1/N)(Σδᵢ² + Σ_{δᵢ≥1}δᵢ³). Test oracle: always ≤ t_μ.
pub fn t_friendly_lower_bound(d: &ExplicitDistribution) -> Result<f64> {
    if !is_friendly(d) {
        return Err(Error::Precondition("distribution is not friendly".into()));
    }
    let n = d.domain_size() as f64;
    let deltas = d.deltas();
    let sum_sq = compensated_sum(deltas.iter().map(|&x| x * x));
    let sum_large_cubes = compensated_sum(deltas.iter().filter(|&&x| x >= 1.0).map(|&x| x * x * x));
    let nl2 = n * d.l2_squared();
    Ok((sum_sq + sum_large_cubes) / n / (90.0 * nl2 * nl2))
}

/// Iteration count k = ⌈log₂(1/eps)⌉ + 2 of the sum-of-squares schedule.
pub fn sum_squares_iterations(eps: f64) -> u32 {
    (1.0 / eps).log2().ceil() as u32 + 2
}

/// Iterative estimator for (1/N)Σδᵢ² = N‖μ‖₂² − 1 over a known domain size N.
///
/// A coarse norm estimate either resolves the easy case ‖μ‖₂² ≥ (5/4)/N
/// directly, or the schedule halves its resolution εᵢ until the norm separates
/// from 1/N, feeding each refinement the advice tᵢ = εᵢ₋₁√N. Output dominates
/// the target with probability ≥ 1 − eta; E[output] = O(target + eps).
pub fn estimate_sum_squares(
    oracle: &mut dyn Oracle,
    n: usize,
    eps: f64,
    eta: f64,
    scale: f64,
) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("domain size must be ≥ 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps {eps} not in (0, 1)")));
    }
    let nf = n as f64;
    let k = sum_squares_iterations(eps);
    let start = oracle.drawn();
    let mut trace = Vec::new();

    let mut eps_i = 1.0f64; // ε₀
    let err0 = 3f64.powi(-(k as i32)) * eta / (32.0 * nf);
    let mut p_prev = estimate_l2_bc(oracle, eps_i / 12.0, err0, scale)?.value;

    if p_prev >= 1.25 / nf {
        let p = estimate_l2_bc(oracle, 1.0 / 12.0, (eta / 2.0).min(eps), scale)?.value;
        let value = (3.0 * (nf * p - 1.0)).max(0.0);
        let samples = oracle.drawn() - start;
        trace.push(TraceEntry {
            proc: "estimate-sum-squares",
            branch: "large-p0".into(),
            samples,
        });
        return Ok(EstimateReport::new(value, samples, trace));
    }

    for i in 1..=k {
        let eps_prev = eps_i;
        eps_i = eps_prev / 2.0;
        if p_prev < (1.0 + eps_prev / 2.0) / nf {
            let t_i = eps_prev * nf.sqrt();
            let err_i = 3f64.powi(i as i32 - k as i32) * eta / 32.0;
            // Refinement at confidence err_i: median amplification of the
            // advised unbiased estimator run at error 1/3, so the iteration
            // cost carries a log(1/err_i) factor rather than 1/err_i.
            p_prev = amplify_median(err_i, || {
                estimate_l2_base(oracle, eps_i / 12.0, 1.0 / 3.0, Some(t_i), scale)
                    .map(|r| r.value)
            })?;
            trace.push(TraceEntry {
                proc: "estimate-sum-squares",
                branch: format!("refine i={i},eps={eps_i},advice={t_i}"),
                samples: oracle.drawn() - start,
            });
        } else {
            let samples = oracle.drawn() - start;
            trace.push(TraceEntry {
                proc: "estimate-sum-squares",
                branch: format!("early-return i={i}"),
                samples,
            });
            return Ok(EstimateReport::new(2.0 * eps_prev, samples, trace));
        }
    }
    let samples = oracle.drawn() - start;
    trace.push(TraceEntry {
        proc: "estimate-sum-squares",
        branch: "exhausted".into(),
        samples,
    });
    Ok(EstimateReport::new(2.0 * eps_i, samples, trace))
}

/// Learning pass size q = ⌈scale·1000·N·ln(N⁴/eta)⌉ of the sum-of-cubes
/// estimator.
pub fn sum_cubes_sample_count(n: usize, eta: f64, scale: f64) -> u64 {
    let q = (scale * 1000.0 * n as f64 * ((n as f64).powi(4) / eta).ln()).ceil();
    (q as u64).max(1)
}

/// Estimates the sum of large cubes (1/N)Σ_{δᵢ≥1}δᵢ³ by learning per-element
/// frequencies and keeping the empirical deviations δ̂ᵢ ≥ 1/2. Dominates the
/// target with probability ≥ 1 − eta. N is the declared domain size, not the
/// observed support size.
pub fn estimate_sum_cubes(
    oracle: &mut dyn Oracle,
    n: usize,
    eta: f64,
    scale: f64,
) -> Result<EstimateReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("domain size must be ≥ 1".into()));
    }
    let q = sum_cubes_sample_count(n, eta, scale);
    let start = oracle.drawn();
    let mut counts: HashMap<Label, u64> = HashMap::new();
    for _ in 0..q {
        *counts.entry(oracle.draw()?).or_insert(0) += 1;
    }
    let nf = n as f64;
    // Unobserved elements have δ̂ = −1 < 1/2 and cannot contribute.
    let total = compensated_sum(counts.values().filter_map(|&c| {
        let delta_hat = nf * (c as f64 / q as f64) - 1.0;
        (delta_hat >= 0.5).then(|| delta_hat.powi(3))
    }));
    let value = 8.0 / nf * total;
    let samples = oracle.drawn() - start;
    Ok(EstimateReport::leaf(
        value,
        samples,
        "estimate-sum-cubes",
        format!("q={q}"),
    ))
}

/// Combination step of the friendly t-estimator: min{360(a+b)/(Nℓ₂)², √N}.
pub fn t_friendly_value(a: f64, b: f64, n: usize, ell2: f64) -> f64 {
    let nf = n as f64;
    (360.0 * (a + b) / (nf * ell2).powi(2)).min(nf.sqrt())
}

/// Estimates an upper dominator of t_μ for a friendly μ over a known domain
/// of N elements, by combining the sum-of-squares and sum-of-cubes
/// estimators with a norm estimate. If μ is friendly the output dominates
/// t_μ with probability ≥ 1 − eta; in any case it is at most √N.
pub fn estimate_t_friendly(
    oracle: &mut dyn Oracle,
    n: usize,
    eps: f64,
    eta: f64,
    scale: f64,
) -> Result<AdviceReport> {
    let start = oracle.drawn();
    let ell2 = estimate_l2_bc(oracle, 0.5, eta / 3.0, scale)?.value;
    let a = estimate_sum_squares(oracle, n, eps, eta / 3.0, scale)?.value;
    let b = estimate_sum_cubes(oracle, n, (eta / 3.0).min(eps), scale)?.value;
    let r = t_friendly_value(a, b, n, ell2);
    let samples = oracle.drawn() - start;
    Ok(AdviceReport::new(
        r,
        samples,
        vec![TraceEntry {
            proc: "estimate-t-friendly",
            branch: format!("a={a:.6},b={b:.6}"),
            samples,
        }],
    ))
}

/// An explicit heavy set A; B is implicitly its complement.
#[derive(Debug, Clone)]
pub struct Partition {
    pub a_members: HashSet<Label>,
    /// The norm estimate ℓ whose 3ℓ/5 threshold built A.
    pub ell: f64,
}

impl Partition {
    pub fn contains_a(&self, label: Label) -> bool {
        self.a_members.contains(&label)
    }
}

/// Exact good-partition test:
/// A ⊆ {i : μ(i) > (11/20)‖μ‖₂²} and B ⊆ {i : μ(i) < (2/3)‖μ‖₂²}.
pub fn is_good_partition(d: &ExplicitDistribution, p: &Partition) -> bool {
    let l2 = d.l2_squared();
    d.entries().iter().all(|&(label, mass)| {
        if p.contains_a(label) {
            mass > 11.0 / 20.0 * l2
        } else {
            mass < 2.0 / 3.0 * l2
        }
    })
}

/// The canonical good partition used by exact test sweeps: A takes every
/// element of mass ≥ (2/3)‖μ‖₂², which satisfies both containments.
pub fn canonical_good_partition(d: &ExplicitDistribution) -> Partition {
    let l2 = d.l2_squared();
    let a_members = d
        .entries()
        .iter()
        .filter(|&&(_, m)| m >= 2.0 / 3.0 * l2)
        .map(|&(l, _)| l)
        .collect();
    Partition {
        a_members,
        ell: l2,
    }
}

/// Learning pass size q = ⌈scale·10⁴·ln(100/(eta·eps·ℓ))/ℓ⌉ of the large-norm
/// finder. ℓ is clamped below by machine epsilon inside the logarithm.
pub fn partition_sample_count(ell: f64, eps: f64, eta: f64, scale: f64) -> u64 {
    let ell_log = ell.max(f64::EPSILON);
    let q = (scale * 1e4 * (100.0 / (eta * eps * ell_log)).ln() / ell).ceil();
    (q as u64).max(1)
}

/// Advice finder for the large-‖μ‖₂ regime.
///
/// Tests whether t is already large (then estimates it directly); otherwise
/// learns a heavy set A so that A ∪ ¬A is a good partition with high
/// probability, estimates μ(B) additively, estimates t of the friendly
/// conditional μ_A through rejection sampling, and returns r_A + 5(r_B + eps).
/// A rejection-sampler crash terminates with the safe advice 0.
pub fn find_advice_large(
    oracle: &mut dyn Oracle,
    eps: f64,
    eta: f64,
    scale: f64,
) -> Result<AdviceReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps {eps} not in (0, 1)")));
    }
    let start = oracle.drawn();
    let t1 = estimate_t_directly_gate(oracle, (eta / 10.0).min(eps), scale)?;
    if t1 >= 1.0 / 900.0 {
        let rep = estimate_t_directly_gate(oracle, eta / 10.0, scale)?;
        let samples = oracle.drawn() - start;
        return Ok(AdviceReport::new(
            rep,
            samples,
            vec![TraceEntry {
                proc: "find-advice-large",
                branch: "large-t".into(),
                samples,
            }],
        ));
    }

    let ell = estimate_l2_bc(oracle, 0.01, (eta / 10.0).min(eps), scale)?.value;
    let q = partition_sample_count(ell, eps, eta, scale);
    let mut counts: HashMap<Label, u64> = HashMap::new();
    for _ in 0..q {
        *counts.entry(oracle.draw()?).or_insert(0) += 1;
    }
    let threshold = 3.0 / 5.0 * ell;
    let a_members: HashSet<Label> = counts
        .iter()
        .filter(|&(_, &c)| c as f64 / q as f64 > threshold)
        .map(|(&l, _)| l)
        .collect();

    let r_b = {
        let a_ref = &a_members;
        let mut ind = IndicatorOracle::new(oracle, move |l| !a_ref.contains(&l));
        estimate_indicator_additive(&mut ind, eps, eta / 10.0)?.value
    };

    let n = a_members.len();
    let r_a = {
        let a_ref = &a_members;
        let mut cond = ConditionalOracle::new(oracle, move |l| a_ref.contains(&l), eta / 10.0)?;
        match estimate_t_friendly(&mut cond, n, eps, eta / 10.0, scale) {
            Ok(rep) => rep.r,
            Err(Error::RejectionCrash { .. }) => {
                let samples = oracle.drawn() - start;
                return Ok(AdviceReport::new(
                    0.0,
                    samples,
                    vec![TraceEntry {
                        proc: "find-advice-large",
                        branch: "crash".into(),
                        samples,
                    }],
                ));
            }
            Err(e) => return Err(e),
        }
    };

    let r = r_a + 5.0 * (r_b + eps);
    assert!(r >= 0.0);
    let samples = oracle.drawn() - start;
    Ok(AdviceReport::new(
        r,
        samples,
        vec![TraceEntry {
            proc: "find-advice-large",
            branch: format!("partition,|A|={n},r_b={r_b:.6}"),
            samples,
        }],
    ))
}

fn estimate_t_directly_gate(oracle: &mut dyn Oracle, eta: f64, scale: f64) -> Result<f64> {
    crate::advice::estimate_t_directly(oracle, 1e-4, eta, scale).map(|r| r.r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{derive_seed, SampleOracle};
    use crate::zoo;

    fn dist(masses: &[f64]) -> ExplicitDistribution {
        ExplicitDistribution::from_masses(masses).unwrap()
    }

    #[test]
    fn friendliness_examples() {
        assert!(is_friendly(&zoo::uniform(100).unwrap()));
        assert!(!is_friendly(&dist(&[0.5, 0.5, 0.0])));
        assert!(is_friendly(&dist(&[0.6, 0.4]))); // 0.4 ≥ 7/26
    }

    #[test]
    fn friendly_bound_examples() {
        let u = zoo::uniform(10).unwrap();
        assert_eq!(t_friendly_lower_bound(&u).unwrap(), 0.0);
        let d = dist(&[0.6, 0.4]);
        let bound = t_friendly_lower_bound(&d).unwrap();
        assert!((bound - 0.04 / (90.0 * 1.04 * 1.04)).abs() < 1e-12);
        assert!((bound - 4.1091e-4).abs() < 1e-7);
        let t = d.t_coefficient();
        assert!((t - 0.03550).abs() < 1e-4);
        assert!(bound <= t);
        assert!(t_friendly_lower_bound(&dist(&[0.9, 0.1])).is_err());
    }

    #[test]
    fn friendly_bound_below_t_across_zoo() {
        for (name, d) in zoo::identity_sweep() {
            if is_friendly(&d) {
                let bound = t_friendly_lower_bound(&d).unwrap();
                assert!(
                    bound <= d.t_coefficient() + 1e-12,
                    "bound above t for {name}"
                );
            }
        }
    }

    #[test]
    fn sum_squares_iteration_formula() {
        assert_eq!(sum_squares_iterations(0.1), 6); // ⌈log₂ 10⌉ + 2
        assert_eq!(sum_squares_iterations(0.5), 3);
    }

    #[test]
    fn sum_squares_uniform_runs_full_schedule() {
        // On uniform(N) no early return fires and the output is 2ε_k.
        let d = zoo::uniform(64).unwrap();
        let mut o = SampleOracle::new(&d, 31);
        let rep = estimate_sum_squares(&mut o, 64, 0.1, 0.25, 3e-7).unwrap();
        let k = sum_squares_iterations(0.1);
        assert_eq!(rep.value, 2.0 * 0.5f64.powi(k as i32));
        assert_eq!(rep.top_branch().unwrap(), "exhausted");
    }

    #[test]
    fn sum_squares_early_return_dominates_target() {
        // N·‖μ‖₂² − 1 = 0.2: the schedule stops once (1+ε/2)/N ≤ ‖μ‖₂².
        let alpha = 0.2f64.sqrt();
        let d = zoo::near_uniform(16, alpha).unwrap();
        let target = alpha * alpha;
        let mut o = SampleOracle::new(&d, 32);
        let rep = estimate_sum_squares(&mut o, 16, 0.1, 0.25, 3e-7).unwrap();
        assert!(rep.value >= target, "{} < {target}", rep.value);
        assert!(rep.top_branch().unwrap().starts_with("early-return"));
        assert_eq!(rep.value, 0.5); // 2ε₂ with accurate estimates
    }

    #[test]
    fn sum_squares_large_branch() {
        // N·‖μ‖₂² = 1.36 ≥ 5/4: resolved by the direct branch, whose output
        // 3(Np′ − 1) ≈ 1.08 dominates the target (1/N)Σδ² = 0.36.
        let d = zoo::near_uniform(4, 0.6).unwrap();
        let mut o = SampleOracle::new(&d, 33);
        let rep = estimate_sum_squares(&mut o, 4, 0.1, 0.25, 1e-3).unwrap();
        assert_eq!(rep.top_branch().unwrap(), "large-p0");
        assert!(rep.value >= 0.36, "{}", rep.value);
    }

    #[test]
    fn sum_cubes_count_formula() {
        // N = 10, eta = 0.1 → ⌈10⁴·ln(10⁵)⌉ = 115130
        assert_eq!(sum_cubes_sample_count(10, 0.1, 1.0), 115_130);
    }

    #[test]
    fn sum_cubes_uniform_is_mostly_zero() {
        let d = zoo::uniform(12).unwrap();
        let mut zeros = 0u32;
        let trials = 500;
        for t in 0..trials {
            let mut o = SampleOracle::new(&d, derive_seed(0x5C, t));
            let rep = estimate_sum_cubes(&mut o, 12, 0.1, 1.0).unwrap();
            if rep.value == 0.0 {
                zeros += 1;
            }
        }
        assert!(zeros as f64 / trials as f64 >= 0.9);
    }

    #[test]
    fn sum_cubes_dominates_large_cube_mass() {
        // (0.7, 0.1, 0.1, 0.1): δ₁ = 1.8, target 1.8³/4 = 1.458.
        let d = dist(&[0.7, 0.1, 0.1, 0.1]);
        let target = 1.8f64.powi(3) / 4.0;
        assert!((target - 1.458).abs() < 1e-12);
        let trials = 500;
        let mut dominated = 0u32;
        for t in 0..trials {
            let mut o = SampleOracle::new(&d, derive_seed(0x5D, t));
            let rep = estimate_sum_cubes(&mut o, 4, 0.1, 1.0).unwrap();
            if rep.value >= target {
                dominated += 1;
            }
        }
        assert!(dominated as f64 / trials as f64 >= 0.9);
    }

    #[test]
    fn t_friendly_value_clamps_at_sqrt_n() {
        assert_eq!(t_friendly_value(1e9, 0.0, 16, 1.0 / 16.0), 4.0);
        let v = t_friendly_value(0.001, 0.0, 16, 1.0 / 16.0);
        assert!((v - 360.0 * 0.001).abs() < 1e-12);
    }

    #[test]
    fn t_friendly_dominates_on_friendly_pair() {
        let d = dist(&[0.6, 0.4]);
        let truth = d.t_coefficient();
        let trials = 500;
        let mut dominated = 0u32;
        for t in 0..trials {
            let mut o = SampleOracle::new(&d, derive_seed(0x7F, t));
            let rep = estimate_t_friendly(&mut o, 2, 0.1, 0.25, 1e-8).unwrap();
            if rep.r >= truth {
                dominated += 1;
            }
        }
        assert!(
            dominated as f64 / trials as f64 >= 0.75,
            "dominance {}",
            dominated as f64 / trials as f64
        );
    }

    #[test]
    fn good_partition_examples() {
        let d = dist(&[0.5, 0.3, 0.2]);
        let p = Partition {
            a_members: [0u64, 1].into_iter().collect(),
            ell: d.l2_squared(),
        };
        assert!(is_good_partition(&d, &p));
        // a zero-mass member of A breaks the heavy condition
        let dz = ExplicitDistribution::new(vec![(0, 0.5), (1, 0.3), (2, 0.2), (3, 0.0)]).unwrap();
        let p = Partition {
            a_members: [0u64, 3].into_iter().collect(),
            ell: dz.l2_squared(),
        };
        assert!(!is_good_partition(&dz, &p));
        // empty A is vacuously fine on the A side, but every distribution has
        // an element of mass ≥ ‖μ‖₂², so some B member violates the light
        // condition: uniform masses sit exactly at ‖μ‖₂², not below (2/3) of it.
        let u = zoo::uniform(100).unwrap();
        let p = Partition {
            a_members: HashSet::new(),
            ell: u.l2_squared(),
        };
        assert!(!is_good_partition(&u, &p));
        // the dust element alone goes to B and the partition is good
        let dusty = zoo::dusted_uniform(50, 0.001).unwrap();
        let p = canonical_good_partition(&dusty);
        assert_eq!(p.a_members.len(), 50);
        assert!(is_good_partition(&dusty, &p));
    }

    #[test]
    fn good_partition_lemmas_hold_exactly() {
        // μ(B) ≤ 9t when t ≤ 1/90; μ_A friendly when t ≤ 1/900;
        // |t_{μ_{¬B}} − t| ≤ 5μ(B) when t ≤ 1/90.
        let mut checked = 0u32;
        for (name, d) in zoo::identity_sweep() {
            let t = d.t_coefficient();
            let p = canonical_good_partition(&d);
            assert!(is_good_partition(&d, &p), "canonical not good for {name}");
            let mass_b: f64 = d
                .entries()
                .iter()
                .filter(|&&(l, _)| !p.contains_a(l))
                .map(|&(_, m)| m)
                .sum();
            if t <= 1.0 / 90.0 {
                assert!(mass_b <= 9.0 * t + 1e-12, "μ(B) > 9t for {name}");
                if mass_b < 1.0 {
                    let cond = d.conditional(|l| p.contains_a(l)).unwrap();
                    let drift = (cond.t_coefficient() - t).abs();
                    assert!(drift <= 5.0 * mass_b + 1e-12, "t drift for {name}");
                }
                checked += 1;
            }
            if t <= 1.0 / 900.0 && mass_b < 1.0 {
                let cond = d.conditional(|l| p.contains_a(l)).unwrap();
                assert!(is_friendly(&cond), "μ_A not friendly for {name}");
            }
        }
        assert!(checked >= 5, "sweep exercised too few small-t members");
    }

    #[test]
    fn mu_b_small_on_constructed_two_level() {
        // two_level(50, one heavy of 0.5): exact partition has B = light
        let d = zoo::two_level(50, 1, 0.5).unwrap();
        let t = d.t_coefficient();
        let p = canonical_good_partition(&d);
        assert!(is_good_partition(&d, &p));
        let mass_b: f64 = d
            .entries()
            .iter()
            .filter(|&&(l, _)| !p.contains_a(l))
            .map(|&(_, m)| m)
            .sum();
        assert!(mass_b <= 9.0 * t);
    }

    #[test]
    fn find_advice_large_point_mass() {
        // Partition path: A = {the element} w.h.p., r_B ≈ 0, μ_A is a
        // friendly point mass, so the output lands near 5ε ≥ t = 0. The
        // initial t-gate may also fire on noise; either way r ≥ t.
        let d = zoo::point_mass();
        let trials = 200;
        let mut partition_runs = 0u32;
        for t in 0..trials {
            let mut o = SampleOracle::new(&d, derive_seed(0x41, t));
            let rep = find_advice_large(&mut o, 0.1, 0.25, 1e-25).unwrap();
            assert!(rep.r >= 0.0);
            if rep.trace[0].branch.starts_with("partition") {
                partition_runs += 1;
                assert!(rep.r >= 5.0 * 0.1 - 0.2, "r = {}", rep.r);
            }
        }
        assert!(partition_runs > 0);
    }
}
