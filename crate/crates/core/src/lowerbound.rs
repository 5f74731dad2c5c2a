//! Hard-instance constructions and desk-scale indistinguishability
//! experiments.
//!
//! Two constructions: a single skewed perturbation for distributions with one
//! dominant element, and a sign-vector ensemble of paired mass shifts for
//! pairing-compatible distributions. Both move the collision norm outside a
//! (1 ± Θ(eps)) band while keeping the perturbed distribution statistically
//! close to the original, which is what the experiments probe.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::dist::{compensated_sum, ExplicitDistribution, Label};
use crate::error::{Error, Result};
use crate::oracle::{binom2, CollisionTally, derive_seed, Oracle, SampleOracle};

/// Largest eps the ensemble accepts; keeps every perturbed mass non-negative
/// since λ√eps ≤ 10/√8000 < 1.
pub const ENSEMBLE_MAX_EPS: f64 = 1.0 / 8000.0;

/// Candidate shift multipliers. The intervals {x : |λx + λ²| ≤ 5} for these λ
/// are pairwise disjoint, so some choice escapes them with probability ≥ 3/4.
pub const LAMBDA_CANDIDATES: [f64; 4] = [2.0, 6.0, 8.0, 10.0];

/// The interval K_λ = {x : |λx + λ²| ≤ 5} = [(−5 − λ²)/λ, (5 − λ²)/λ].
pub fn lambda_interval(lambda: f64) -> (f64, f64) {
    ((-5.0 - lambda * lambda) / lambda, (5.0 - lambda * lambda) / lambda)
}

/// Moves mass 10·eps·‖μ‖₂ from a dominant element onto a fresh element.
///
/// Requires some element of mass ≥ (1/8)‖μ‖₂ (which must also cover the
/// moved mass) and eps ≤ 1/500. The result ν satisfies
/// tv(μ, ν) = 10·eps·‖μ‖₂ exactly and ‖ν‖₂² < (1 − (9/4)eps)‖μ‖₂².
pub fn build_skewed_perturbation(
    d: &ExplicitDistribution,
    eps: f64,
) -> Result<ExplicitDistribution> {
    if !(eps > 0.0 && eps <= 1.0 / 500.0) {
        return Err(Error::Precondition(format!("eps {eps} not in (0, 1/500]")));
    }
    let l2 = d.l2_squared().sqrt();
    let (heavy_label, heavy_mass) = d
        .entries()
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("distribution is non-empty");
    if heavy_mass < l2 / 8.0 {
        return Err(Error::Precondition(format!(
            "no element reaches ‖μ‖₂/8 = {}",
            l2 / 8.0
        )));
    }
    let moved = 10.0 * eps * l2;
    if moved > heavy_mass {
        return Err(Error::Precondition(format!(
            "moved mass {moved} exceeds the heavy element's {heavy_mass}"
        )));
    }
    let fresh = d.entries().iter().map(|&(l, _)| l).max().unwrap() + 1;
    let mut entries: Vec<(Label, f64)> = d
        .entries()
        .iter()
        .map(|&(l, m)| {
            if l == heavy_label {
                (l, m - moved)
            } else {
                (l, m)
            }
        })
        .collect();
    entries.push((fresh, moved));
    ExplicitDistribution::new(entries)
}

/// The pair products c_j = μ(2j)(μ(2j) − μ(2j−1)) entering the deviation
/// statistic X = (1/(√eps·‖μ‖₂²))·Σ_j s_j c_j.
fn pair_products(base: &ExplicitDistribution) -> Vec<f64> {
    base.entries()
        .chunks(2)
        .map(|pair| {
            let hi = pair[0].1;
            let lo = pair[1].1;
            lo * (lo - hi)
        })
        .collect()
}

fn check_pairing(base: &ExplicitDistribution) -> Result<()> {
    if base.domain_size() % 2 != 0 {
        return Err(Error::Precondition(
            "pairing needs an even number of entries".into(),
        ));
    }
    for (j, pair) in base.entries().chunks(2).enumerate() {
        let hi = pair[0].1;
        let lo = pair[1].1;
        if !(lo <= hi && hi <= std::f64::consts::SQRT_2 * lo) {
            return Err(Error::Precondition(format!(
                "pair {} violates μ(2j) ≤ μ(2j−1) ≤ √2·μ(2j): ({hi}, {lo})",
                j + 1
            )));
        }
    }
    Ok(())
}

/// How a λ multiplier is selected for an ensemble.
#[derive(Debug, Clone, Copy)]
pub enum LambdaMode {
    /// Enumerate all 2^J sign vectors (J ≤ 20).
    Exact,
    /// Estimate the escape probability from sampled sign vectors.
    MonteCarlo { trials: u64, seed: u64 },
}

/// Picks the λ ∈ {2, 6, 8, 10} maximizing Pr[|λX + λ²| ≥ 5] over sign
/// vectors; returns (λ, its probability). In exact mode the probability is
/// the true one and the selected value is guaranteed ≥ 3/4.
pub fn ensemble_select_lambda(
    base: &ExplicitDistribution,
    eps: f64,
    mode: LambdaMode,
) -> Result<(f64, f64)> {
    check_pairing(base)?;
    let products = pair_products(base);
    let j = products.len();
    let norm = eps.sqrt() * base.l2_squared();
    let escape_count = |x: f64| -> [bool; 4] {
        let mut out = [false; 4];
        for (idx, &lambda) in LAMBDA_CANDIDATES.iter().enumerate() {
            out[idx] = (lambda * x + lambda * lambda).abs() >= 5.0;
        }
        out
    };
    let mut hits = [0u64; 4];
    let total: u64;
    match mode {
        LambdaMode::Exact => {
            if j > 20 {
                return Err(Error::Precondition(format!(
                    "exact enumeration limited to 20 pairs, got {j}"
                )));
            }
            total = 1u64 << j;
            for signs in 0..total {
                let x = signed_sum(&products, signs) / norm;
                for (idx, esc) in escape_count(x).into_iter().enumerate() {
                    if esc {
                        hits[idx] += 1;
                    }
                }
            }
        }
        LambdaMode::MonteCarlo { trials, seed } => {
            total = trials;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..trials {
                let signs: u64 = rng.random();
                let x = signed_sum(&products, signs) / norm;
                for (idx, esc) in escape_count(x).into_iter().enumerate() {
                    if esc {
                        hits[idx] += 1;
                    }
                }
            }
        }
    }
    let (best, &best_hits) = hits
        .iter()
        .enumerate()
        .max_by_key(|&(_, &h)| h)
        .expect("four candidates");
    Ok((LAMBDA_CANDIDATES[best], best_hits as f64 / total as f64))
}

fn signed_sum(products: &[f64], signs: u64) -> f64 {
    compensated_sum(
        products
            .iter()
            .enumerate()
            .map(|(j, &c)| if (signs >> j) & 1 == 0 { c } else { -c }),
    )
}

/// A distribution over perturbed distributions ν = μ ± paired shifts, with a
/// λ selected once per (base, eps) and cached.
#[derive(Debug, Clone)]
pub struct PerturbationEnsemble {
    base: ExplicitDistribution,
    eps: f64,
    lambda: f64,
    /// Escape probability of the selected λ under the selection mode.
    lambda_probability: f64,
}

impl PerturbationEnsemble {
    pub fn new(base: ExplicitDistribution, eps: f64, mode: LambdaMode) -> Result<Self> {
        if !(eps > 0.0 && eps <= ENSEMBLE_MAX_EPS) {
            return Err(Error::Precondition(format!(
                "eps {eps} not in (0, {ENSEMBLE_MAX_EPS}]"
            )));
        }
        let (lambda, lambda_probability) = ensemble_select_lambda(&base, eps, mode)?;
        Ok(Self {
            base,
            eps,
            lambda,
            lambda_probability,
        })
    }

    pub fn base(&self) -> &ExplicitDistribution {
        &self.base
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_probability(&self) -> f64 {
        self.lambda_probability
    }

    /// ε̂ = λ√eps.
    pub fn eps_hat(&self) -> f64 {
        self.lambda * self.eps.sqrt()
    }

    /// Draws sign vector s and the perturbed ν with
    /// ν(2j−1) = μ(2j−1) − s_j·ε̂_j and ν(2j) = μ(2j) + s_j·ε̂_j,
    /// where ε̂_j = ε̂·μ(2j). Masses stay non-negative and sum to 1.
    pub fn draw(&self, seed: u64) -> (Vec<i8>, ExplicitDistribution) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps_hat = self.eps_hat();
        let mut signs = Vec::with_capacity(self.base.domain_size() / 2);
        let mut entries = Vec::with_capacity(self.base.domain_size());
        for pair in self.base.entries().chunks(2) {
            let s: i8 = if rng.random::<bool>() { 1 } else { -1 };
            signs.push(s);
            let (hi_label, hi) = pair[0];
            let (lo_label, lo) = pair[1];
            let shift = s as f64 * eps_hat * lo;
            entries.push((hi_label, hi - shift));
            entries.push((lo_label, lo + shift));
        }
        let nu = ExplicitDistribution::new(entries)
            .expect("perturbed masses are valid for eps ≤ 1/8000");
        (signs, nu)
    }

    /// Exact decomposition of ‖ν‖₂² − ‖μ‖₂² for a drawn sign vector:
    /// 2ε̂·Σ s_j·μ(2j)(μ(2j) − μ(2j−1)) + 2ε̂²·Σ μ(2j)².
    pub fn deviation_terms(&self, signs: &[i8]) -> (f64, f64) {
        let eps_hat = self.eps_hat();
        let products = pair_products(&self.base);
        let linear = 2.0
            * eps_hat
            * compensated_sum(
                products
                    .iter()
                    .zip(signs)
                    .map(|(&c, &s)| s as f64 * c),
            );
        let quadratic = 2.0
            * eps_hat
            * eps_hat
            * compensated_sum(self.base.entries().chunks(2).map(|p| p[1].1 * p[1].1));
        (linear, quadratic)
    }
}

/// Fraction of ensemble draws whose exact collision norm escapes
/// (1 ± (5/2)eps)·‖μ‖₂².
pub fn deviation_experiment(ensemble: &PerturbationEnsemble, trials: u64, seed: u64) -> f64 {
    let l2 = ensemble.base().l2_squared();
    let band = 2.5 * ensemble.eps() * l2;
    let mut escapes = 0u64;
    for t in 0..trials {
        let (_, nu) = ensemble.draw(derive_seed(seed, t));
        if (nu.l2_squared() - l2).abs() > band {
            escapes += 1;
        }
    }
    escapes as f64 / trials as f64
}

/// Result of erasing the ratio-violating pairs of a sorted distribution.
#[derive(Debug, Clone)]
pub struct PairReduction {
    /// The conditional distribution μ_A over the kept pairs, renormalized,
    /// in descending-mass pair order (pairing-compatible by construction).
    pub restricted: ExplicitDistribution,
    /// Raw mass of the kept set A.
    pub a_mass: f64,
    /// Labels of the erased odd-position elements (ratio too steep).
    pub b1: Vec<Label>,
    /// Labels of their even-position partners.
    pub b2: Vec<Label>,
    /// Σ_{i∈A} μ(i)², Σ_{i∈B₁} μ(i)², Σ_{i∈B₂} μ(i)² (raw masses).
    pub sum_sq_a: f64,
    pub sum_sq_b1: f64,
    pub sum_sq_b2: f64,
}

/// Sorts by descending mass, pads to even length with a zero-mass element,
/// erases every pair whose heavier side exceeds √2 times the lighter, and
/// returns the renormalized pairing-compatible remainder.
///
/// Requires no element ≥ (1/8)‖μ‖₂ (skewed inputs take
/// [`build_skewed_perturbation`] instead). The kept set always satisfies
/// μ(A) ≥ 1/4 and Σ_A μ² ≥ (15/16)‖μ‖₂²; both are asserted.
pub fn pair_and_reduce(d: &ExplicitDistribution) -> Result<PairReduction> {
    let l2 = d.l2_squared();
    let norm = l2.sqrt();
    if d.max_mass() >= norm / 8.0 {
        return Err(Error::Precondition(format!(
            "an element reaches ‖μ‖₂/8 = {}; use the skewed construction",
            norm / 8.0
        )));
    }
    let mut sorted: Vec<(Label, f64)> = d.entries().to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if sorted.len() % 2 != 0 {
        let fresh = sorted.iter().map(|&(l, _)| l).max().unwrap() + 1;
        sorted.push((fresh, 0.0));
    }
    let mut kept: Vec<(Label, f64)> = Vec::new();
    let mut b1 = Vec::new();
    let mut b2 = Vec::new();
    let (mut sum_sq_a, mut sum_sq_b1, mut sum_sq_b2) = (0.0, 0.0, 0.0);
    let mut a_mass = 0.0;
    for pair in sorted.chunks(2) {
        let (hi_label, hi) = pair[0];
        let (lo_label, lo) = pair[1];
        if hi > std::f64::consts::SQRT_2 * lo {
            b1.push(hi_label);
            b2.push(lo_label);
            sum_sq_b1 += hi * hi;
            sum_sq_b2 += lo * lo;
        } else {
            kept.push((hi_label, hi));
            kept.push((lo_label, lo));
            sum_sq_a += hi * hi + lo * lo;
            a_mass += hi + lo;
        }
    }
    if kept.is_empty() {
        return Err(Error::Precondition("every pair was erased".into()));
    }
    assert!(a_mass >= 0.25, "μ(A) = {a_mass} below 1/4");
    assert!(
        sum_sq_a >= 15.0 / 16.0 * l2,
        "Σ_A μ² = {sum_sq_a} below (15/16)‖μ‖₂²"
    );
    let restricted = ExplicitDistribution::new(
        kept.iter().map(|&(l, m)| (l, m / a_mass)).collect(),
    )?;
    Ok(PairReduction {
        restricted,
        a_mass,
        b1,
        b2,
        sum_sq_a,
        sum_sq_b1,
        sum_sq_b2,
    })
}

/// How the distinguisher's sample count is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Exactly `budget` samples per trial.
    Fixed,
    /// Poisson(budget) samples per trial, matching the analysis setting.
    Poisson,
}

#[derive(Debug, Clone)]
pub struct DistinguishReport {
    pub trials: u64,
    pub budget: u64,
    pub success_rate: f64,
    /// success_rate − 1/2.
    pub advantage: f64,
}

/// Runs the collision-count threshold distinguisher against H₀ = μ and
/// H₁ = ν ~ ensemble at the given per-trial budget.
///
/// Hypotheses alternate deterministically (balanced design), so a
/// zero-information budget scores exactly 1/2. The distinguisher answers
/// "perturbed" iff the empirical collision rate leaves
/// (1 ± (5/4)eps)·‖μ‖₂². It is one natural test, an illustration; the
/// indistinguishability bound holds against every algorithm.
pub fn distinguish_experiment(
    ensemble: &PerturbationEnsemble,
    budget: u64,
    trials: u64,
    seed: u64,
    mode: SamplingMode,
) -> DistinguishReport {
    let l2 = ensemble.base().l2_squared();
    let threshold = 1.25 * ensemble.eps() * l2;
    let mut correct = 0u64;
    for t in 0..trials {
        let trial_seed = derive_seed(seed, t);
        let truth_is_perturbed = t % 2 == 1;
        let dist = if truth_is_perturbed {
            ensemble.draw(derive_seed(trial_seed, 1)).1
        } else {
            ensemble.base().clone()
        };
        let m = match mode {
            SamplingMode::Fixed => budget,
            SamplingMode::Poisson => {
                if budget == 0 {
                    0
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, 2));
                    Poisson::new(budget as f64).unwrap().sample(&mut rng) as u64
                }
            }
        };
        let answer_perturbed = if m < 2 {
            false
        } else {
            let mut oracle = SampleOracle::new(&dist, derive_seed(trial_seed, 3));
            let mut tally = CollisionTally::new();
            for _ in 0..m {
                tally.ingest(oracle.draw().expect("uncapped"));
            }
            let rate = tally.s2() as f64 / binom2(m);
            (rate - l2).abs() > threshold
        };
        if answer_perturbed == truth_is_perturbed {
            correct += 1;
        }
    }
    let success_rate = correct as f64 / trials as f64;
    DistinguishReport {
        trials,
        budget,
        success_rate,
        advantage: success_rate - 0.5,
    }
}
