//! The distribution zoo: named parametric families used across tests and the
//! CLI. Every builder is deterministic in its parameters.

use std::collections::BTreeMap;

use crate::dist::{compensated_sum, ExplicitDistribution};
use crate::error::{Error, Result};

/// `name -> short usage line`, for `zoo list`.
pub fn catalog() -> Vec<(&'static str, &'static str)> {
    vec![
        ("uniform", "uniform:n=<N> — equal mass 1/N on N elements"),
        ("point_mass", "point_mass — a single element of mass 1"),
        (
            "two_level",
            "two_level:n=<N>,heavy=<a>,heavy_mass=<p> — a elements of mass p each, rest uniform",
        ),
        ("zipf", "zipf:n=<N>,s=<s> — mass(i) ∝ 1/i^s, i = 1..N"),
        (
            "geometric",
            "geometric:n=<N>,ratio=<r> — mass(i) ∝ r^i, truncated and normalized",
        ),
        (
            "paired_flat",
            "paired_flat:j=<J> — J equal-mass pairs (uniform over 2J, pairing-compatible)",
        ),
        (
            "paired_geo",
            "paired_geo:j=<J>,gamma=<g>,decay=<d> — J pairs, in-pair ratio g ∈ [1,√2], cross-pair decay d",
        ),
        (
            "near_uniform",
            "near_uniform:n=<N>,alpha=<a> — masses (1±a)/N alternating; friendly iff a ≤ 6/13",
        ),
        (
            "with_zeros",
            "with_zeros:n=<N>,zeros=<z> — uniform over N−z plus z zero-mass entries (unfriendly)",
        ),
        (
            "dusted_uniform",
            "dusted_uniform:n=<N>,dust=<τ> — N near-uniform elements plus one element of mass τ",
        ),
    ]
}

pub fn uniform(n: usize) -> Result<ExplicitDistribution> {
    if n == 0 {
        return Err(Error::InvalidParameter("uniform needs n ≥ 1".into()));
    }
    ExplicitDistribution::from_masses(&vec![1.0 / n as f64; n])
}

pub fn point_mass() -> ExplicitDistribution {
    ExplicitDistribution::from_masses(&[1.0]).expect("point mass is valid")
}

/// `heavy` elements with mass `heavy_mass` each; the remaining mass spread
/// uniformly over the other `n - heavy` elements.
pub fn two_level(n: usize, heavy: usize, heavy_mass: f64) -> Result<ExplicitDistribution> {
    if heavy == 0 || heavy >= n {
        return Err(Error::InvalidParameter(
            "two_level needs 1 ≤ heavy < n".into(),
        ));
    }
    let total_heavy = heavy as f64 * heavy_mass;
    if !(0.0..1.0).contains(&total_heavy) {
        return Err(Error::InvalidParameter(format!(
            "two_level heavy mass {total_heavy} must lie in [0, 1)"
        )));
    }
    let light = (1.0 - total_heavy) / (n - heavy) as f64;
    let mut masses = vec![heavy_mass; heavy];
    masses.extend(std::iter::repeat(light).take(n - heavy));
    ExplicitDistribution::from_masses(&masses)
}

pub fn zipf(n: usize, s: f64) -> Result<ExplicitDistribution> {
    if n == 0 || !s.is_finite() || s < 0.0 {
        return Err(Error::InvalidParameter("zipf needs n ≥ 1 and s ≥ 0".into()));
    }
    let weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-s)).collect();
    normalized(weights)
}

pub fn geometric(n: usize, ratio: f64) -> Result<ExplicitDistribution> {
    if n == 0 || !(0.0 < ratio && ratio < 1.0) {
        return Err(Error::InvalidParameter(
            "geometric needs n ≥ 1 and ratio in (0,1)".into(),
        ));
    }
    let weights: Vec<f64> = (0..n).map(|i| ratio.powi(i as i32)).collect();
    normalized(weights)
}

/// Uniform over 2J elements laid out as J pairs. Each pair satisfies the
/// pairing constraint μ(2j) ≤ μ(2j−1) ≤ √2·μ(2j) with equality on the left.
pub fn paired_flat(j: usize) -> Result<ExplicitDistribution> {
    if j == 0 {
        return Err(Error::InvalidParameter("paired_flat needs j ≥ 1".into()));
    }
    uniform(2 * j)
}

/// J pairs where pair k has masses (γ·w, w) with w ∝ decay^k. Pairing-compatible
/// for 1 ≤ γ ≤ √2.
pub fn paired_geo(j: usize, gamma: f64, decay: f64) -> Result<ExplicitDistribution> {
    if j == 0 || !(1.0..=std::f64::consts::SQRT_2).contains(&gamma) || !(0.0 < decay && decay <= 1.0)
    {
        return Err(Error::InvalidParameter(
            "paired_geo needs j ≥ 1, gamma in [1, √2], decay in (0,1]".into(),
        ));
    }
    let mut weights = Vec::with_capacity(2 * j);
    for k in 0..j {
        let w = decay.powi(k as i32);
        weights.push(gamma * w);
        weights.push(w);
    }
    normalized(weights)
}

/// Alternating masses (1+α)/N and (1−α)/N. Requires even N. Friendly exactly
/// when 1 − α ≥ 7/13, i.e. α ≤ 6/13.
pub fn near_uniform(n: usize, alpha: f64) -> Result<ExplicitDistribution> {
    if n == 0 || n % 2 != 0 || !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(
            "near_uniform needs even n and alpha in [0,1)".into(),
        ));
    }
    let masses: Vec<f64> = (0..n)
        .map(|i| {
            if i % 2 == 0 {
                (1.0 + alpha) / n as f64
            } else {
                (1.0 - alpha) / n as f64
            }
        })
        .collect();
    ExplicitDistribution::from_masses(&masses)
}

/// Uniform over n − zeros elements padded with `zeros` zero-mass entries.
pub fn with_zeros(n: usize, zeros: usize) -> Result<ExplicitDistribution> {
    if zeros >= n {
        return Err(Error::InvalidParameter("with_zeros needs zeros < n".into()));
    }
    let live = n - zeros;
    let mut masses = vec![1.0 / live as f64; live];
    masses.extend(std::iter::repeat(0.0).take(zeros));
    ExplicitDistribution::from_masses(&masses)
}

/// N elements sharing mass 1 − dust uniformly plus one trailing element of
/// mass `dust`. With small dust this has a non-trivial good partition: the
/// dust element sits below (2/3)‖μ‖₂² while the bulk sits above (11/20)‖μ‖₂².
pub fn dusted_uniform(n: usize, dust: f64) -> Result<ExplicitDistribution> {
    if n == 0 || !(0.0 < dust && dust < 1.0) {
        return Err(Error::InvalidParameter(
            "dusted_uniform needs n ≥ 1 and dust in (0,1)".into(),
        ));
    }
    let mut masses = vec![(1.0 - dust) / n as f64; n];
    masses.push(dust);
    ExplicitDistribution::from_masses(&masses)
}

fn normalized(weights: Vec<f64>) -> Result<ExplicitDistribution> {
    let total = compensated_sum(weights.iter().copied());
    let masses: Vec<f64> = weights.iter().map(|w| w / total).collect();
    // Division leaves the sum a few ulps off 1; absorb the residue into the
    // largest entry so the constructor's 1e-12 check is honest arithmetic.
    let mut masses = masses;
    let residue = 1.0 - compensated_sum(masses.iter().copied());
    if let Some(idx) = masses
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
    {
        masses[idx] += residue;
    }
    ExplicitDistribution::from_masses(&masses)
}

/// Builds a zoo member from a name and `key=value` parameters.
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<ExplicitDistribution> {
    let get = |key: &str| -> Result<f64> {
        params
            .get(key)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("{name} needs parameter `{key}`")))
    };
    let get_usize = |key: &str| -> Result<usize> {
        let v = get(key)?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(Error::InvalidParameter(format!(
                "{name}: `{key}` must be a non-negative integer, got {v}"
            )));
        }
        Ok(v as usize)
    };
    match name {
        "uniform" => uniform(get_usize("n")?),
        "point_mass" => Ok(point_mass()),
        "two_level" => two_level(
            get_usize("n")?,
            params.get("heavy").map_or(Ok(1), |_| get_usize("heavy"))?,
            get("heavy_mass")?,
        ),
        "zipf" => zipf(get_usize("n")?, get("s")?),
        "geometric" => geometric(get_usize("n")?, get("ratio")?),
        "paired_flat" => paired_flat(get_usize("j")?),
        "paired_geo" => paired_geo(get_usize("j")?, get("gamma")?, get("decay")?),
        "near_uniform" => near_uniform(get_usize("n")?, get("alpha")?),
        "with_zeros" => with_zeros(get_usize("n")?, get_usize("zeros")?),
        "dusted_uniform" => dusted_uniform(get_usize("n")?, get("dust")?),
        other => Err(Error::UnknownZoo(other.into())),
    }
}

/// A fixed sweep of ≥ 20 members with domains up to 10⁴, used by identity
/// suites. Every member is valid by construction.
pub fn identity_sweep() -> Vec<(String, ExplicitDistribution)> {
    let mut out: Vec<(String, ExplicitDistribution)> = Vec::new();
    let mut push = |name: String, d: ExplicitDistribution| out.push((name, d));
    for n in [2usize, 4, 16, 100, 1024, 10_000] {
        push(format!("uniform:n={n}"), uniform(n).unwrap());
    }
    push("point_mass".into(), point_mass());
    for (n, heavy, p) in [(50, 1, 0.5), (100, 1, 0.5), (64, 1, 0.3), (1000, 3, 0.1)] {
        push(
            format!("two_level:n={n},heavy={heavy},heavy_mass={p}"),
            two_level(n, heavy, p).unwrap(),
        );
    }
    for (n, s) in [(100, 1.0), (100, 0.5), (1000, 1.5)] {
        push(format!("zipf:n={n},s={s}"), zipf(n, s).unwrap());
    }
    push("geometric:n=50,ratio=0.9".into(), geometric(50, 0.9).unwrap());
    push("paired_flat:j=8".into(), paired_flat(8).unwrap());
    push(
        "paired_geo:j=10,gamma=1.2,decay=0.85".into(),
        paired_geo(10, 1.2, 0.85).unwrap(),
    );
    for (n, a) in [(16, 0.2), (64, 0.45), (512, 0.3)] {
        push(
            format!("near_uniform:n={n},alpha={a}"),
            near_uniform(n, a).unwrap(),
        );
    }
    push("with_zeros:n=20,zeros=4".into(), with_zeros(20, 4).unwrap());
    push(
        "dusted_uniform:n=50,dust=0.001".into(),
        dusted_uniform(50, 0.001).unwrap(),
    );
    push("explicit:0.75/0.25".into(), {
        ExplicitDistribution::from_masses(&[0.75, 0.25]).unwrap()
    });
    push("explicit:0.6/0.4".into(), {
        ExplicitDistribution::from_masses(&[0.6, 0.4]).unwrap()
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_masses() {
        let d = uniform(100).unwrap();
        assert_eq!(d.domain_size(), 100);
        assert!(d.masses().all(|m| (m - 0.01).abs() < 1e-15));
    }

    #[test]
    fn two_level_example() {
        let d = two_level(100, 1, 0.5).unwrap();
        let masses: Vec<f64> = d.masses().collect();
        assert_eq!(masses[0], 0.5);
        assert!(masses[1..].iter().all(|&m| (m - 0.5 / 99.0).abs() < 1e-15));
    }

    #[test]
    fn paired_flat_is_equal_pairs() {
        let d = paired_flat(8).unwrap();
        assert_eq!(d.domain_size(), 16);
        let m: Vec<f64> = d.masses().collect();
        for j in 0..8 {
            let (hi, lo) = (m[2 * j], m[2 * j + 1]);
            assert!(lo <= hi && hi <= std::f64::consts::SQRT_2 * lo);
            assert_eq!(hi, lo);
        }
    }

    #[test]
    fn sweep_is_valid_and_cauchy_schwarz_holds() {
        let sweep = identity_sweep();
        assert!(sweep.len() >= 20);
        for (name, d) in sweep {
            let l2 = d.l2_squared();
            assert!(
                d.l3_cubed() + 1e-12 >= l2 * l2,
                "Cauchy-Schwarz violated for {name}"
            );
            assert!(d.t_coefficient() >= -1e-12, "t < 0 for {name}");
        }
    }

    #[test]
    fn unknown_name_errors() {
        assert!(build("nope", &BTreeMap::new()).is_err());
        let mut p = BTreeMap::new();
        p.insert("n".into(), 0.0);
        assert!(build("uniform", &p).is_err());
    }
}
