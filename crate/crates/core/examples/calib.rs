use collnorm::oracle::derive_seed;
use collnorm::toplevel::{estimate_l2_top_level_with, RescaledAdvice};
use collnorm::{zoo, SampleOracle};

fn main() {
    let dists = vec![
        ("uniform16", zoo::uniform(16).unwrap()),
        ("uniform256", zoo::uniform(256).unwrap()),
        ("two_level100", zoo::two_level(100, 1, 0.5).unwrap()),
        ("zipf100", zoo::zipf(100, 1.0).unwrap()),
    ];
    for (name, d) in &dists {
        let exact = d.l2_squared();
        let mut hits = 0u32;
        let mut errs = 0u32;
        let trials = 60u64;
        let mut samples = 0u64;
        for t in 0..trials {
            let mut o = SampleOracle::new(d, derive_seed(0x41, t));
            match estimate_l2_top_level_with(&mut o, 0.25, 1.0 / 3.0, 1e-4, &mut RescaledAdvice(5e-14)) {
                Ok(rep) => {
                    samples += rep.samples;
                    if (rep.value - exact).abs() <= 0.25 * exact {
                        hits += 1;
                    }
                }
                Err(e) => {
                    if errs == 0 {
                        println!("  {name} trial {t} error: {e}");
                    }
                    errs += 1;
                }
            }
        }
        println!(
            "{name}: hits {hits}/{trials} errors {errs} avg_samples {}",
            samples / trials.max(1)
        );
    }
}
