use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uplift_core::baselearn::FitConfig;
use uplift_core::dataset::CampaignDataset;
use uplift_core::metalearn::{fit_s, fit_t, fit_x, Calibration};

fn flat_rct(n: usize, p_control: f64, p_treated: f64, seed: u64) -> CampaignDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
    let treatments: Vec<u32> = (0..n).map(|_| u32::from(rng.random::<f64>() < 0.5)).collect();
    let outcomes: Vec<f64> = treatments
        .iter()
        .map(|&t| {
            let p = if t == 1 { p_treated } else { p_control };
            f64::from(rng.random::<f64>() < p)
        })
        .collect();
    let ids = (0..n).map(|i| format!("c{i}")).collect();
    CampaignDataset::new(
        ids,
        vec!["f1".into(), "f2".into()],
        features,
        treatments,
        outcomes,
    )
    .unwrap()
}

fn main() {
    let cfg = FitConfig::default();
    let t0 = std::time::Instant::now();
    for seed in 40..60u64 {
        let ds = flat_rct(2000, 0.10, 0.30, seed);
        let mut sums = [0.0; 2];
        let mut counts = [0.0; 2];
        for (&t, &y) in ds.treatments().iter().zip(ds.outcomes()) {
            sums[t as usize] += y;
            counts[t as usize] += 1.0;
        }
        let diff = sums[1] / counts[1] - sums[0] / counts[0];

        let mut report = format!("seed {seed}: diff {diff:.4}");
        let mut ok = true;
        for (name, model) in [
            ("S", fit_s(&ds, &cfg, Calibration::None).unwrap()),
            ("T", fit_t(&ds, &cfg, Calibration::None).unwrap()),
            ("X", fit_x(&ds, &cfg, Calibration::None).unwrap()),
        ] {
            let cate = model.predict_cate(&ds.features().view()).unwrap();
            let lo = cate.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = cate.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = cate.iter().sum::<f64>() / cate.len() as f64;
            report += &format!("  {name}: [{lo:.4},{hi:.4}] m={mean:.4}");
            if lo < 0.18 || hi > 0.22 {
                ok = false;
            }
        }
        println!("{report}  {}", if ok { "PASS" } else { "-" });
    }
    println!("elapsed {:?}", t0.elapsed());

    // Null-effect check for a few seeds.
    for seed in [45u64, 46, 47] {
        let ds = flat_rct(2000, 0.20, 0.20, seed);
        let mut line = format!("null seed {seed}:");
        for (name, model) in [
            ("S", fit_s(&ds, &cfg, Calibration::None).unwrap()),
            ("T", fit_t(&ds, &cfg, Calibration::None).unwrap()),
            ("X", fit_x(&ds, &cfg, Calibration::None).unwrap()),
        ] {
            let cate = model.predict_cate(&ds.features().view()).unwrap();
            let mean = cate.iter().sum::<f64>() / cate.len() as f64;
            line += &format!(" {name}={mean:+.4}");
        }
        println!("{line}");
    }
}
