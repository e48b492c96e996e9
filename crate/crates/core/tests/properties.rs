use aeromodal::config::PipelineConfig;
use aeromodal::cs::{compress_snapshot, make_measurement, MeasurementKind};
use aeromodal::dmd::{
    hankel_embed, iterate_until_converged, DmdConfig, LoopConfig, TruncationConfig, TruncationMethod,
};
use aeromodal::ingest::{
    build_snapshot_matrix, compute_snr, detect_maneuvers, ChannelRecord, DetectionConfig, TestPointDataset,
};
use aeromodal::rpca::soft_threshold;
use aeromodal::sparsity::{build_amplitude_problem, direct_residual, symmetrize_support};
use faer::{c64, Mat};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noisy_tone(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|t| (0.05 * t as f64).sin() + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Bursts of a decaying tone at the given onsets, on `n` channels.
fn bursts(n: usize, len: usize, onsets: &[usize], seed: u64) -> TestPointDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = (0..n)
        .map(|c| {
            let w: f64 = rng.sample(StandardNormal);
            let mut x: Vec<f64> = (0..len).map(|_| 1e-3 * rng.sample::<f64, _>(StandardNormal)).collect();
            for &o in onsets {
                for (tau, v) in x[o..].iter_mut().enumerate() {
                    let t = tau as f64;
                    *v += w * (-0.01 * t).exp() * (0.2 * t).sin();
                }
            }
            ChannelRecord::new(format!("c{c}"), x)
        })
        .collect();
    TestPointDataset::new("burst", channels, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn snr_is_gain_invariant(seed in 0u64..1000, gain in 1e-3f64..1e3) {
        let x = noisy_tone(512, seed);
        let a = compute_snr(&ChannelRecord::new("a", x.clone())).unwrap();
        let b = compute_snr(&ChannelRecord::new("b", x.iter().map(|v| v * gain).collect())).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn detection_follows_translation(shift in 0usize..400, seed in 0u64..100) {
        let base = bursts(3, 4000, &[300, 1500, 2700], seed);
        let moved = bursts(3, 4000 + shift, &[300 + shift, 1500 + shift, 2700 + shift], seed);
        let cfg = DetectionConfig::default();
        let a = detect_maneuvers(&base, 3, 800, &cfg).unwrap();
        let b = detect_maneuvers(&moved, 3, 800, &cfg).unwrap();
        for (wa, wb) in a.iter().zip(&b) {
            prop_assert_eq!(wa.start + shift, wb.start);
        }
    }

    #[test]
    fn hankel_blocks_are_shifted_snapshots(r in 1usize..5, m in 3usize..20, d in 1usize..6, seed in 0u64..100) {
        prop_assume!(d < m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Mat::from_fn(r, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let h = hankel_embed(x.as_ref(), d).unwrap();
        prop_assert_eq!(h.shape(), (r * d, m - d + 1));
        for i in 0..d {
            for j in 0..m - d + 1 {
                for k in 0..r {
                    prop_assert_eq!(h[(i * r + k, j)], x[(k, i + j)]);
                }
            }
        }
    }

    #[test]
    fn soft_threshold_shrinks_towards_zero(values in prop::collection::vec(-10.0f64..10.0, 1..40), tau in 0.0f64..5.0) {
        let m = Mat::from_fn(values.len(), 1, |i, _| values[i]);
        let s = soft_threshold(m.as_ref(), tau);
        for (i, &v) in values.iter().enumerate() {
            let out = s[(i, 0)];
            prop_assert!(out.abs() <= v.abs());
            if v.abs() <= tau {
                prop_assert_eq!(out, 0.0);
            } else {
                prop_assert_eq!(out.signum(), v.signum());
                prop_assert!((v.abs() - out.abs() - tau).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_form_matches_residual(seed in 0u64..1000, n in 2usize..8, r in 1usize..5, t in 5usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Mat::from_fn(n, t, |_, _| rng.sample::<f64, _>(StandardNormal));
        let phi = Mat::from_fn(n, r, |_, _| c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let lam: Vec<c64> = (0..r)
            .map(|_| c64::from_polar(rng.random_range(0.5..1.05), rng.random_range(-3.0..3.0)))
            .collect();
        let b: Vec<c64> = (0..r).map(|_| c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let problem = build_amplitude_problem(x.as_ref(), phi.as_ref(), &lam, t).unwrap();
        let direct = direct_residual(x.as_ref(), phi.as_ref(), &lam, &b);
        prop_assert!((problem.objective(&b) - direct).abs() <= 1e-8 * direct.max(1.0));
    }

    #[test]
    fn symmetrized_support_is_conjugate_closed(pairs in 1usize..6, reals in 0usize..3, pick in prop::collection::vec(any::<bool>(), 12)) {
        let mut lam = Vec::new();
        for k in 0..pairs {
            let z = c64::from_polar(0.9, 0.3 + 0.4 * k as f64);
            lam.push(z);
            lam.push(z.conj());
        }
        for k in 0..reals {
            lam.push(c64::new(0.5 + 0.1 * k as f64, 0.0));
        }
        let r = lam.len();
        let phi = Mat::from_fn(2, r, |i, j| c64::new(1.0 + i as f64, j as f64));
        let x = Mat::<f64>::zeros(2, 4);
        let problem = build_amplitude_problem(x.as_ref(), phi.as_ref(), &lam, 4).unwrap();
        let support: Vec<usize> = (0..r).filter(|&i| pick[i % pick.len()]).collect();
        let closed = symmetrize_support(&problem, &support);
        for &k in &closed {
            let partner = lam[k].conj();
            if lam[k].im != 0.0 {
                prop_assert!(closed.iter().any(|&j| (lam[j] - partner).norm() < 1e-12));
            }
        }
        for k in support {
            prop_assert!(closed.contains(&k));
        }
    }

    #[test]
    fn compression_is_linear(seed in 0u64..200, p in 1usize..6, a in -3.0f64..3.0) {
        let ds = bursts(6, 900, &[100, 500], seed);
        let windows = detect_maneuvers(&ds, 2, 300, &DetectionConfig::default()).unwrap();
        let x = build_snapshot_matrix(&ds, &windows, 300, false).unwrap();
        let c = make_measurement(MeasurementKind::GaussianRandom, p, 6, seed).unwrap();
        let scaled = x.with_values(&x.values * faer::Scale(a));
        let y = compress_snapshot(&x, &c).unwrap();
        let ys = compress_snapshot(&scaled, &c).unwrap();
        let diff = &ys.values - &y.values * faer::Scale(a);
        prop_assert!(diff.norm_l2() <= 1e-10 * (1.0 + y.values.norm_l2() * a.abs()));
    }

    #[test]
    fn canonical_config_text_round_trips(delay in 10usize..500, lambda in 0.1f64..4.0, n_gammas in 2usize..300, rpca in any::<bool>()) {
        let text = format!("delay.d = {delay}\nrpca.lambda = {lambda}\nsparsity.n_gammas = {n_gammas}\nrpca.enabled = {rpca}\n");
        let cfg = PipelineConfig::from_text(&text).unwrap();
        let again = PipelineConfig::from_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(cfg.to_text(), again.to_text());
        prop_assert_eq!(cfg.hash(), again.hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reconstruction_history_never_increases(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m) = (6, 120);
        let x = Mat::from_fn(n, m, |i, t| {
            let t = t as f64;
            (1.0 + i as f64) * (-0.01 * t).exp() * (0.3 * t + i as f64).sin()
                + 0.5 * (-0.02 * t).exp() * (0.7 * t).cos()
        }) + Mat::from_fn(n, m, |_, _| 0.05 * rng.sample::<f64, _>(StandardNormal));
        let cfg = DmdConfig {
            truncation: TruncationConfig { method: TruncationMethod::Fixed, rank: Some(4), ..TruncationConfig::default() },
            delay: 10,
            ..DmdConfig::default()
        };
        let lc = LoopConfig { threshold: 1e-6, max_outer: 5, stall: 0.0 };
        let (_, rec) = iterate_until_converged(x.as_ref(), 1.0, &cfg, &lc).unwrap();
        prop_assert_eq!(rec.history.len(), rec.iterations);
        for w in rec.history.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert_eq!(*rec.history.last().unwrap(), rec.rel_rms);
    }
}
