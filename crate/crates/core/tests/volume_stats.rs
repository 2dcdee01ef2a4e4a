use lobshape::synthgen::{generate_fgn, generate_order_flow, fgn_autocovariance, FgnParams, FlowParams};
use lobshape::volstats::{
    autocorrelation, dfa, empirical_log_pdf, fit_lognormal, Binning, DfaConfig, VolumeSeriesBuilder,
};
use lobshape::{LimitOrderBook, SessionConfig, Side};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Autocovariance with the mean known to be zero: Σ x_t x_{t+k} / (n − k).
fn known_mean_acov(x: &[f64], k: usize) -> f64 {
    let n = x.len();
    x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / (n - k) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn acf_is_affine_invariant(seed in any::<u64>(), a in 0.01f64..100.0, b in -1e3f64..1e3, neg in any::<bool>()) {
        let x = gaussian(500, seed);
        let a = if neg { -a } else { a };
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let cx = autocorrelation(&x, 20).unwrap();
        let cy = autocorrelation(&y, 20).unwrap();
        for (p, q) in cx.iter().zip(&cy) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn dfa_shift_invariant_and_scale_equivariant(seed in any::<u64>(), shift in -1e3f64..1e3, scale in 0.01f64..100.0) {
        let x = gaussian(2048, seed);
        let base = dfa(&x, &DfaConfig::default()).unwrap();
        let shifted = dfa(&x.iter().map(|v| v + shift).collect::<Vec<_>>(), &DfaConfig::default()).unwrap();
        let scaled = dfa(&x.iter().map(|v| v * scale).collect::<Vec<_>>(), &DfaConfig::default()).unwrap();
        for i in 0..base.fluctuation.len() {
            prop_assert!((shifted.fluctuation[i] - base.fluctuation[i]).abs() <= 1e-8 * base.fluctuation[i]);
            prop_assert!((scaled.fluctuation[i] - scale * base.fluctuation[i]).abs() <= 1e-9 * scaled.fluctuation[i]);
        }
        prop_assert!((shifted.hurst - base.hurst).abs() < 1e-8);
        prop_assert!((scaled.hurst - base.hurst).abs() < 1e-10);
    }

    #[test]
    fn lognormal_fit_shifts_by_log_of_scale(seed in any::<u64>(), c in 0.001f64..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = LogNormal::new(3.0, 0.7).unwrap();
        let v: Vec<f64> = (0..200).map(|_| d.sample(&mut rng)).collect();
        let f = fit_lognormal(&v).unwrap();
        let g = fit_lognormal(&v.iter().map(|x| x * c).collect::<Vec<_>>()).unwrap();
        prop_assert!((g.mu - f.mu - c.ln()).abs() < 1e-9);
        prop_assert!((g.sigma_ln - f.sigma_ln).abs() < 1e-9);
    }

    #[test]
    fn histogram_density_integrates_to_one(seed in any::<u64>(), n in 2usize..3000, bins in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1e5)).collect();
        for binning in [Binning::FreedmanDiaconis, Binning::Count(bins)] {
            let h = empirical_log_pdf(&v, binning).unwrap();
            prop_assert!((h.integral() - 1.0).abs() < 1e-9);
            prop_assert_eq!(h.counts.iter().sum::<u64>() as usize, n);
        }
    }
}

#[test]
fn fgn_sample_autocorrelation_matches_target() {
    let hurst = 0.8;
    let seeds = 20;
    let lags = 10;
    let mut per_seed = vec![Vec::new(); lags + 1];
    for seed in 0..seeds {
        let x = generate_fgn(&FgnParams { hurst, n: 1 << 15, seed }).unwrap();
        for (k, bucket) in per_seed.iter_mut().enumerate().skip(1) {
            bucket.push(known_mean_acov(&x, k));
        }
    }
    for (k, bucket) in per_seed.iter().enumerate().skip(1) {
        let mean = bucket.iter().sum::<f64>() / seeds as f64;
        let var = bucket.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        let se = (var / seeds as f64).sqrt();
        let target = fgn_autocovariance(hurst, k);
        assert!((mean - target).abs() <= 3.0 * se, "lag {k}: {mean} vs {target} (se {se})");
    }
}

#[test]
fn fgn_lag_one_acf_example() {
    let x = generate_fgn(&FgnParams { hurst: 0.8, n: 1 << 16, seed: 1 }).unwrap();
    let acf = autocorrelation(&x, 1).unwrap();
    let rho = 0.5 * (2f64.powf(1.6) - 2.0);
    assert!((acf[1] - rho).abs() < 0.02);
}

#[test]
fn fgn_at_half_is_white_noise() {
    let x = generate_fgn(&FgnParams { hurst: 0.5, n: 1 << 14, seed: 4 }).unwrap();
    let acf = autocorrelation(&x, 5).unwrap();
    let bound = 4.0 / (x.len() as f64).sqrt();
    for c in &acf[1..] {
        assert!(c.abs() < bound);
    }
}

#[test]
fn ar1_autocorrelation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut x = Vec::with_capacity(100_000);
    let mut prev = 0.0;
    for _ in 0..100_000 {
        let e: f64 = rng.sample(StandardNormal);
        prev = 0.5 * prev + e;
        x.push(prev);
    }
    let acf = autocorrelation(&x, 5).unwrap();
    for (l, c) in acf.iter().enumerate() {
        assert!((c - 0.5f64.powi(l as i32)).abs() < 0.02, "lag {l}: {c}");
    }
}

#[test]
fn white_noise_hurst_is_half() {
    let r = dfa(&gaussian(1 << 14, 12), &DfaConfig::default()).unwrap();
    assert!((r.hurst - 0.5).abs() < 0.05);
}

#[test]
fn second_order_dfa_removes_linear_trend() {
    let x = generate_fgn(&FgnParams { hurst: 0.7, n: 1 << 14, seed: 6 }).unwrap();
    let n = x.len() as f64;
    let trended: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + 200.0 * i as f64 / n).collect();
    let order2 = DfaConfig { order: 2, ..DfaConfig::default() };
    let clean = dfa(&x, &order2).unwrap();
    let with_trend = dfa(&trended, &order2).unwrap();
    assert!((with_trend.hurst - clean.hurst).abs() < 0.01);
    assert!((clean.hurst - 0.7).abs() < 0.06);
    // First order cannot remove the quadratic the trend leaves in the profile.
    let first = dfa(&trended, &DfaConfig::default()).unwrap();
    assert!(first.hurst > with_trend.hurst + 0.05);
}

#[test]
fn lognormal_recovery_single_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let d = LogNormal::new(8.0, 1.0).unwrap();
    let v: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
    let f = fit_lognormal(&v).unwrap();
    assert!((f.mu - 8.0).abs() / 8.0 < 0.01);
    assert!((f.sigma_ln - 1.0).abs() < 0.02);
    assert!(f.ks_distance < 1.63 / (v.len() as f64).sqrt());
}

#[test]
fn log_histogram_chi_square_against_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let d = LogNormal::new(8.0, 1.0).unwrap();
    let v: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
    let h = empirical_log_pdf(&v, Binning::Width(0.2)).unwrap();
    let normal = Normal::new(8.0, 1.0).unwrap();
    let mut chi2 = 0.0;
    let mut cells = 0;
    for (i, &observed) in h.counts.iter().enumerate() {
        let left = h.origin + i as f64 * h.bin_width;
        let expected = v.len() as f64 * (normal.cdf(left + h.bin_width) - normal.cdf(left));
        if expected >= 5.0 {
            chi2 += (observed as f64 - expected).powi(2) / expected;
            cells += 1;
        }
    }
    let critical = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(chi2 < critical, "chi2 {chi2} over {cells} cells, critical {critical}");
}

#[test]
fn uniform_change_of_variables() {
    // v ~ U(a, b) gives f(ln v) = e^x / (b − a).
    let (a, b) = (10.0, 1000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let v: Vec<f64> = (0..200_000).map(|_| rng.random_range(a..b)).collect();
    let h = empirical_log_pdf(&v, Binning::Count(40)).unwrap();
    let n = v.len() as f64;
    for (i, &count) in h.counts.iter().enumerate() {
        let left = h.origin + i as f64 * h.bin_width;
        let right = left + h.bin_width;
        // Exact bin probability, clipped to the support.
        let p = ((right.exp().min(b)) - left.exp().max(a)).max(0.0) / (b - a);
        let expected = n * p;
        if expected < 50.0 {
            continue;
        }
        let sd = (expected * (1.0 - p)).sqrt();
        assert!((count as f64 - expected).abs() < 5.0 * sd, "bin {i}: {count} vs {expected}");
    }
}

#[test]
fn minute_series_matches_brute_force_average() {
    let config = SessionConfig::default();
    let params = FlowParams { events: 20_000, seed: 2, ..FlowParams::default() };
    let (events, _) = generate_order_flow(&params, &config).unwrap();
    let mut book = LimitOrderBook::new(&config);
    let mut builder = VolumeSeriesBuilder::new(Side::Buy, 3, 60, &config).unwrap();
    let mut sums = vec![0u64; 240];
    let mut counts = vec![0u64; 240];
    let windows = [(9 * 3600 + 30 * 60, 0usize), (13 * 3600, 120usize)];
    for e in &events {
        book.apply_event(e).unwrap();
        builder.push_book(&book);
        let v3 = book.snapshot_shape(Side::Buy, 3).volumes[2];
        let t = e.wall_time.0 as f64 / 100.0;
        let (start, offset) = if t <= 11.5 * 3600.0 { windows[0] } else { windows[1] };
        let k = (((t - start as f64) / 60.0).ceil() as usize).max(1) - 1;
        sums[offset + k] += v3;
        counts[offset + k] += 1;
    }
    let series = builder.finish();
    assert_eq!(series.interval_count, 240);
    let mut j = 0;
    for i in 0..240 {
        if counts[i] == 0 {
            assert!(series.gaps.contains(&i));
        } else {
            assert_eq!(series.indices[j], i);
            assert!((series.values[j] - sums[i] as f64 / counts[i] as f64).abs() < 1e-9);
            j += 1;
        }
    }
}
