use hdl_core::decoding::debiased_decode;
use hdl_core::metrics::{joints_difficulty, occlusion_difficulty, pck, size_difficulty, Difficulty};
use hdl_core::theory::{bhattacharyya_1d, optimal_sigma};
use hdl_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(rows: usize, cols: usize, seed: u64, scale: f64) -> Heatmap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Heatmap::from_fn(rows, cols, |_, _| scale * rng.gen::<f64>()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn softmax_sums_to_one(rows in 1usize..=64, cols in 1usize..=48, seed: u64, beta in 0.01f64..50.0) {
        let nh = softmax_normalize(&grid(rows, cols, seed, 4.0), beta).unwrap();
        let total: f64 = nh.values().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn softmax_absorbs_beta(rows in 1usize..=32, cols in 1usize..=24, seed: u64, beta in 0.1f64..30.0) {
        let h = grid(rows, cols, seed, 1.0);
        let scaled = Heatmap::new(rows, cols, h.values().iter().map(|v| beta * v).collect()).unwrap();
        let a = softmax_normalize(&h, beta).unwrap();
        let b = softmax_normalize(&scaled, 1.0).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_negative_at_target_pixel(seed: u64, gi in 0usize..16, gj in 0usize..12, beta in prop::sample::select(vec![1.0, 10.0, 20.0])) {
        let h = grid(16, 12, seed, 1.0);
        let gt = Joint2D::new(gi as f64, gj as f64);
        let (j, _) = soft_argmax_decode(&h, beta).unwrap();
        prop_assume!(j != gt);
        let g = regression_gradient(&h, beta, gt).unwrap();
        prop_assert!(g.get(gi, gj) < 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn activation_sum_grows_with_window(rows in 1usize..=40, cols in 1usize..=30, seed: u64, cx in 0.0f64..40.0, cy in 0.0f64..30.0) {
        let nh = softmax_normalize(&grid(rows, cols, seed, 3.0), 5.0).unwrap();
        let c = Joint2D::new(cx.min((rows - 1) as f64), cy.min((cols - 1) as f64));
        let mut prev = 0.0;
        for s in 0..=40 {
            let a = activation_sum(&nh, c, s);
            prop_assert!(a >= prev && a <= 1.0);
            prev = a;
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn gaussian_reflection_symmetry(mx in 0usize..30, my in 0usize..20, sigma in 0.3f64..6.0) {
        let g = gaussian_heatmap(30, 20, GaussianSpec::new(Joint2D::new(mx as f64, my as f64), sigma)).unwrap();
        for i in 0..30i64 {
            for j in 0..20i64 {
                let (ri, rj) = (2 * mx as i64 - i, 2 * my as i64 - j);
                if (0..30).contains(&ri) && (0..20).contains(&rj) {
                    prop_assert_eq!(g.get(i as usize, j as usize), g.get(ri as usize, rj as usize));
                }
            }
        }
    }

    #[test]
    fn location_factor_is_a_plane_peaking_at_a_corner(rows in 2usize..=40, cols in 2usize..=30, seed: u64, gx in 0.0f64..40.0, gy in 0.0f64..30.0) {
        let h = grid(rows, cols, seed, 1.0);
        let g = regression_gradient(&h, 10.0, Joint2D::new(gx, gy)).unwrap();
        let loc = g.location_factor.as_ref().unwrap();
        let at = |i: usize, j: usize| loc[i * cols + j];
        // Affine: every value is determined by the first row and column.
        for i in 0..rows {
            for j in 0..cols {
                let plane = at(i, 0) + at(0, j) - at(0, 0);
                prop_assert!((at(i, j) - plane).abs() < 1e-10);
            }
        }
        let max = loc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let corners = [at(0, 0), at(0, cols - 1), at(rows - 1, 0), at(rows - 1, cols - 1)];
        prop_assert!(corners.iter().any(|c| c.abs() == max));
    }

    #[test]
    fn value_weighted_location_factor_sums_to_zero(rows in 2usize..=40, cols in 2usize..=30, seed: u64, gx in 0.0f64..40.0, gy in 0.0f64..30.0) {
        let h = grid(rows, cols, seed, 1.0);
        let g = regression_gradient(&h, 10.0, Joint2D::new(gx, gy)).unwrap();
        let (vf, lf) = (g.value_factor.as_ref().unwrap(), g.location_factor.as_ref().unwrap());
        let s: f64 = vf.iter().zip(lf).map(|(a, b)| a * b).sum();
        prop_assert!(s.abs() < 1e-10, "{s}");
    }

    #[test]
    fn gradient_vanishes_where_mass_vanishes(seed: u64, gx in 0.0f64..63.0, gy in 0.0f64..47.0, beta in 10.0f64..40.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = Joint2D::new(rng.gen_range(0.0..63.0), rng.gen_range(0.0..47.0));
        let h = gaussian_heatmap(64, 48, GaussianSpec::new(mu, 1.5)).unwrap();
        let g = regression_gradient(&h, beta, Joint2D::new(gx, gy)).unwrap();
        let vf = g.value_factor.as_ref().unwrap();
        let bound = 1e-8 * beta * (64.0 + 48.0);
        for (p, v) in vf.iter().enumerate() {
            if *v < 1e-8 {
                prop_assert!(g.values[p].abs() < bound);
            }
        }
    }

    #[test]
    fn soft_argmax_tends_to_argmax(rows in 2usize..=64, cols in 2usize..=48, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let peak = rng.gen_range(0..rows * cols);
        let mut v: Vec<f64> = (0..rows * cols).map(|_| 0.9 * rng.gen::<f64>()).collect();
        v[peak] = 1.0;
        let h = Heatmap::new(rows, cols, v).unwrap();
        let arg = argmax_decode(&h);
        let mut prev = f64::INFINITY;
        for beta in [50.0, 200.0, 1000.0] {
            let d = soft_argmax_decode(&h, beta).unwrap().0.distance(&arg);
            prop_assert!(d <= prev + 1e-12);
            prev = d;
        }
        prop_assert!(prev < 0.01);
    }

    #[test]
    fn bhattacharyya_sign_structure(st in 0.3f64..5.0, d in 0.0f64..4.0, t in 0.05f64..4.0) {
        let star = optimal_sigma(st, d).unwrap();
        let sh = star * t;
        prop_assume!((t - 1.0).abs() > 1e-3);
        let here = bhattacharyya_1d(st, sh, d);
        let nudge = 1e-4 * sh;
        let toward = if sh < star { sh + nudge } else { sh - nudge };
        prop_assert!(bhattacharyya_1d(st, toward, d) < here);
    }

    #[test]
    fn pck_never_decreases_with_threshold(seed: u64, n in 1usize..40, norm in 1.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gts: Vec<Joint2D> = (0..n).map(|_| Joint2D::new(rng.gen_range(0.0..64.0), rng.gen_range(0.0..48.0))).collect();
        let preds: Vec<Joint2D> = gts.iter().map(|g| Joint2D::new(g.x + rng.gen_range(-20.0..20.0), g.y + rng.gen_range(-20.0..20.0))).collect();
        let mut prev = 0.0;
        for k in 0..=30 {
            let v = pck(&preds, &gts, norm, k as f64 * 0.05).unwrap();
            prop_assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn occlusion_and_size_bins_partition(ratio in 0.0f64..=1.0, size in 32.0f64..2000.0) {
        prop_assert_ne!(occlusion_difficulty(ratio), Difficulty::Unclassified);
        prop_assert_ne!(size_difficulty(size), Difficulty::Unclassified);
    }
}

#[test]
fn joint_counts_map_to_one_bin() {
    let mut counts = [0; 3];
    for n in 1..=17 {
        let d = joints_difficulty(n);
        let k = Difficulty::BINS.iter().position(|b| *b == d).expect("classified");
        counts[k] += 1;
    }
    assert_eq!(counts, [7, 5, 5]);
}

#[test]
fn compensated_decode_beats_raw_on_quadrant_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sigmas = [0.5, 1.0, 2.0];
    for beta in [1.0, 5.0, 10.0, 20.0] {
        let (mut raw_sum, mut comp_sum) = (0.0, 0.0);
        for k in 0..200 {
            let sigma = sigmas[k % 3];
            let m = 3.0 * sigma + 1.0;
            // Half-pixel lattice, so the sampled blob is symmetric about mu.
            let snap = |v: f64| (2.0 * v).round() / 2.0;
            let mu = Joint2D::new(snap(rng.gen_range(m..32.0 - m)), snap(rng.gen_range(24.0 + m..48.0 - m)));
            let cut = 3.0 * sigma;
            let h = Heatmap::from_fn(64, 48, |i, j| {
                let d2 = (i as f64 - mu.x).powi(2) + (j as f64 - mu.y).powi(2);
                if d2.sqrt() <= cut { (-d2 / (2.0 * sigma * sigma)).exp() } else { 0.0 }
            })
            .unwrap();
            let raw = soft_argmax_decode(&h, beta).unwrap().0.distance(&mu);
            let comp = debiased_decode(&h, beta).unwrap().distance(&mu);
            assert!(comp <= raw, "beta {beta} blob {k}: {comp} > {raw}");
            raw_sum += raw;
            comp_sum += comp;
        }
        assert!(comp_sum < raw_sum);
    }
}
