use rand::Rng;
use rand_distr::StandardNormal;
use subset_mle::mglmm::*;
use subset_mle::quadrature::{marginal_success_prob, GaussHermite};
use subset_mle::rng::stream;

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log marginal likelihood of a single cell by adaptive tensor Gauss-Hermite
/// over (u1, u2), written independently of the library's sampler.
fn oracle_single_cell(theta: &MglmmParams, x: f64, y1: f64, y2: f64) -> f64 {
    let (b1, b2, td) = (theta.beta1[0], theta.beta2[0], theta.thetad);
    let h = |a: f64, b: f64| {
        let e = a + b;
        let r = y1 - b1 * x - e;
        let eta = b2 * x + e;
        let sp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
        -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * r * r + y2 * eta - sp
            - (2.0 * std::f64::consts::PI * td).ln()
            - 0.5 * (a * a + b * b) / td
    };
    // Newton on (a, b) with analytic derivatives.
    let (mut a, mut b) = (0.0f64, 0.0f64);
    let mut hess = [[0.0; 2]; 2];
    for _ in 0..100 {
        let e = a + b;
        let sig = 1.0 / (1.0 + (-(b2 * x + e)).exp());
        let common = (y1 - b1 * x - e) + (y2 - sig);
        let g = [common - a / td, common - b / td];
        let w = 1.0 + sig * (1.0 - sig);
        hess = [[w + 1.0 / td, w], [w, w + 1.0 / td]];
        let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
        let da = (hess[1][1] * g[0] - hess[0][1] * g[1]) / det;
        let db = (hess[0][0] * g[1] - hess[1][0] * g[0]) / det;
        a += da;
        b += db;
        if da.abs().max(db.abs()) < 1e-14 {
            break;
        }
    }
    // Scale by the Cholesky factor of the curvature.
    let l00 = hess[0][0].sqrt();
    let l10 = hess[1][0] / l00;
    let l11 = (hess[1][1] - l10 * l10).sqrt();
    let rule = GaussHermite::<f64>::new(128).unwrap();
    let s2 = std::f64::consts::SQRT_2;
    let mut terms = Vec::with_capacity(128 * 128);
    for (xa, wa) in rule.nodes().iter().zip(rule.weights()) {
        for (xb, wb) in rule.nodes().iter().zip(rule.weights()) {
            // u = mode + sqrt(2) L^-T (xa, xb)
            let zb = s2 * xb / l11;
            let za = (s2 * xa - l10 * zb) / l00;
            terms.push(wa.ln() + wb.ln() + h(a + za, b + zb) + xa * xa + xb * xb);
        }
    }
    log_sum_exp(&terms) + (2.0f64).ln() - (l00 * l11).ln()
}

#[test]
fn single_cell_matches_quadrature_oracle() {
    let theta = MglmmParams::new(vec![0.8], vec![-0.5], 0.7).unwrap();
    let design = MglmmDesign::new(1, 1, vec![0.6], 0.1).unwrap();
    let trials = 1000;
    let mut inside = 0;
    for trial in 0..trials {
        let data = simulate_mglmm(&theta, &design, trial).unwrap();
        let cfg = ApproxConfig {
            seed: 10_000 + trial,
            ..Default::default()
        };
        let est = full_loglik_mglmm(&theta, &data, &cfg).unwrap();
        let oracle = oracle_single_cell(&theta, 0.6, data.y1[0], f64::from(data.y2[0]));
        if (est.estimate - oracle).abs() <= 3.0 * est.mc_stderr {
            inside += 1;
        }
    }
    assert!(inside as f64 >= 0.99 * trials as f64, "{inside} of {trials} within 3 SE");
}

#[test]
fn small_variance_limit_is_conditional_density_at_zero() {
    // The gap to the u = 0 density is about thetad * N^2 / 2 times an O(1)
    // random factor, so the variance is scaled down with N.
    for (levels, thetad) in [(1usize, 0.01), (4, 0.001)] {
        let theta = MglmmParams::new(vec![0.5], vec![1.0], thetad).unwrap();
        let design = MglmmDesign::generate(levels, 1, 0.05, 2).unwrap();
        for seed in 0..5 {
            let data = simulate_mglmm(&theta, &design, seed).unwrap();
            let est = full_loglik_mglmm(&theta, &data, &ApproxConfig::default()).unwrap();
            let at_zero = conditional_loglik(&theta, &data, &vec![0.0; 2 * levels]).unwrap();
            assert!(
                (est.estimate - at_zero).abs() <= 3.0 * est.mc_stderr + 0.05,
                "N={levels}: {} vs {at_zero}",
                est.estimate
            );
        }
    }
}

#[test]
fn unused_predictor_has_zero_score() {
    let theta = MglmmParams::new(vec![0.5, -1.0], vec![1.0, 0.7], 0.4).unwrap();
    let base = MglmmDesign::generate(3, 2, 0.05, 4).unwrap();
    let mut x = base.x.clone();
    for cell in 0..9 {
        x[cell * 2 + 1] = 0.0;
    }
    let design = MglmmDesign {
        x,
        ..base
    };
    let data = simulate_mglmm(&theta, &design, 1).unwrap();
    let g = mglmm_score(&theta, &data, &ApproxConfig::default()).unwrap();
    assert_eq!(g[1], 0.0);
    assert_eq!(g[3], 0.0);
    assert!(g[0] != 0.0 && g[4] != 0.0);
}

#[test]
fn score_matches_central_differences_at_random_points() {
    let mut rng = stream(77, &[1]);
    for k in 0..3 {
        let theta = MglmmParams::new(
            vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            rng.random_range(0.2..1.5),
        )
        .unwrap();
        let design = MglmmDesign::generate(2, 2, 0.05, k).unwrap();
        let data = simulate_mglmm(&theta, &design, k).unwrap();
        let cfg = ApproxConfig {
            seed: k,
            ..Default::default()
        };
        let g = mglmm_score(&theta, &data, &cfg).unwrap();
        let v = theta.to_vec();
        let mut worst: f64 = 0.0;
        let mut fd = vec![0.0; v.len()];
        for c in 0..v.len() {
            let h = 1e-6 * (1.0 + v[c].abs());
            let (mut up, mut dn) = (v.clone(), v.clone());
            up[c] += h;
            dn[c] -= h;
            let f = |w: &[f64]| full_loglik_mglmm(&MglmmParams::from_slice(w).unwrap(), &data, &cfg).unwrap().estimate;
            fd[c] = (f(&up) - f(&dn)) / (2.0 * h);
        }
        let scale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for c in 0..v.len() {
            worst = worst.max((g[c] - fd[c]).abs() / scale);
        }
        assert!(worst <= 1e-4, "relative error {worst:e}");
    }
}

#[test]
fn marginal_moments_of_simulated_responses() {
    let theta = MglmmParams::new(vec![0.0], vec![0.0], 0.5).unwrap();
    let design = MglmmDesign::new(2, 1, vec![0.5, 0.0, 0.0, 0.5], 0.1).unwrap();
    let reps = 20_000;
    let (mut s1, mut s2, mut ones, mut cross) = (0.0, 0.0, 0.0, 0.0);
    for r in 0..reps {
        let d = simulate_mglmm(&theta, &design, r).unwrap();
        let y = d.y1[0];
        s1 += y;
        s2 += y * y;
        ones += f64::from(d.y2[0]);
        cross += d.y1[0] * d.y1[3];
    }
    let n = reps as f64;
    let mean = s1 / n;
    let var = s2 / n - mean * mean;
    // Var of the sample variance for a normal: 2 sigma^4 / n
    let target = 1.0 + 2.0 * theta.thetad;
    assert!((var - target).abs() <= 3.0 * (2.0 * target * target / n).sqrt());
    assert!((ones / n - 0.5).abs() <= 3.0 * (0.25 / n).sqrt());
    // diagonal cells (0,0) and (1,1) share no effect
    assert!((cross / n).abs() <= 3.0 * target / n.sqrt());
}

#[test]
fn success_probability_matches_monte_carlo() {
    let p = marginal_success_prob(&[1.0], &[1.0], 0.5).unwrap();
    let mut rng = stream(5, &[0]);
    let draws = 10_000_000;
    let mut acc = 0.0;
    for _ in 0..draws {
        let v: f64 = rng.sample(StandardNormal);
        acc += 1.0 / (1.0 + (-(1.0 + v)).exp());
    }
    let mc = acc / draws as f64;
    // logistic values are in (0, 1), so the sd is below 1/2
    assert!((p - mc).abs() <= 3.0 * 0.5 / (draws as f64).sqrt(), "{p} vs {mc}");
}

#[test]
fn normal_subcollection_mean_matches_closed_form() {
    let t0 = MglmmParams::new(vec![1.0, -0.5], vec![0.5, 0.25], 0.5).unwrap();
    let t = MglmmParams::new(vec![0.7, -0.2], vec![0.5, 0.25], 0.9).unwrap();
    let design = MglmmDesign::generate(8, 2, 0.1, 6).unwrap();
    let exact = expected_ratio_normal(&t, &t0, &design);
    let exact_b = expected_ratio_bernoulli(&t, &t0, &design).unwrap();
    let reps = 4000;
    let (mut s, mut ss, mut sb, mut ssb) = (0.0, 0.0, 0.0, 0.0);
    for r in 0..reps {
        let data = simulate_mglmm(&t0, &design, r).unwrap();
        let v = subcoll_ratio_normal(&t, &t0, &data).unwrap();
        let b = subcoll_ratio_bernoulli(&t, &t0, &data).unwrap();
        s += v;
        ss += v * v;
        sb += b;
        ssb += b * b;
    }
    let n = reps as f64;
    let se = ((ss / n - (s / n).powi(2)) / n).sqrt();
    let se_b = ((ssb / n - (sb / n).powi(2)) / n).sqrt();
    assert!((s / n - exact).abs() <= 3.0 * se, "{} vs {exact}", s / n);
    assert!((sb / n - exact_b).abs() <= 3.0 * se_b + 1e-12, "{} vs {exact_b}", sb / n);
}
