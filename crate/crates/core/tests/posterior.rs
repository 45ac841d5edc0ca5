use contraction_core::posterior::*;
use contraction_core::rng::{derive_seed, rng_from_seed};
use contraction_core::spectral::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn problem(rho: Vec<f64>, lam: Vec<f64>, kind: &CouplingKind, noise: NoiseModel) -> InverseProblem {
    let n = rho.len();
    InverseProblem::new(
        OperatorSpectrum::explicit(rho).unwrap(),
        make_coupling(kind, n, 3).unwrap(),
        GaussianSequenceMeasure::explicit(lam, Basis::Phi).unwrap(),
        noise,
    )
    .unwrap()
}

fn sample_of(y: Vec<f64>, n_level: f64) -> DataSample {
    let n = y.len();
    DataSample {
        y: DVector::from_vec(y),
        n_level,
        u0: DVector::zeros(n),
        u0_basis: Basis::Phi,
        seed: 0,
    }
}

#[test]
fn potential_at_exact_data_is_nonpositive() {
    let p = problem(
        vec![1.0, 0.5, 0.2],
        vec![1.0, 0.5, 0.1],
        &CouplingKind::banded_default(),
        NoiseModel::white(3).unwrap(),
    );
    let u = DVector::from_vec(vec![0.3, -1.0, 2.0]);
    let gu = p.forward_apply(&u, Basis::Phi).unwrap();
    let phi = potential_phi(&p, &gu, &u, 7.0).unwrap();
    assert!((phi + 3.5 * gu.norm_squared()).abs() < 1e-12);
    assert!(phi <= 0.0);
}

#[test]
fn potential_uses_cameron_martin_pairing() {
    let cov = random_spd(2, 1.0, 2);
    let noise = NoiseModel::dense(cov.clone()).unwrap();
    let p = problem(
        vec![1.0, 0.5],
        vec![1.0, 1.0],
        &CouplingKind::Identity,
        noise,
    );
    let u = DVector::from_vec(vec![1.0, 1.0]);
    let y = DVector::from_vec(vec![0.2, -0.4]);
    let gu = p.forward_apply(&u, Basis::Phi).unwrap();
    let inv = cov.try_inverse().unwrap();
    let expected = 0.5 * 3.0 * gu.dot(&(&inv * &gu)) - 3.0 * y.dot(&(&inv * &gu));
    assert!((potential_phi(&p, &y, &u, 3.0).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn noiseless_limit_inverts_forward_map() {
    let v = DVector::from_vec(vec![1.0, 2.0]);
    let p = problem(
        vec![1.0, 0.25],
        vec![1.0, 1.0],
        &CouplingKind::Reflection { v },
        NoiseModel::white(2).unwrap(),
    );
    let y = DVector::from_vec(vec![0.7, -0.3]);
    let post = conjugate_posterior(&p, &sample_of(y.as_slice().to_vec(), 1e10)).unwrap();
    let exact = p.coupling().to_phi(&y.component_div(p.rho()));
    assert!((post.mean - exact).norm() < 1e-4);
}

#[test]
fn zero_data_gives_zero_mean() {
    let p = problem(
        vec![1.0, 0.5, 0.1],
        vec![1.0, 0.3, 0.2],
        &CouplingKind::banded_default(),
        NoiseModel::white(3).unwrap(),
    );
    let post = conjugate_posterior(&p, &sample_of(vec![0.0; 3], 10.0)).unwrap();
    assert!(post.mean.iter().all(|&m| m == 0.0));
}

#[test]
fn precision_reconstruction() {
    let n = 5;
    let noise = NoiseModel::dense(random_spd(n, 0.5, 11)).unwrap();
    let rho: Vec<f64> = (1..=n).map(|k| 1.0 / k as f64).collect();
    let lam: Vec<f64> = (1..=n).map(|k| (k as f64).powi(-2)).collect();
    let p = problem(rho, lam.clone(), &CouplingKind::banded_default(), noise);
    let n_level = 40.0;
    let op = PosteriorOperator::new(&p, n_level).unwrap();
    let post = op.posterior(&DVector::from_element(n, 0.1)).unwrap();
    // P = diag(1/λ) + n (ζ^{-1/2} G T)ᵀ(ζ^{-1/2} G T).
    let m = p.noise().whiten_matrix(&p.forward_matrix());
    let mut expected = m.tr_mul(&m) * n_level;
    for (i, l) in lam.iter().enumerate() {
        expected[(i, i)] += 1.0 / l;
    }
    assert!((op.precision() - &expected).norm() <= 1e-8 * expected.norm());
    let cov = post.covariance();
    assert!((&cov * &expected - DMatrix::<f64>::identity(n, n)).norm() < 1e-8);
    assert!(post.cov_factor.diagonal().iter().all(|&d| d > 0.0));
    for i in 0..n {
        for j in i + 1..n {
            assert_eq!(post.cov_factor[(i, j)], 0.0);
        }
    }
}

#[test]
fn chebyshev_radius_exceedance_is_small() {
    let p = problem(
        vec![1.0, 0.5, 0.2],
        vec![1.0, 0.5, 0.1],
        &CouplingKind::banded_default(),
        NoiseModel::white(3).unwrap(),
    );
    let u0 = DVector::from_vec(vec![0.5, 0.5, 0.5]);
    let data = p.simulate_data(&u0, 20.0, 1).unwrap();
    let post = conjugate_posterior(&p, &data).unwrap();
    let xi = 1e3 * ((&post.mean - &u0).norm() + post.trace_cov());
    let e = posterior_exceedance(&post, &u0, xi, 1000, 2).unwrap();
    assert!(e.value < 0.01);
}

#[test]
fn exceedance_curve_is_monotone() {
    let p = problem(
        vec![1.0, 0.5, 0.2, 0.1],
        vec![1.0, 0.5, 0.2, 0.1],
        &CouplingKind::banded_default(),
        NoiseModel::white(4).unwrap(),
    );
    let u0 = DVector::from_element(4, 0.2);
    let data = p.simulate_data(&u0, 10.0, 5).unwrap();
    let post = conjugate_posterior(&p, &data).unwrap();
    let xis: Vec<f64> = (0..60).map(|i| 0.02 * i as f64).collect();
    let curve = posterior_exceedance_curve(&post, &u0, &xis, 500, 9).unwrap();
    assert_eq!(curve[0].value, 1.0);
    for w in curve.windows(2) {
        assert!(w[1].value <= w[0].value);
    }
    for e in &curve {
        assert!(e.std_error <= 0.5 / (e.mc_count as f64).sqrt() + 1e-12);
    }
}

#[test]
fn shift_covariance_is_bit_exact() {
    // Dyadic inputs keep the subtraction mean − u0 exact after a shift.
    let post = PosteriorGaussian {
        mean: DVector::from_vec(vec![0.5, -0.25, 0.125]),
        cov_factor: DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.0, 0.0, 0.25, 0.5, 0.0, 0.0, 0.125, 0.25],
        ),
        n_level: 1.0,
    };
    let u0 = DVector::from_vec(vec![0.25, 0.0, -0.5]);
    let shift = DVector::from_vec(vec![2.0, -4.0, 1.0]);
    let moved = PosteriorGaussian {
        mean: &post.mean + &shift,
        ..post.clone()
    };
    for xi in [0.1, 0.5, 1.0] {
        let a = posterior_exceedance(&post, &u0, xi, 1000, 77).unwrap();
        let b = posterior_exceedance(&moved, &(&u0 + &shift), xi, 1000, 77).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn scaling_noise_and_level_together_is_bit_exact() {
    let rho = vec![1.0, 0.5, 0.25, 0.125];
    let lam = vec![1.0, 0.5, 0.3, 0.2];
    let zeta = vec![1.0, 2.0, 0.5, 1.5];
    let base = problem(
        rho.clone(),
        lam.clone(),
        &CouplingKind::banded_default(),
        NoiseModel::diagonal(zeta.clone()).unwrap(),
    );
    let y = vec![0.3, -0.1, 0.7, 0.05];
    for c in [2.0, 0.25, 8.0] {
        let scaled_noise = NoiseModel::diagonal(zeta.iter().map(|z| z * c).collect()).unwrap();
        let scaled = base.with_noise(scaled_noise).unwrap();
        let a = conjugate_posterior(&base, &sample_of(y.clone(), 10.0)).unwrap();
        let b = conjugate_posterior(&scaled, &sample_of(y.clone(), 10.0 * c)).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.cov_factor, b.cov_factor);
    }
}

#[test]
fn weighted_zero_radius_and_empty_set() {
    let p = problem(
        vec![1.0, 0.5],
        vec![1.0, 0.5],
        &CouplingKind::Identity,
        NoiseModel::white(2).unwrap(),
    );
    let data = sample_of(vec![0.0, 0.0], 5.0);
    let u0 = DVector::zeros(2);
    let all = weighted_posterior_exceedance(&p, &data, &u0, 0.0, p.prior(), 2000, 1).unwrap();
    assert_eq!(all.estimate.value, 1.0);
    let none = weighted_posterior_exceedance(&p, &data, &u0, 1e6, p.prior(), 2000, 1).unwrap();
    assert_eq!(none.estimate.value, 0.0);
    assert!(none.log_normalizer.is_finite() && none.normalizer() > 0.0);
}

#[test]
fn weighted_matches_conjugate_on_one_problem() {
    let p = problem(
        vec![1.0, 0.6],
        vec![1.0, 0.5],
        &CouplingKind::banded_default(),
        NoiseModel::white(2).unwrap(),
    );
    let u0 = DVector::from_vec(vec![0.4, -0.2]);
    let data = p.simulate_data(&u0, 10.0, 3).unwrap();
    let post = conjugate_posterior(&p, &data).unwrap();
    let xi = post.marginal_sd().max();
    let c = posterior_exceedance(&post, &u0, xi, 20_000, 4).unwrap();
    let w = weighted_posterior_exceedance(&p, &data, &u0, xi, p.prior(), 20_000, 5).unwrap();
    assert!(!w.degenerate);
    let se = (c.std_error.powi(2) + w.estimate.std_error.powi(2)).sqrt();
    assert!(
        (c.value - w.estimate.value).abs() <= 4.0 * se,
        "{c:?} {w:?}"
    );
}

#[test]
fn weighted_accepts_non_gaussian_prior() {
    let p = problem(
        vec![1.0, 0.6],
        vec![1.0, 0.5],
        &CouplingKind::Identity,
        NoiseModel::white(2).unwrap(),
    );
    let prior = ScaledProductPrior::new(p.prior().variances(), CoordinateLaw::Laplace).unwrap();
    let u0 = DVector::from_vec(vec![0.4, -0.2]);
    let data = p.simulate_data(&u0, 10.0, 3).unwrap();
    let w = weighted_posterior_exceedance(&p, &data, &u0, 0.3, &prior, 5000, 5).unwrap();
    assert!(w.estimate.value > 0.0 && w.estimate.value < 1.0);
    assert!(w.ess > 10.0);
}

#[test]
fn degenerate_weights_are_flagged() {
    // Huge n concentrates the posterior far inside one prior draw's cell.
    let p = problem(
        vec![1.0],
        vec![1.0],
        &CouplingKind::Identity,
        NoiseModel::white(1).unwrap(),
    );
    let data = sample_of(vec![0.3], 1e9);
    let w = weighted_posterior_exceedance(&p, &data, &DVector::zeros(1), 0.1, p.prior(), 1000, 2)
        .unwrap();
    assert!(w.degenerate);
}

#[test]
fn conjugacy_cross_check_on_random_problems() {
    let mut agree = 0;
    for case in 0..10u64 {
        let mut rng = rng_from_seed(derive_seed(99, &[case]));
        let n = rng.random_range(1..=4usize);
        let mut rho: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
        rho.sort_by(|a, b| b.total_cmp(a));
        let lam: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
        let kind = if case % 2 == 0 {
            CouplingKind::banded_default()
        } else {
            CouplingKind::Identity
        };
        let p = problem(rho, lam, &kind, NoiseModel::white(n).unwrap());
        let u0 = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)));
        let data = p.simulate_data(&u0, 10.0, case).unwrap();
        let post = conjugate_posterior(&p, &data).unwrap();
        let xi = post.marginal_sd().max();
        let c = posterior_exceedance(&post, &u0, xi, 20_000, case + 100).unwrap();
        let w = weighted_posterior_exceedance(&p, &data, &u0, xi, p.prior(), 20_000, case + 200)
            .unwrap();
        let se = (c.std_error.powi(2) + w.estimate.std_error.powi(2)).sqrt();
        if (c.value - w.estimate.value).abs() <= 4.0 * se {
            agree += 1;
        }
    }
    assert!(agree >= 9, "{agree}/10");
}
