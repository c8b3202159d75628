use mumimo::channel::{FadingProfile, PilotMatrix, PowerSplit, SystemConfig};
use mumimo::linalg::{orthonormal_rows, CMat};
use mumimo::pilot::{pilot_orthogonal, pilot_random, pilot_uniform, PilotDesignSpec, PilotKind};
use mumimo::power::effective_gains;
use mumimo::throughput::{asymptotic_throughput, evaluate_design, mc_throughput, pilot_gains, uniform_gains};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(n: usize, k: usize, t: usize, at: usize, rho_db: f64) -> SystemConfig {
    SystemConfig::with_snr_db(n, k, t, at, rho_db).unwrap()
}

#[test]
fn dft_pilot_reproduces_uniform_gains() {
    for &(k, at) in &[(6usize, 10usize), (12, 5)] {
        let c = cfg(16, k, 40, at, 10.0);
        let fading = FadingProfile::uniform(k, 0.8).unwrap();
        let gamma = 1.3;
        let power = PowerSplit::from_training(vec![gamma; k], c.alpha);
        let gp = power.gamma_prime[0];
        let spec = PilotDesignSpec::new(PilotKind::Uniform, c, fading.clone(), power.clone());
        let pilot = pilot_uniform(&spec).unwrap();
        let g = pilot_gains(&c, &fading, &pilot, &power).unwrap();
        let u = uniform_gains(&c, 0.8, gamma, gp);
        assert_eq!(g.lambdas.len(), u.lambdas.len());
        for l in &g.lambdas {
            assert!((l / g.sigma_v2 - u.lambdas[0]).abs() < 1e-9 * u.lambdas[0], "K={k}: {} vs {}", l / g.sigma_v2, u.lambdas[0]);
        }
    }
}

#[test]
fn orthogonal_pilot_matches_closed_form_gains() {
    let c = cfg(8, 4, 30, 6, 15.0);
    let fading = FadingProfile::new(vec![1.5, 1.0, 0.6, 0.3]).unwrap();
    let power = PowerSplit::from_training(vec![1.2, 2.0, 0.7, 3.0], c.alpha);
    let spec = PilotDesignSpec::new(PilotKind::Orthogonal, c, fading.clone(), power.clone()).with_seed(4);
    let pilot = pilot_orthogonal(&spec).unwrap();
    let a = evaluate_design(&c, &fading, &pilot, &power, 2000, 11).unwrap();
    let g = effective_gains(&c, &fading, &power).unwrap();
    let b = mc_throughput(&c, &g, 4, 2000, 11).unwrap();
    assert!((a.rate_bits_per_symbol - b.rate_bits_per_symbol).abs() < 1e-9 * b.rate_bits_per_symbol);
}

#[test]
fn zero_pilot_inflates_noise_and_loses_rate() {
    let c = cfg(8, 3, 20, 4, 10.0);
    let fading = FadingProfile::new(vec![1.0, 0.8, 0.5]).unwrap();
    let power = PowerSplit::from_training(vec![1.0; 3], c.alpha);
    let zero = PilotMatrix::new(CMat::zeros(3, 4));
    let g = pilot_gains(&c, &fading, &zero, &power).unwrap();
    assert!(g.sigma_v2 > c.n0);
    let r = evaluate_design(&c, &fading, &zero, &power, 200, 1).unwrap();
    let perfect = mumimo::power::EffectiveGains {
        lambdas: fading.d.iter().zip(&power.gamma_prime).map(|(d, gp)| d * d * gp * c.p0).collect(),
        sigma_v2: c.n0,
    };
    let p = mc_throughput(&c, &perfect, 3, 200, 1).unwrap();
    assert!(r.rate_bits_per_symbol < p.rate_bits_per_symbol);
}

#[test]
fn rate_invariant_under_right_unitary() {
    let c = cfg(10, 5, 40, 8, 12.0);
    let fading = FadingProfile::new(vec![2.0, 1.2, 1.0, 0.5, 0.4]).unwrap();
    let power = PowerSplit::from_training(vec![1.0; 5], c.alpha);
    let spec = PilotDesignSpec::new(PilotKind::Random, c, fading.clone(), power.clone());
    let pilot = pilot_random(&spec, 3).unwrap();
    let v = orthonormal_rows(8, 8, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let rotated = PilotMatrix::new(&pilot.xp * v);
    let a = evaluate_design(&c, &fading, &pilot, &power, 1000, 2).unwrap();
    let b = evaluate_design(&c, &fading, &rotated, &power, 1000, 2).unwrap();
    assert!((a.rate_bits_per_symbol - b.rate_bits_per_symbol).abs() < 1e-9 * a.rate_bits_per_symbol);
}

#[test]
fn rate_monotone_in_gains_and_noise() {
    let c = cfg(6, 3, 20, 4, 0.0);
    let base = mumimo::power::EffectiveGains { lambdas: vec![2.0, 1.0, 0.5], sigma_v2: 1.0 };
    let r0 = mc_throughput(&c, &base, 3, 300, 8).unwrap().rate_bits_per_symbol;
    for k in 0..3 {
        let mut up = base.clone();
        up.lambdas[k] *= 1.1;
        assert!(mc_throughput(&c, &up, 3, 300, 8).unwrap().rate_bits_per_symbol >= r0);
    }
    let mut noisy = base.clone();
    noisy.sigma_v2 = 1.2;
    assert!(mc_throughput(&c, &noisy, 3, 300, 8).unwrap().rate_bits_per_symbol <= r0);
}

#[test]
fn asymptotic_tracks_monte_carlo_on_uniform_design() {
    for at in [20usize, 100, 160] {
        let c = cfg(100, 100, 200, at, -18.0);
        let mc = mc_throughput(&c, &uniform_gains(&c, 1.0, 1.0, 1.0), at.min(100), 400, 1).unwrap();
        let asy = asymptotic_throughput(&c, 1.0, 1.0, 1.0).unwrap();
        let rel = (mc.rate_bits_per_symbol - asy.rate_bits_per_symbol).abs() / mc.rate_bits_per_symbol;
        assert!(rel < 0.02, "αT={at}: mc {} asy {}", mc.rate_bits_per_symbol, asy.rate_bits_per_symbol);
    }
}

#[test]
fn asymptotic_scales_linearly_in_leading_n() {
    // fixed τN, β, ω: the rate is proportional to N
    let a = cfg(100, 100, 200, 40, -18.0);
    let b = cfg(50, 50, 100, 20, -18.0);
    let ra = asymptotic_throughput(&a, 1.0, 1.0, 1.0).unwrap().rate_bits_per_symbol;
    let tau_a = mumimo::power::tau(&a, 1.0, 1.0, 1.0, 100).value * 100.0;
    // pick d for the half-size system so that τN matches
    let (mut lo, mut hi) = (0.1, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mumimo::power::tau(&b, mid, 1.0, 1.0, 50).value * 50.0 < tau_a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rb = asymptotic_throughput(&b, 0.5 * (lo + hi), 1.0, 1.0).unwrap().rate_bits_per_symbol;
    assert!((rb - 0.5 * ra).abs() < 1e-9 * ra, "{rb} vs {}", 0.5 * ra);
}

