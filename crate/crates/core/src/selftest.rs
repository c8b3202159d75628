//! Reduced-size health checks, for a quick sanity run of a build.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::{sample_scenario, FadingProfile, SystemConfig};
use crate::linalg::hermitian_eigenvalues;
use crate::majorization::{majorizes, min_majorizing_vector, schur_horn};
use crate::optimizer::{lower_bound_pipeline, optimal_k_uniform, upper_bound_pipeline, PipelineOptions};
use crate::power::{gamma_uniform_opt, tau};
use crate::quadrature::GaussLegendre;
use crate::throughput::{asymptotic_throughput, mc_throughput, uniform_gains, MPSupport};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    let t0 = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Check { name, passed, detail, seconds: t0.elapsed().as_secs_f64() }
}

fn majorization(rng: &mut ChaCha8Rng) -> Result<String, String> {
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let m = rng.random_range(0..n);
        let x = min_majorizing_vector(&y, m).map_err(|e| e.to_string())?;
        if !majorizes(&x, &y).map_err(|e| e.to_string())? {
            return Err(format!("{x:?} does not majorize {y:?}"));
        }
        if x.iter().filter(|v| **v == 0.0).count() < m {
            return Err(format!("{x:?} has fewer than {m} zeros"));
        }
    }
    Ok("200 vectors".into())
}

fn schur_horn_check(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let eigs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0).collect();
        // a random doubly stochastic average of the spectrum is majorized by it
        let mut diag = vec![0.0; n];
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        for i in 0..n {
            for j in 0..n {
                diag[i] += eigs[(i + j) % n] * w[j] / total;
            }
        }
        let a = schur_horn(&eigs, &diag).map_err(|e| e.to_string())?;
        let mut got = hermitian_eigenvalues(&a).map_err(|e| e.to_string())?;
        got.sort_by(|x, y| y.total_cmp(x));
        let mut want = eigs.clone();
        want.sort_by(|x, y| y.total_cmp(x));
        let scale = want.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            worst = worst.max((got[i] - want[i]).abs() / scale);
            worst = worst.max((a[(i, i)].re - diag[i]).abs() / scale);
        }
    }
    if worst < 1e-8 {
        Ok(format!("worst relative error {worst:.1e}"))
    } else {
        Err(format!("worst relative error {worst:.1e}"))
    }
}

fn closed_form_gamma(rng: &mut ChaCha8Rng) -> Result<String, String> {
    for _ in 0..50 {
        let t = rng.random_range(20..=100);
        let at = rng.random_range(1..t);
        let k = rng.random_range(1..=2 * t);
        let cfg = SystemConfig::with_snr_db(8, k, t, at, rng.random_range(-10.0..40.0)).map_err(|e| e.to_string())?;
        let d = rng.random_range(0.1..2.0);
        let a = cfg.alpha;
        let g = gamma_uniform_opt(&cfg, d).map_err(|e| e.to_string())?;
        let at_g = |g: f64| tau(&cfg, d, g, (1.0 - a * g) / (1.0 - a), k).value;
        let best = at_g(g);
        let grid = (0..=1000).map(|i| at_g(i as f64 / 1000.0 / a)).fold(f64::MIN, f64::max);
        if grid > best * (1.0 + 1e-3) + 1e-12 {
            return Err(format!("grid beats closed form: {grid} > {best} (K={k}, T={t}, αT={at})"));
        }
    }
    Ok("50 draws".into())
}

fn optimal_k() -> Result<String, String> {
    let k = optimal_k_uniform(0.5, 200, 1.0, 1.0).map_err(|e| e.to_string())?;
    if k != 100 {
        return Err(format!("K_opt = {k}, want 100"));
    }
    for at in [40usize, 100, 160] {
        let k = optimal_k_uniform(at as f64 / 200.0, 200, 1e6, 1.0).map_err(|e| e.to_string())?;
        if k.abs_diff(at) > 1 {
            return Err(format!("high SNR K_opt = {k}, αT = {at}"));
        }
    }
    Ok("K_opt = 100 at α = 0.5, ρ0d² = 1".into())
}

fn mp_mass() -> Result<String, String> {
    let s = MPSupport::new(1.0, 0.5, 0.6).map_err(|e| e.to_string())?;
    let m = s.integrate(&GaussLegendre::new(256), |_| 1.0);
    if (m - 1.0).abs() < 1e-6 {
        Ok(format!("mass {m:.9}"))
    } else {
        Err(format!("mass {m}"))
    }
}

fn asymptotic_agreement() -> Result<String, String> {
    let cfg = SystemConfig::with_snr_db(100, 100, 200, 60, -18.0).map_err(|e| e.to_string())?;
    let mc = mc_throughput(&cfg, &uniform_gains(&cfg, 1.0, 1.0, 1.0), 60, 300, 1).map_err(|e| e.to_string())?;
    let asy = asymptotic_throughput(&cfg, 1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let rel = (mc.rate_bits_per_symbol - asy.rate_bits_per_symbol).abs() / mc.rate_bits_per_symbol;
    let msg = format!("MC {:.4} vs asymptotic {:.4}", mc.rate_bits_per_symbol, asy.rate_bits_per_symbol);
    if rel < 0.02 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn sandwich(seed: u64) -> Result<String, String> {
    let k = 12;
    let fading: FadingProfile = sample_scenario(k, 100.0, seed).map_err(|e| e.to_string())?;
    let cfg = SystemConfig::with_snr_db(16, k, 40, 4, 50.0).map_err(|e| e.to_string())?;
    let opts = PipelineOptions { alpha_step: 4, trials: 400, seed, ..PipelineOptions::default() };
    let up = upper_bound_pipeline(&cfg, &fading, &opts).map_err(|e| e.to_string())?;
    let lo = lower_bound_pipeline(&cfg, &fading, &opts).map_err(|e| e.to_string())?;
    let (u, l) = (up.rate.rate_bits_per_symbol, lo.rate.rate_bits_per_symbol);
    let msg = format!("upper {u:.4} lower {l:.4}");
    if l <= u + up.rate.ci() + lo.rate.ci() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Runs every check; `seed` drives the random draws.
pub fn run_quick(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        check("majorization", || majorization(&mut rng)),
        check("schur_horn", || schur_horn_check(&mut rng)),
        check("closed_form_gamma", || closed_form_gamma(&mut rng)),
        check("optimal_k", optimal_k),
        check("mp_mass", mp_mass),
        check("asymptotic_agreement", asymptotic_agreement),
        check("bound_sandwich", || sandwich(seed)),
    ]
}
