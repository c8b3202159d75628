//! Throughput evaluation.
//!
//! Monte Carlo: `(1-α) E log2 det(I_N + G diag(λ) G† / σ_v²)` with `G`
//! drawn i.i.d. CN(0, 1). Asymptotic: the same quantity for uniform
//! fading with the eigenvalue law of `G̃G̃†/N` replaced by its
//! Marchenko–Pastur limit.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    equivalent_noise_power, mmse_error_matrix, whitened_pilot, FadingProfile, PilotMatrix, PowerSplit,
    SystemConfig,
};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigenvalues, weighted_logdet, CMat, LogdetWorkspace};
use crate::power::{tau, EffectiveGains};
use crate::quadrature::GaussLegendre;

/// Quadrature nodes used by [`asymptotic_throughput`].
pub const QUADRATURE_NODES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    MonteCarlo,
    Asymptotic,
}

/// Achievable rate in bits per channel use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    #[serde(rename = "rate")]
    pub rate_bits_per_symbol: f64,
    pub method: RateMethod,
    pub trials: usize,
    /// 95% confidence half-width, Monte Carlo only.
    #[serde(rename = "ci", default, skip_serializing_if = "Option::is_none")]
    pub ci_halfwidth: Option<f64>,
}

impl ThroughputReport {
    pub fn zero(method: RateMethod, trials: usize) -> Self {
        let ci_halfwidth = (method == RateMethod::MonteCarlo).then_some(0.0);
        ThroughputReport { rate_bits_per_symbol: 0.0, method, trials, ci_halfwidth }
    }

    /// Confidence half-width, zero for deterministic methods.
    pub fn ci(&self) -> f64 {
        self.ci_halfwidth.unwrap_or(0.0)
    }
}

/// Estimates `(1-α) E log2 det(I + G diag(λ_1..λ_n) G†/σ_v²)` with
/// `n = n_active`.
///
/// Trial `i` draws from its own ChaCha stream, so the estimate depends on
/// `(seed, trials)` only, not on thread scheduling.
pub fn mc_throughput(
    cfg: &SystemConfig,
    gains: &EffectiveGains,
    n_active: usize,
    trials: usize,
    seed: u64,
) -> Result<ThroughputReport> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::Validation("need at least one Monte Carlo trial".into()));
    }
    let cap = cfg.n_users.min(cfg.training_len());
    if n_active > cap || n_active > gains.lambdas.len() {
        return Err(Error::Dimension(format!(
            "n_active = {n_active} exceeds min(K, αT) = {cap} or the {} available gains",
            gains.lambdas.len()
        )));
    }
    if !(gains.sigma_v2 > 0.0) {
        return Err(Error::Domain(format!("σ_v² must be positive, got {}", gains.sigma_v2)));
    }
    let weights: Vec<f64> = gains.lambdas[..n_active].iter().map(|l| l.max(0.0)).collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Ok(ThroughputReport::zero(RateMethod::MonteCarlo, trials));
    }
    let n = cfg.n_antennas;
    let inv_s = 1.0 / gains.sigma_v2;
    let samples: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map_init(
            || (LogdetWorkspace::default(), vec![0.0; n * n_active], vec![0.0; n * n_active]),
            |(ws, re, im), trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(trial as u64);
                for (r, i) in re.iter_mut().zip(im.iter_mut()) {
                    *r = rng.sample::<f64, _>(StandardNormal) * FRAC_1_SQRT_2;
                    *i = rng.sample::<f64, _>(StandardNormal) * FRAC_1_SQRT_2;
                }
                weighted_logdet(re, im, n, n_active, &weights, inv_s, ws)
            },
        )
        .collect();
    let scale = 1.0 - cfg.alpha;
    let mut values = Vec::with_capacity(trials);
    for v in samples {
        let v = v.ok_or_else(|| Error::Numeric("log-determinant of a non-finite matrix".into()))?;
        values.push(scale * v);
    }
    let mean = values.iter().sum::<f64>() / trials as f64;
    let ci = if trials > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        1.96 * (var / trials as f64).sqrt()
    } else {
        0.0
    };
    Ok(ThroughputReport {
        rate_bits_per_symbol: mean.max(0.0),
        method: RateMethod::MonteCarlo,
        trials,
        ci_halfwidth: Some(ci),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpRegime {
    OmegaLeAlpha,
    OmegaGtAlpha,
}

/// Support `[a, b]` of the limiting eigenvalue law of `G̃G̃†/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MPSupport {
    pub a: f64,
    pub b: f64,
    pub regime: MpRegime,
}

impl MPSupport {
    /// `β = K/N`, `ω = K/T`. For `ω > α` only `αT` streams are trained and
    /// the ratio becomes `αβ/ω = αT/N`.
    pub fn new(beta: f64, omega: f64, alpha: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("β must be positive, got {beta}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::Domain(format!("ω must be positive, got {omega}")));
        }
        let (ratio, regime) = if omega <= alpha {
            (beta, MpRegime::OmegaLeAlpha)
        } else {
            (alpha * beta / omega, MpRegime::OmegaGtAlpha)
        };
        let r = ratio.sqrt();
        Ok(MPSupport { a: (1.0 - r).powi(2), b: (1.0 + r).powi(2), regime })
    }

    /// Aspect ratio of `G̃`: `β`, or `αβ/ω` when `ω > α`.
    pub fn ratio(&self) -> f64 {
        (self.b.sqrt() - 1.0).powi(2)
    }

    /// Total mass of the density, `min(ratio, 1)`.
    pub fn mass(&self) -> f64 {
        self.ratio().min(1.0)
    }

    /// `∫_a^b g(λ) f(λ) dλ` with `λ = a + (b-a) sin²θ`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, rule: &GaussLegendre, g: F) -> f64 {
        let w = self.b - self.a;
        rule.integrate(0.0, FRAC_PI_2, |theta| {
            let (s, co) = theta.sin_cos();
            let lambda = self.a + w * s * s;
            if lambda <= 0.0 {
                return 0.0;
            }
            // √((λ-a)(b-λ)) dλ = 2 w² s² c² dθ
            g(lambda) * w * w * s * s * co * co / (PI * lambda)
        })
    }

    fn density(&self, lambda: f64) -> f64 {
        let v = (lambda - self.a).max(0.0) * (self.b - lambda).max(0.0);
        v.sqrt() / (2.0 * PI * lambda)
    }
}

/// Limiting density of the nonzero eigenvalues of `G̃G̃†/N`,
/// `√((λ-a)⁺(b-λ)⁺) / (2πλ)`.
pub fn mp_density(lambda: f64, beta: f64, omega: f64, alpha: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("density is defined for λ > 0, got {lambda}")));
    }
    Ok(MPSupport::new(beta, omega, alpha)?.density(lambda))
}

/// Large-system throughput of the uniform design,
/// `(1-α) N ∫ log2(1 + τNλ) f(λ) dλ`, with `β = K/N` and `ω = K/T` taken
/// from `cfg`.
pub fn asymptotic_throughput(cfg: &SystemConfig, d: f64, gamma: f64, gamma_prime: f64) -> Result<ThroughputReport> {
    cfg.validate()?;
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("large-scale gain must be finite and nonnegative, got {d}")));
    }
    let (k, n) = (cfg.n_users as f64, cfg.n_antennas as f64);
    let support = MPSupport::new(k / n, k / cfg.coherence as f64, cfg.alpha)?;
    let coef = tau(cfg, d, gamma, gamma_prime, cfg.n_users).value * n;
    if !(coef > 0.0) {
        return Ok(ThroughputReport::zero(RateMethod::Asymptotic, 0));
    }
    let rule = GaussLegendre::new(QUADRATURE_NODES);
    let integral = support.integrate(&rule, |l| (coef * l).ln_1p() / std::f64::consts::LN_2);
    Ok(ThroughputReport {
        rate_bits_per_symbol: ((1.0 - cfg.alpha) * n * integral).max(0.0),
        method: RateMethod::Asymptotic,
        trials: 0,
        ci_halfwidth: None,
    })
}

/// Gains of the DFT design under uniform fading, normalised to unit noise:
/// `min(K, αT)` equal entries `τ`.
pub fn uniform_gains(cfg: &SystemConfig, d: f64, gamma: f64, gamma_prime: f64) -> EffectiveGains {
    let n = cfg.n_users.min(cfg.training_len());
    let t = tau(cfg, d, gamma, gamma_prime, cfg.n_users).value;
    EffectiveGains { lambdas: vec![t; n], sigma_v2: 1.0 }
}

/// Eigenvalues of `R_{X_d}^{1/2} D X̃X̃† D R_{X_d}^{1/2}` (descending, at
/// most `min(K, αT)` of them) and `σ_v² = tr(M D² R_{X_d}) + N0` for an
/// arbitrary pilot.
pub fn pilot_gains(
    cfg: &SystemConfig,
    fading: &FadingProfile,
    pilot: &PilotMatrix,
    power: &PowerSplit,
) -> Result<EffectiveGains> {
    cfg.validate()?;
    fading.validate()?;
    let k = cfg.n_users;
    if fading.len() != k || power.len() != k || pilot.users() != k {
        return Err(Error::Dimension(format!(
            "config has {k} users, fading {}, powers {}, pilot rows {}",
            fading.len(),
            power.len(),
            pilot.users()
        )));
    }
    if pilot.symbols() != cfg.training_len() {
        return Err(Error::Dimension(format!(
            "pilot spans {} symbols but αT = {}",
            pilot.symbols(),
            cfg.training_len()
        )));
    }
    let d = &fading.d;
    let xt = whitened_pilot(&pilot.xp, d, cfg.n0)?;
    let m = mmse_error_matrix(&pilot.xp, d, cfg.n0)?;
    let noise = equivalent_noise_power(&m, d, power, cfg.p0, cfg.n0)?;

    let scale: Vec<f64> = (0..k).map(|i| d[i] * (power.gamma_prime[i] * cfg.p0).max(0.0).sqrt()).collect();
    let mut y = xt.clone();
    for i in 0..k {
        y.row_mut(i).iter_mut().for_each(|z| *z *= c(scale[i], 0.0));
    }
    // nonzero spectrum of Y Y† equals that of the smaller Y† Y
    let gram: CMat = if y.ncols() <= y.nrows() { y.adjoint() * &y } else { &y * y.adjoint() };
    let mut lambdas = hermitian_eigenvalues(&gram)?;
    lambdas.truncate(k.min(cfg.training_len()));
    lambdas.iter_mut().for_each(|l| *l = l.max(0.0));
    Ok(EffectiveGains { lambdas, sigma_v2: noise.sigma_v2 })
}

/// Monte Carlo throughput of a concrete pilot and power split.
pub fn evaluate_design(
    cfg: &SystemConfig,
    fading: &FadingProfile,
    pilot: &PilotMatrix,
    power: &PowerSplit,
    trials: usize,
    seed: u64,
) -> Result<ThroughputReport> {
    let gains = pilot_gains(cfg, fading, pilot, power)?;
    let n = gains.lambdas.len();
    mc_throughput(cfg, &gains, n, trials, seed)
}
