//! Block-fading uplink model: configuration, user drops, MMSE estimation.
//!
//! `K` single-antenna users talk to an `N`-antenna base station over a
//! coherence block of `T` symbols. The first `αT` symbols carry pilots,
//! the rest carry data. User `k` sees large-scale gain `d_k` (sorted
//! descending) and small-scale Rayleigh fading.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, diag_real, hermitian_fn, sample_cn, CMat};

const INTEGER_SLACK: f64 = 1e-9;

/// Dimensions, time split and powers of one coherence block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    pub coherence: usize,
    pub alpha: f64,
    pub p0: f64,
    pub n0: f64,
}

impl SystemConfig {
    /// Builds and validates a configuration.
    pub fn new(
        n_antennas: usize,
        n_users: usize,
        coherence: usize,
        alpha: f64,
        p0: f64,
        n0: f64,
    ) -> Result<Self> {
        let cfg = SystemConfig { n_antennas, n_users, coherence, alpha, p0, n0 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration with `P0 = 1` and `N0 = 1/ρ0`, ρ0 given in dB.
    pub fn with_snr_db(
        n_antennas: usize,
        n_users: usize,
        coherence: usize,
        training_symbols: usize,
        rho0_db: f64,
    ) -> Result<Self> {
        if coherence == 0 {
            return Err(Error::Validation("coherence length must be positive".into()));
        }
        let alpha = training_symbols as f64 / coherence as f64;
        Self::new(n_antennas, n_users, coherence, alpha, 1.0, 1.0 / db_to_linear(rho0_db))
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_antennas == 0 {
            bad.push("n_antennas must be positive".to_string());
        }
        if self.n_users == 0 {
            bad.push("n_users must be positive".to_string());
        }
        if self.coherence == 0 {
            bad.push("coherence must be positive".to_string());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bad.push(format!("alpha must lie in (0,1), got {}", self.alpha));
        } else if self.coherence > 0 {
            let at = self.alpha * self.coherence as f64;
            if (at - at.round()).abs() > INTEGER_SLACK * self.coherence as f64 || at.round() < 1.0 {
                bad.push(format!("alpha*T = {at} is not a positive integer"));
            } else if at.round() as usize >= self.coherence {
                bad.push("data phase must keep at least one symbol".to_string());
            }
        }
        if !(self.p0 > 0.0 && self.p0.is_finite()) {
            bad.push(format!("p0 must be positive, got {}", self.p0));
        }
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            bad.push(format!("n0 must be positive, got {}", self.n0));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad.join("; ")))
        }
    }

    /// Number of pilot symbols `αT`.
    pub fn training_len(&self) -> usize {
        (self.alpha * self.coherence as f64).round() as usize
    }

    /// Number of data symbols `(1-α)T`.
    pub fn data_len(&self) -> usize {
        self.coherence - self.training_len()
    }

    /// `ρ0 = P0/N0`.
    pub fn rho0(&self) -> f64 {
        self.p0 / self.n0
    }

    pub fn with_alpha(&self, training_symbols: usize) -> Result<Self> {
        let mut cfg = *self;
        cfg.alpha = training_symbols as f64 / self.coherence as f64;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_users(&self, n_users: usize) -> Result<Self> {
        let mut cfg = *self;
        cfg.n_users = n_users;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Large-scale gains `d_1 >= ... >= d_K >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingProfile {
    pub d: Vec<f64>,
    /// Distances in meters, in the same order as `d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
}

impl FadingProfile {
    /// Sorts `d` descending (stable) and validates it.
    pub fn new(mut d: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Validation("fading profile needs at least one user".into()));
        }
        if let Some(bad) = d.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Validation(format!("fading gain {bad} is not a finite nonnegative value")));
        }
        d.sort_by(|a, b| b.total_cmp(a));
        Ok(FadingProfile { d, positions: None })
    }

    pub fn uniform(k: usize, d: f64) -> Result<Self> {
        Self::new(vec![d; k])
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d.is_empty() {
            return Err(Error::Validation("fading profile is empty".into()));
        }
        if self.d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation("fading gains must be finite and nonnegative".into()));
        }
        if self.d.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Validation("fading gains must be sorted descending".into()));
        }
        if let Some(p) = &self.positions {
            if p.len() != self.d.len() {
                return Err(Error::Validation("positions and gains differ in length".into()));
            }
        }
        Ok(())
    }

    /// True when every gain equals the first one.
    pub fn is_uniform(&self) -> bool {
        let d0 = self.d[0];
        self.d.iter().all(|v| (v - d0).abs() <= 1e-12 * d0.abs().max(1e-300))
    }

    /// The `k` strongest users.
    pub fn strongest(&self, k: usize) -> FadingProfile {
        let k = k.min(self.d.len());
        FadingProfile {
            d: self.d[..k].to_vec(),
            positions: self.positions.as_ref().map(|p| p[..k].to_vec()),
        }
    }
}

/// Per-user training and data power coefficients `γ_k`, `γ'_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSplit {
    pub gamma: Vec<f64>,
    pub gamma_prime: Vec<f64>,
    pub active: Vec<bool>,
}

impl PowerSplit {
    /// Split with `γ'_k = (1-αγ_k)/(1-α)`, i.e. the per-user budget binds.
    /// Users with `γ_k = 0` are switched off entirely.
    pub fn from_training(gamma: Vec<f64>, alpha: f64) -> Self {
        let gamma_prime = gamma
            .iter()
            .map(|&g| if g > 0.0 { ((1.0 - alpha * g) / (1.0 - alpha)).max(0.0) } else { 0.0 })
            .collect();
        let active = gamma.iter().map(|&g| g > 0.0).collect();
        PowerSplit { gamma, gamma_prime, active }
    }

    /// Same `(γ, γ')` for every user.
    pub fn uniform(k: usize, gamma: f64, gamma_prime: f64) -> Self {
        let on = gamma > 0.0 || gamma_prime > 0.0;
        PowerSplit {
            gamma: vec![if on { gamma } else { 0.0 }; k],
            gamma_prime: vec![if on { gamma_prime } else { 0.0 }; k],
            active: vec![on; k],
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Checks lengths, signs, `αγ_k + (1-α)γ'_k <= 1` and that inactive
    /// users carry no power.
    pub fn validate(&self, alpha: f64) -> Result<()> {
        let k = self.gamma.len();
        if self.gamma_prime.len() != k || self.active.len() != k {
            return Err(Error::Dimension("power split vectors differ in length".into()));
        }
        for i in 0..k {
            let (g, gp) = (self.gamma[i], self.gamma_prime[i]);
            if !(g >= 0.0 && gp >= 0.0 && g.is_finite() && gp.is_finite()) {
                return Err(Error::Validation(format!("user {i}: negative or non-finite power")));
            }
            if alpha * g + (1.0 - alpha) * gp > 1.0 + 1e-9 {
                return Err(Error::Validation(format!(
                    "user {i}: alpha*gamma + (1-alpha)*gamma' = {} exceeds 1",
                    alpha * g + (1.0 - alpha) * gp
                )));
            }
            if !self.active[i] && (g != 0.0 || gp != 0.0) {
                return Err(Error::Validation(format!("inactive user {i} carries power")));
            }
        }
        Ok(())
    }
}

/// Complex `K x αT` pilot matrix with per-row average powers.
///
/// Serialises with entries row-major as interleaved `re, im` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PilotMatrixRepr", try_from = "PilotMatrixRepr")]
pub struct PilotMatrix {
    pub xp: CMat,
    /// `‖x_{p,k}‖² / (αT)`.
    pub row_powers: Vec<f64>,
}

impl PilotMatrix {
    pub fn new(xp: CMat) -> Self {
        let cols = xp.ncols().max(1) as f64;
        let row_powers = (0..xp.nrows())
            .map(|k| xp.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>() / cols)
            .collect();
        PilotMatrix { xp, row_powers }
    }

    pub fn users(&self) -> usize {
        self.xp.nrows()
    }

    pub fn symbols(&self) -> usize {
        self.xp.ncols()
    }

    /// `X_p X_p†`.
    pub fn gram(&self) -> CMat {
        &self.xp * self.xp.adjoint()
    }
}

#[derive(Serialize, Deserialize)]
struct PilotMatrixRepr {
    users: usize,
    symbols: usize,
    row_powers: Vec<f64>,
    entries: Vec<f64>,
}

impl From<PilotMatrix> for PilotMatrixRepr {
    fn from(p: PilotMatrix) -> Self {
        let (users, symbols) = p.xp.shape();
        let mut entries = Vec::with_capacity(2 * users * symbols);
        for i in 0..users {
            for j in 0..symbols {
                entries.push(p.xp[(i, j)].re);
                entries.push(p.xp[(i, j)].im);
            }
        }
        PilotMatrixRepr { users, symbols, row_powers: p.row_powers, entries }
    }
}

impl TryFrom<PilotMatrixRepr> for PilotMatrix {
    type Error = Error;

    fn try_from(r: PilotMatrixRepr) -> Result<Self> {
        if r.entries.len() != 2 * r.users * r.symbols || r.row_powers.len() != r.users {
            return Err(Error::Dimension(format!(
                "pilot JSON declares {}x{} but carries {} numbers and {} row powers",
                r.users,
                r.symbols,
                r.entries.len(),
                r.row_powers.len()
            )));
        }
        let xp = CMat::from_fn(r.users, r.symbols, |i, j| {
            let at = 2 * (i * r.symbols + j);
            c(r.entries[at], r.entries[at + 1])
        });
        Ok(PilotMatrix { xp, row_powers: r.row_powers })
    }
}

/// Equivalent data-phase noise power `σ_v²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_v2: f64,
}

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Drops `k` users uniformly over a disk of `radius_m` and assigns
/// `d_k = r_k^{-2}` (path-loss exponent 4 in power).
///
/// Draws are sequential, so the first `k` users of a larger drop with the
/// same seed are the same users.
pub fn sample_scenario(k: usize, radius_m: f64, seed: u64) -> Result<FadingProfile> {
    if k == 0 {
        return Err(Error::Validation("need at least one user".into()));
    }
    if !(radius_m > 0.0 && radius_m.is_finite()) {
        return Err(Error::Validation(format!("radius must be positive, got {radius_m}")));
    }
    let mut rng = seeded(seed);
    let mut users: Vec<(f64, f64)> = (0..k)
        .map(|_| {
            // u in (0, 1] keeps r away from the origin
            let u = 1.0 - rng.random::<f64>();
            let r = radius_m * u.sqrt();
            (r.powi(-2), r)
        })
        .collect();
    users.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(FadingProfile {
        d: users.iter().map(|u| u.0).collect(),
        positions: Some(users.iter().map(|u| u.1).collect()),
    })
}

/// `N x K` matrix of i.i.d. CN(0, 1) small-scale coefficients.
pub fn sample_small_scale(n: usize, k: usize, seed: u64) -> CMat {
    sample_cn(n, k, &mut seeded(seed))
}

fn check_pilot(xp: &CMat, d: &[f64], n0: f64) -> Result<()> {
    if xp.nrows() != d.len() {
        return Err(Error::Dimension(format!(
            "pilot has {} rows but {} fading gains",
            xp.nrows(),
            d.len()
        )));
    }
    if !(n0 > 0.0) {
        return Err(Error::Domain(format!("noise power must be positive, got {n0}")));
    }
    Ok(())
}

/// `X_p† D² X_p + N0 I`, the received pilot covariance per antenna.
fn pilot_covariance(xp: &CMat, d: &[f64], n0: f64) -> CMat {
    let dx = diag_real(d) * xp;
    let t = xp.ncols();
    dx.adjoint() * &dx + CMat::identity(t, t) * c(n0, 0.0)
}

/// MMSE channel estimate `Ĥ = Y_p (X_p†D²X_p + N0 I)^{-1} X_p† D`.
pub fn mmse_estimate(yp: &CMat, xp: &CMat, d: &[f64], n0: f64) -> Result<CMat> {
    check_pilot(xp, d, n0)?;
    if yp.ncols() != xp.ncols() {
        return Err(Error::Dimension(format!(
            "received pilots have {} columns, pilot matrix has {}",
            yp.ncols(),
            xp.ncols()
        )));
    }
    let inv = hermitian_fn(&pilot_covariance(xp, d, n0), |x| 1.0 / x)?;
    Ok(yp * inv * xp.adjoint() * diag_real(d))
}

/// Estimation error covariance `M = I - D X_p (X_p†D²X_p + N0 I)^{-1} X_p† D`.
pub fn mmse_error_matrix(xp: &CMat, d: &[f64], n0: f64) -> Result<CMat> {
    check_pilot(xp, d, n0)?;
    let inv = hermitian_fn(&pilot_covariance(xp, d, n0), |x| 1.0 / x)?;
    let dx = diag_real(d) * xp;
    let k = d.len();
    let m = CMat::identity(k, k) - &dx * inv * dx.adjoint();
    Ok((&m + m.adjoint()) * c(0.5, 0.0))
}

/// Whitened pilot `X̃ = D X_p (X_p†D²X_p + N0 I)^{-1/2}`.
pub fn whitened_pilot(xp: &CMat, d: &[f64], n0: f64) -> Result<CMat> {
    check_pilot(xp, d, n0)?;
    let inv_sqrt = hermitian_fn(&pilot_covariance(xp, d, n0), |x| 1.0 / x.sqrt())?;
    Ok(diag_real(d) * xp * inv_sqrt)
}

/// `σ_v² = tr(M D² R_{X_d}) + N0` for an error covariance `M`.
pub fn equivalent_noise_power(
    error_matrix: &CMat,
    d: &[f64],
    power: &PowerSplit,
    p0: f64,
    n0: f64,
) -> Result<NoiseModel> {
    let k = d.len();
    if error_matrix.nrows() != k || error_matrix.ncols() != k || power.len() != k {
        return Err(Error::Dimension("error matrix, gains and powers disagree".into()));
    }
    let leak: f64 = (0..k)
        .map(|i| error_matrix[(i, i)].re * d[i] * d[i] * power.gamma_prime[i] * p0)
        .sum();
    Ok(NoiseModel { sigma_v2: leak.max(0.0) + n0 })
}

/// Closed form of `σ_v²` for pilots whose whitened Gram has the optimal
/// diagonal: `Σ_k γ'_k d_k² P0 / (1 + αγ_k ρ0 d_k² T) + N0`.
pub fn equivalent_noise_power_closed_form(
    cfg: &SystemConfig,
    d: &[f64],
    power: &PowerSplit,
) -> NoiseModel {
    let (rho0, t) = (cfg.rho0(), cfg.coherence as f64);
    let leak: f64 = d
        .iter()
        .zip(power.gamma.iter().zip(&power.gamma_prime))
        .map(|(&dk, (&g, &gp))| gp * dk * dk * cfg.p0 / (1.0 + cfg.alpha * g * rho0 * dk * dk * t))
        .sum();
    NoiseModel { sigma_v2: leak + cfg.n0 }
}
