//! Pilot matrix constructions.
//!
//! * orthogonal rows scaled to the training powers (`K <= αT`);
//! * the majorization-based design behind the upper bound (`K > αT`);
//! * the lower-bound design that silences the weakest `K - αT` users;
//! * DFT pilots for uniform fading;
//! * Gaussian pilots, the unoptimised baseline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{FadingProfile, PilotMatrix, PowerSplit, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, hermitian_eigenvalues, orthonormal_rows, sample_cn, unitary_dft, CMat};
use crate::majorization::{min_majorizing_vector, schur_horn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotKind {
    Orthogonal,
    UpperBound,
    LowerBound,
    Uniform,
    Random,
}

/// Everything a pilot construction needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotDesignSpec {
    pub kind: PilotKind,
    pub config: SystemConfig,
    pub fading: FadingProfile,
    pub power: PowerSplit,
    /// Seed for constructions that pick an arbitrary orthonormal frame.
    #[serde(default)]
    pub seed: u64,
}

impl PilotDesignSpec {
    pub fn new(kind: PilotKind, config: SystemConfig, fading: FadingProfile, power: PowerSplit) -> Self {
        PilotDesignSpec { kind, config, fading, power, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.fading.validate()?;
        self.power.validate(self.config.alpha)?;
        let k = self.config.n_users;
        if self.fading.len() != k || self.power.len() != k {
            return Err(Error::Dimension(format!(
                "config has {k} users, fading {} and power split {}",
                self.fading.len(),
                self.power.len()
            )));
        }
        Ok(())
    }

    fn users(&self) -> usize {
        self.config.n_users
    }

    fn symbols(&self) -> usize {
        self.config.training_len()
    }

    /// Diagonal of `R_X`: `αγ_k P0 T`.
    pub fn training_energy(&self) -> Vec<f64> {
        let cfg = &self.config;
        self.power
            .gamma
            .iter()
            .map(|g| cfg.alpha * g * cfg.p0 * cfg.coherence as f64)
            .collect()
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Diagonal of `R_{X_d} D⁴ R_X (N0 I + D² R_X)⁻¹`:
/// `αγ_kγ'_k ρ0 P0 d_k⁴ T / (1 + αγ_k ρ0 d_k² T)`.
pub fn effective_diagonal(cfg: &SystemConfig, d: &[f64], power: &PowerSplit) -> Vec<f64> {
    let (a, rho0, t) = (cfg.alpha, cfg.rho0(), cfg.coherence as f64);
    d.iter()
        .zip(power.gamma.iter().zip(&power.gamma_prime))
        .map(|(&dk, (&g, &gp))| {
            let d2 = dk * dk;
            a * g * gp * rho0 * cfg.p0 * d2 * d2 * t / (1.0 + a * g * rho0 * d2 * t)
        })
        .collect()
}

/// Builds the pilot named by `spec.kind`. The upper-bound design fails when
/// its whitened Gram is not realisable by any finite-power pilot.
pub fn design_pilot(spec: &PilotDesignSpec) -> Result<PilotMatrix> {
    match spec.kind {
        PilotKind::Orthogonal => pilot_orthogonal(spec),
        PilotKind::UpperBound => pilot_upper_bound(spec)?.pilot.ok_or_else(|| {
            Error::Domain("upper-bound Gram has eigenvalues >= 1 and has no pilot realisation".into())
        }),
        PilotKind::LowerBound => pilot_lower_bound(spec),
        PilotKind::Uniform => pilot_uniform(spec),
        PilotKind::Random => pilot_random(spec, spec.seed),
    }
}

/// `X_p = R_X^{1/2} U` with `U U† = I_K`, so `X_p X_p† = R_X`.
pub fn pilot_orthogonal(spec: &PilotDesignSpec) -> Result<PilotMatrix> {
    spec.validate()?;
    let (k, at) = (spec.users(), spec.symbols());
    if k > at {
        return Err(Error::Domain(format!("orthogonal pilots need K <= αT, got K={k}, αT={at}")));
    }
    let u = orthonormal_rows(k, at, &mut spec.rng())?;
    Ok(PilotMatrix::new(scale_rows(u, &spec.training_energy())))
}

/// Orthogonal pilots for the `αT` strongest users, zero rows for the rest.
pub fn pilot_lower_bound(spec: &PilotDesignSpec) -> Result<PilotMatrix> {
    spec.validate()?;
    let (k, at) = (spec.users(), spec.symbols());
    if k <= at {
        return pilot_orthogonal(spec);
    }
    let mut energy = spec.training_energy();
    energy[at..].iter_mut().for_each(|e| *e = 0.0);
    let u = orthonormal_rows(at, at, &mut spec.rng())?;
    let mut full = CMat::zeros(k, at);
    full.view_mut((0, 0), (at, at)).copy_from(&u);
    Ok(PilotMatrix::new(scale_rows(full, &energy)))
}

/// DFT pilots for equal gains and equal training powers.
///
/// `K <= αT`: first `K` rows of the `αT`-point DFT, so `X_p X_p† = αγP0T I`.
/// `K > αT`: first `αT` columns of the `K`-point DFT scaled by `√(γP0K)`,
/// so columns are orthogonal and every row carries `αγP0T`.
pub fn pilot_uniform(spec: &PilotDesignSpec) -> Result<PilotMatrix> {
    spec.validate()?;
    if !spec.fading.is_uniform() {
        return Err(Error::Domain("uniform pilots need equal large-scale gains".into()));
    }
    let g0 = spec.power.gamma[0];
    if spec.power.gamma.iter().any(|g| (g - g0).abs() > 1e-12 * g0.abs().max(1.0)) {
        return Err(Error::Domain("uniform pilots need equal training powers".into()));
    }
    let (k, at) = (spec.users(), spec.symbols());
    let cfg = &spec.config;
    let xp = if k <= at {
        let f = unitary_dft(at);
        let scale = (cfg.alpha * g0 * cfg.p0 * cfg.coherence as f64).sqrt();
        f.rows(0, k).into_owned() * c(scale, 0.0)
    } else {
        let f = unitary_dft(k);
        let scale = (g0 * cfg.p0 * k as f64).sqrt();
        f.columns(0, at).into_owned() * c(scale, 0.0)
    };
    Ok(PilotMatrix::new(xp))
}

/// Gaussian pilot with row `k` rescaled to energy `αγ_k P0 T`.
pub fn pilot_random(spec: &PilotDesignSpec, seed: u64) -> Result<PilotMatrix> {
    spec.validate()?;
    let (k, at) = (spec.users(), spec.symbols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = sample_cn(k, at, &mut rng);
    for i in 0..k {
        while x.row(i).iter().all(|z| z.norm_sqr() == 0.0) {
            let fresh = sample_cn(1, at, &mut rng);
            x.row_mut(i).copy_from(&fresh);
        }
    }
    let energy = spec.training_energy();
    let unit: Vec<f64> = (0..k)
        .map(|i| {
            let norm2: f64 = x.row(i).iter().map(|z| z.norm_sqr()).sum();
            energy[i] / norm2
        })
        .collect();
    Ok(PilotMatrix::new(scale_rows(x, &unit)))
}

/// Scales row `i` by `√w_i`.
fn scale_rows(mut x: CMat, w: &[f64]) -> CMat {
    for (i, wi) in w.iter().enumerate() {
        let s = c(wi.max(0.0).sqrt(), 0.0);
        x.row_mut(i).iter_mut().for_each(|z| *z *= s);
    }
    x
}

/// Outcome of the upper-bound construction.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBoundDesign {
    /// `X̃X̃†` meeting both optimality conditions (`K x K`).
    pub whitened_gram: CMat,
    /// Eigenvalues of `X̃X̃†D²R_{X_d}`, descending, `K - αT` of them zero.
    pub eigen_targets: Vec<f64>,
    /// A pilot with that whitened Gram, when one exists.
    pub pilot: Option<PilotMatrix>,
}

/// Upper-bound pilot for `K > αT`.
///
/// The target diagonal `δ` of `R^{1/2}_{X_d} D X̃X̃† D R^{1/2}_{X_d}` is
/// fixed by the powers; its spectrum is the smallest vector with `K - αT`
/// zeros majorizing `δ`. A Schur–Horn matrix with that spectrum and
/// diagonal gives `X̃X̃†`, and an SVD turns it back into `X_p`. Users with
/// no gain or no power are left out and get zero rows.
///
/// Only Grams with every eigenvalue below one are realisable; otherwise
/// `pilot` is `None` and the design is a bound only.
pub fn pilot_upper_bound(spec: &PilotDesignSpec) -> Result<UpperBoundDesign> {
    spec.validate()?;
    let (k, at) = (spec.users(), spec.symbols());
    if k <= at {
        return Err(Error::Domain(format!(
            "upper-bound construction is for K > αT, got K={k}, αT={at}"
        )));
    }
    let cfg = &spec.config;
    let d = &spec.fading.d;
    let delta = effective_diagonal(cfg, d, &spec.power);
    let active: Vec<usize> = (0..k).filter(|&i| delta[i] > 0.0).collect();
    let ka = active.len();

    let mut eigen_targets = min_majorizing_vector(&delta, k - at)?;
    eigen_targets.reverse();

    let mut whitened_gram = CMat::zeros(k, k);
    if ka == 0 {
        return Ok(UpperBoundDesign {
            whitened_gram,
            eigen_targets,
            pilot: Some(PilotMatrix::new(CMat::zeros(k, at))),
        });
    }
    let delta_a: Vec<f64> = active.iter().map(|&i| delta[i]).collect();
    let spectrum = min_majorizing_vector(&delta_a, ka.saturating_sub(at))?;
    let b = schur_horn(&spectrum, &delta_a)?;

    // X̃X̃† = S B S with S = (D R_{X_d}^{1/2})^{-1} on the active block
    let s: Vec<f64> = active
        .iter()
        .map(|&i| 1.0 / (d[i] * (spec.power.gamma_prime[i] * cfg.p0).sqrt()))
        .collect();
    let mut w = CMat::zeros(ka, ka);
    for i in 0..ka {
        for j in 0..ka {
            w[(i, j)] = b[(i, j)] * c(s[i] * s[j], 0.0);
        }
    }
    for (ai, &i) in active.iter().enumerate() {
        for (aj, &j) in active.iter().enumerate() {
            whitened_gram[(i, j)] = w[(ai, aj)];
        }
    }

    let pilot = realise_whitened_gram(&w, &active, d, cfg.n0, k, at)?;
    Ok(UpperBoundDesign { whitened_gram, eigen_targets, pilot })
}

/// Inverts `X̃ = D X_p (X_p†D²X_p + N0 I)^{-1/2}` from `X̃X̃† = U Σ̃ U†`:
/// `D X_p = U Σ_p` with `σ_p² = N0 σ̃/(1 - σ̃)`.
fn realise_whitened_gram(
    w: &CMat,
    active: &[usize],
    d: &[f64],
    n0: f64,
    k: usize,
    at: usize,
) -> Result<Option<PilotMatrix>> {
    let (vals, vecs) = hermitian_eigen(w)?;
    if vals[0] >= 1.0 - 1e-12 {
        return Ok(None);
    }
    let rank = vals.len().min(at);
    let mut xp = CMat::zeros(k, at);
    for col in 0..rank {
        let sigma_t = vals[col].max(0.0);
        let sigma_p = (n0 * sigma_t / (1.0 - sigma_t)).sqrt();
        for (ai, &i) in active.iter().enumerate() {
            xp[(i, col)] = vecs[(ai, col)] * c(sigma_p / d[i], 0.0);
        }
    }
    Ok(Some(PilotMatrix::new(xp)))
}

/// Residuals of the two upper-bound optimality conditions for a whitened
/// Gram `W`: the diagonal of `R^{1/2} D W D R^{1/2}` against `δ`, and its
/// spectrum against the smallest majorizing vector with `K - αT` zeros.
/// Both are relative to `max δ`.
pub fn upper_bound_residuals(spec: &PilotDesignSpec, w: &CMat) -> Result<(f64, f64)> {
    let cfg = &spec.config;
    let d = &spec.fading.d;
    let k = d.len();
    let delta = effective_diagonal(cfg, d, &spec.power);
    let r: Vec<f64> = (0..k)
        .map(|i| d[i] * (spec.power.gamma_prime[i] * cfg.p0).sqrt())
        .collect();
    let b = CMat::from_fn(k, k, |i, j| w[(i, j)] * c(r[i] * r[j], 0.0));
    let scale = delta.iter().cloned().fold(0.0_f64, f64::max).max(1e-300);
    let diag_err = (0..k).map(|i| (b[(i, i)].re - delta[i]).abs()).fold(0.0, f64::max) / scale;
    let mut want = min_majorizing_vector(&delta, k.saturating_sub(cfg.training_len()))?;
    want.reverse();
    let got = hermitian_eigenvalues(&b)?;
    let eig_err = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max) / scale;
    Ok((diag_err, eig_err))
}
