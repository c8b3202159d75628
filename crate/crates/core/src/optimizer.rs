//! Design search over the training fraction `α` and the user count.
//!
//! Each pipeline walks the `α` grid (integer training lengths), builds the
//! design for every grid point, ranks the points by the deterministic
//! large-system surrogate and spends the Monte Carlo budget on the winner
//! only. Ties go to the smallest `α`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{FadingProfile, PowerSplit, SystemConfig};
use crate::error::{Error, Result};
use crate::pilot::{pilot_lower_bound, pilot_random, PilotDesignSpec, PilotKind};
use crate::power::{effective_gains, gamma_uniform_opt, solve_power, tau, EffectiveGains, PowerSolverOptions};
use crate::surrogate::{DeterministicEquivalent, RateSurrogate};
use crate::throughput::{
    asymptotic_throughput, evaluate_design, mc_throughput, pilot_gains, uniform_gains, ThroughputReport,
};

/// One evaluated design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub alpha: f64,
    pub k_total: usize,
    /// Zero-based indices of the users that transmit, ascending.
    pub active_set: Vec<usize>,
    pub power: PowerSplit,
    pub pilot_kind: PilotKind,
    pub rate: ThroughputReport,
    /// Surrogate rate used to rank the `α` grid, bits per symbol.
    pub surrogate_rate: f64,
    /// False if the power search stopped short of its KKT tolerance.
    pub converged: bool,
}

/// Grid and budget shared by the pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Spacing of the grid in training symbols.
    pub alpha_step: usize,
    /// Power search used while ranking grid points.
    pub search: PowerSolverOptions,
    /// Power search repeated at the winning grid point.
    pub refine: PowerSolverOptions,
    pub trials: usize,
    pub seed: u64,
    /// Use the large-system formula instead of Monte Carlo where available.
    pub asymptotic: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            alpha_min: 0.0,
            alpha_max: 1.0,
            alpha_step: 1,
            search: PowerSolverOptions { inner_iterations: 30, ..PowerSolverOptions::default() },
            refine: PowerSolverOptions::default(),
            trials: 500,
            seed: 0,
            asymptotic: false,
        }
    }
}

impl PipelineOptions {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.alpha_min >= 0.0 && self.alpha_max <= 1.0 && self.alpha_min <= self.alpha_max) {
            bad.push(format!("alpha bounds [{}, {}] must satisfy 0 <= min <= max <= 1", self.alpha_min, self.alpha_max));
        }
        if self.alpha_step == 0 {
            bad.push("alpha_step must be at least one symbol".to_string());
        }
        if self.trials == 0 {
            bad.push("trials must be positive".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad.join("; ")))
        }
    }

    /// Training lengths `αT` on the grid for coherence length `t`: the
    /// multiples of `alpha_step` inside the bounds.
    pub fn training_lengths(&self, t: usize) -> Vec<usize> {
        let slack = 1e-9;
        let step = self.alpha_step.max(1);
        (step..t)
            .step_by(step)
            .filter(|&j| {
                let a = j as f64 / t as f64;
                a >= self.alpha_min - slack && a <= self.alpha_max + slack
            })
            .collect()
    }

    /// Options pinned to a single training length.
    pub fn at_training_len(mut self, at: usize, t: usize) -> Self {
        let a = at as f64 / t as f64;
        self.alpha_min = a;
        self.alpha_max = a;
        self.alpha_step = 1;
        self
    }
}

/// The `min(K, αT)` strongest users, lowest index first among ties.
/// Expects `d` sorted descending.
pub fn select_users(fading: &FadingProfile, alpha: f64, t: usize, k: usize) -> Vec<usize> {
    let at = (alpha * t as f64).round() as usize;
    (0..k.min(at).min(fading.len())).collect()
}

/// `f(x)` whose positive root `x*` gives the optimal user count
/// `max(x*/(ρ0 d²), αT)` under uniform fading.
pub fn user_count_f(x: f64, alpha: f64) -> f64 {
    let v = alpha - alpha * alpha;
    let (p, q) = (x + alpha, x + 1.0 - alpha);
    -x * x - x * v.sqrt() * ((p / q).sqrt() + (q / p).sqrt()) + 2.0 * (v * p * q).sqrt() + 2.0 * v
}

/// Positive root of [`user_count_f`] by bisection.
pub fn user_count_root(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let f = |x: f64| user_count_f(x, alpha);
    let mut lo = 1e-9;
    let mut hi = 10.0 + 2.0 * (alpha - alpha * alpha);
    if !(f(lo) > 0.0) {
        return Err(Error::Numeric(format!("f({lo}) = {} is not positive", f(lo))));
    }
    let mut grow = 0;
    while f(hi) >= 0.0 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::Numeric("no sign change of f found".into()));
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(lo).abs() <= f(hi).abs() { lo } else { hi })
}

fn uniform_config(alpha: f64, t: usize, rho0: f64, k: usize) -> Result<SystemConfig> {
    SystemConfig::new(1, k, t, alpha, 1.0, 1.0 / rho0)
}

/// `τ` of the uniform design with `k` users and the optimal common `γ`.
fn tau_at_optimum(alpha: f64, t: usize, rho0: f64, d: f64, k: usize) -> Result<f64> {
    let cfg = uniform_config(alpha, t, rho0, k)?;
    let g = gamma_uniform_opt(&cfg, d)?;
    let gp = (1.0 - alpha * g) / (1.0 - alpha);
    Ok(tau(&cfg, d, g, gp, k).value)
}

/// Optimal number of users for uniform fading `d` and training fraction
/// `alpha` (with `αT` an integer).
pub fn optimal_k_uniform(alpha: f64, t: usize, rho0: f64, d: f64) -> Result<usize> {
    if !(rho0 > 0.0 && rho0.is_finite()) {
        return Err(Error::Domain(format!("rho0 must be positive, got {rho0}")));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("d must be positive, got {d}")));
    }
    let at = uniform_config(alpha, t, rho0, 1)?.training_len();
    let x = user_count_root(alpha)? / (rho0 * d * d);
    if !(x < 1e9) {
        return Err(Error::Numeric(format!("optimal user count {x:.3e} is out of range")));
    }
    let lo = (x.floor() as usize).max(at);
    let hi = (x.ceil() as usize).max(at);
    if lo == hi {
        return Ok(lo);
    }
    let (tl, th) = (tau_at_optimum(alpha, t, rho0, d, lo)?, tau_at_optimum(alpha, t, rho0, d, hi)?);
    Ok(if th > tl { hi } else { lo })
}

/// Surrogate rate `(1-α) F(λ, σ_v²)` in bits per symbol.
fn surrogate_rate(cfg: &SystemConfig, gains: &EffectiveGains) -> f64 {
    let n = gains.lambdas.len().min(cfg.n_users.min(cfg.training_len()));
    (1.0 - cfg.alpha) * DeterministicEquivalent::new(cfg.n_antennas).value(&gains.lambdas[..n], gains.sigma_v2)
}

struct Candidate<T> {
    at: usize,
    score: f64,
    payload: T,
}

/// Evaluates `build` on every grid point in parallel and keeps the best
/// score, smallest `α` first among ties.
fn grid_argmax<T, F>(cfg: &SystemConfig, opts: &PipelineOptions, build: F) -> Result<Candidate<T>>
where
    T: Send,
    F: Fn(&SystemConfig, usize) -> Result<(f64, T)> + Sync,
{
    opts.validate()?;
    let grid = opts.training_lengths(cfg.coherence);
    if grid.is_empty() {
        return Err(Error::Validation(format!(
            "no integer training length in alpha range [{}, {}] for T = {}",
            opts.alpha_min, opts.alpha_max, cfg.coherence
        )));
    }
    let results: Vec<Result<Candidate<T>>> = grid
        .par_iter()
        .map(|&at| {
            let c = cfg.with_alpha(at)?;
            let (score, payload) = build(&c, at)?;
            Ok(Candidate { at, score, payload })
        })
        .collect();
    let mut best: Option<Candidate<T>> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(cand) => {
                if best.as_ref().is_none_or(|b| cand.score > b.score) {
                    best = Some(cand);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("grid is nonempty"),
    }
}

fn check_fading(cfg: &SystemConfig, fading: &FadingProfile) -> Result<()> {
    cfg.validate()?;
    fading.validate()?;
    if fading.len() != cfg.n_users {
        return Err(Error::Dimension(format!(
            "config has {} users but the fading profile has {}",
            cfg.n_users,
            fading.len()
        )));
    }
    Ok(())
}

/// Best upper-bound design: all `K` users, majorization-linked gains for
/// `K > αT`.
pub fn upper_bound_pipeline(cfg: &SystemConfig, fading: &FadingProfile, opts: &PipelineOptions) -> Result<DesignPoint> {
    check_fading(cfg, fading)?;
    let solve = |c: &SystemConfig, solver: &PowerSolverOptions| -> Result<(f64, (PowerSplit, EffectiveGains, bool))> {
        let sol = solve_power(c, fading, solver)?;
        let gains = effective_gains(c, fading, &sol.power)?;
        Ok((surrogate_rate(c, &gains), (sol.power, gains, sol.converged)))
    };
    let best = grid_argmax(cfg, opts, |c, _| solve(c, &opts.search))?;
    let c = cfg.with_alpha(best.at)?;
    let (score, (power, gains, converged)) = solve(&c, &opts.refine)?;
    let n = gains.lambdas.len().min(c.training_len()).min(c.n_users);
    let rate = mc_throughput(&c, &gains, n, opts.trials, opts.seed)?;
    let active_set = (0..c.n_users).filter(|&i| power.active[i]).collect();
    let pilot_kind = if c.n_users > c.training_len() { PilotKind::UpperBound } else { PilotKind::Orthogonal };
    Ok(DesignPoint {
        alpha: c.alpha,
        k_total: c.n_users,
        active_set,
        power,
        pilot_kind,
        rate,
        surrogate_rate: score,
        converged,
    })
}

/// Expands a split over the first `ka` users to all `k` users.
fn pad_power(p: &PowerSplit, k: usize) -> PowerSplit {
    let mut out = PowerSplit::uniform(k, 0.0, 0.0);
    for i in 0..p.len() {
        out.gamma[i] = p.gamma[i];
        out.gamma_prime[i] = p.gamma_prime[i];
        out.active[i] = p.active[i];
    }
    out
}

/// Best achievable design: the `min(K, αT)` strongest users with
/// orthogonal pilots, everyone else silent.
pub fn lower_bound_pipeline(cfg: &SystemConfig, fading: &FadingProfile, opts: &PipelineOptions) -> Result<DesignPoint> {
    check_fading(cfg, fading)?;
    let solve = |c: &SystemConfig, at: usize, solver: &PowerSolverOptions| -> Result<(f64, (PowerSplit, bool))> {
        let ka = select_users(fading, c.alpha, c.coherence, c.n_users).len();
        let sub = c.with_users(ka)?;
        let strong = fading.strongest(ka);
        let sol = solve_power(&sub, &strong, solver)?;
        let gains = effective_gains(&sub, &strong, &sol.power)?;
        debug_assert!(ka <= at);
        Ok((surrogate_rate(&sub, &gains), (pad_power(&sol.power, c.n_users), sol.converged)))
    };
    let best = grid_argmax(cfg, opts, |c, at| solve(c, at, &opts.search))?;
    let c = cfg.with_alpha(best.at)?;
    let (score, (power, converged)) = solve(&c, best.at, &opts.refine)?;
    let spec = PilotDesignSpec::new(PilotKind::LowerBound, c, fading.clone(), power.clone()).with_seed(opts.seed);
    let pilot = pilot_lower_bound(&spec)?;
    let rate = evaluate_design(&c, fading, &pilot, &power, opts.trials, opts.seed)?;
    let active_set = (0..c.n_users).filter(|&i| power.active[i]).collect();
    Ok(DesignPoint {
        alpha: c.alpha,
        k_total: c.n_users,
        active_set,
        power,
        pilot_kind: PilotKind::LowerBound,
        rate,
        surrogate_rate: score,
        converged,
    })
}

fn grid_seed(seed: u64, at: usize) -> u64 {
    seed ^ (at as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Baseline: `γ = γ' = 1` on the `min(K, αT)` strongest users, Gaussian
/// pilots rescaled to the training power, best `α`.
pub fn random_pilot_pipeline(cfg: &SystemConfig, fading: &FadingProfile, opts: &PipelineOptions) -> Result<DesignPoint> {
    check_fading(cfg, fading)?;
    let build = |c: &SystemConfig, at: usize| -> Result<(f64, (SystemConfig, FadingProfile, crate::channel::PilotMatrix, PowerSplit))> {
        let ka = select_users(fading, c.alpha, c.coherence, c.n_users).len();
        let sub = c.with_users(ka)?;
        let strong = fading.strongest(ka);
        let power = PowerSplit::uniform(ka, 1.0, 1.0);
        let spec = PilotDesignSpec::new(PilotKind::Random, sub, strong.clone(), power.clone());
        let pilot = pilot_random(&spec, grid_seed(opts.seed, at))?;
        let gains = pilot_gains(&sub, &strong, &pilot, &power)?;
        Ok((surrogate_rate(&sub, &gains), (sub, strong, pilot, power)))
    };
    let best = grid_argmax(cfg, opts, build)?;
    let (sub, strong, pilot, power) = best.payload;
    let rate = evaluate_design(&sub, &strong, &pilot, &power, opts.trials, opts.seed)?;
    let ka = sub.n_users;
    Ok(DesignPoint {
        alpha: sub.alpha,
        k_total: cfg.n_users,
        active_set: (0..ka).collect(),
        power: pad_power(&power, cfg.n_users),
        pilot_kind: PilotKind::Random,
        rate,
        surrogate_rate: best.score,
        converged: true,
    })
}

/// Exact design for uniform fading `d`: DFT pilots, closed-form `γ` and,
/// unless `k_fixed` is given, the optimal user count for each `α`.
///
/// Every one of the `K` users transmits; `min(K, αT)` streams are resolved.
pub fn optimize_uniform(
    cfg: &SystemConfig,
    d: f64,
    k_fixed: Option<usize>,
    opts: &PipelineOptions,
) -> Result<DesignPoint> {
    cfg.validate()?;
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("d must be positive, got {d}")));
    }
    let build = |c: &SystemConfig, _at: usize| -> Result<(f64, (SystemConfig, f64, f64))> {
        let k = match k_fixed {
            Some(k) => k,
            None => optimal_k_uniform(c.alpha, c.coherence, c.rho0(), d)?,
        };
        let ck = c.with_users(k)?;
        let g = gamma_uniform_opt(&ck, d)?;
        let gp = (1.0 - ck.alpha * g) / (1.0 - ck.alpha);
        let score = if opts.asymptotic {
            asymptotic_throughput(&ck, d, g, gp)?.rate_bits_per_symbol
        } else {
            surrogate_rate(&ck, &uniform_gains(&ck, d, g, gp))
        };
        Ok((score, (ck, g, gp)))
    };
    let best = grid_argmax(cfg, opts, build)?;
    let (ck, g, gp) = best.payload;
    let rate = if opts.asymptotic {
        asymptotic_throughput(&ck, d, g, gp)?
    } else {
        let gains = uniform_gains(&ck, d, g, gp);
        let n = gains.lambdas.len();
        mc_throughput(&ck, &gains, n, opts.trials, opts.seed)?
    };
    Ok(DesignPoint {
        alpha: ck.alpha,
        k_total: ck.n_users,
        active_set: (0..ck.n_users).collect(),
        power: PowerSplit::uniform(ck.n_users, g, gp),
        pilot_kind: PilotKind::Uniform,
        rate,
        surrogate_rate: best.score,
        converged: true,
    })
}
