//! Training/data power split.
//!
//! Every user spends its budget fully, `αγ_k + (1-α)γ'_k = 1`, so the
//! search runs over `γ ∈ [0, 1/α]^K`. The rate `(1-α) F(λ(γ), σ_v²(γ))`
//! is not concave in `γ`, but for a fixed noise level `t` the problem
//! `max F(λ(γ), t)` subject to `σ_v²(γ) <= t` is. The solver sweeps `t` over
//! a log grid, solves each convex problem by spectral projected gradient,
//! keeps the best and polishes it on the rate itself.

use serde::{Deserialize, Serialize};

use crate::channel::{equivalent_noise_power_closed_form, FadingProfile, PowerSplit, SystemConfig};
use crate::error::{Error, Result};
use crate::majorization::{min_majorizing_split, min_majorizing_vector};
use crate::pilot::effective_diagonal;
use crate::surrogate::{RateSurrogate, SurrogateKind};

/// Eigenvalues `λ` (descending) and noise power `σ_v²` of a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveGains {
    pub lambdas: Vec<f64>,
    pub sigma_v2: f64,
}

impl EffectiveGains {
    /// Number of strictly positive `λ_k`.
    pub fn active_count(&self) -> usize {
        self.lambdas.iter().filter(|l| **l > 0.0).count()
    }
}

/// Effective post-training SNR for uniform fading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tau {
    pub value: f64,
}

fn check_sizes(cfg: &SystemConfig, fading: &FadingProfile) -> Result<()> {
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

/// Gains of the upper-bound design: for `K <= αT` the diagonal `δ` itself,
/// otherwise the smallest vector with `K - αT` zeros majorizing `δ`.
pub fn effective_gains(cfg: &SystemConfig, fading: &FadingProfile, power: &PowerSplit) -> Result<EffectiveGains> {
    check_sizes(cfg, fading)?;
    power.validate(cfg.alpha)?;
    if power.len() != cfg.n_users {
        return Err(Error::Dimension("power split and config disagree on K".into()));
    }
    let delta = effective_diagonal(cfg, &fading.d, power);
    let zeros = cfg.n_users.saturating_sub(cfg.training_len());
    let mut lambdas = min_majorizing_vector(&delta, zeros)?;
    lambdas.reverse();
    let sigma_v2 = equivalent_noise_power_closed_form(cfg, &fading.d, power).sigma_v2;
    Ok(EffectiveGains { lambdas, sigma_v2 })
}

/// `γ = 1/(α(1 + √((1-α)T/K_a)))` on the `K_a` strongest users, off elsewhere.
pub fn gamma_highsnr(cfg: &SystemConfig, k_active: usize) -> PowerSplit {
    let k = cfg.n_users;
    let ka = k_active.min(k);
    let mut gamma = vec![0.0; k];
    if ka > 0 {
        let a = cfg.alpha;
        let g = 1.0 / (a * (1.0 + ((1.0 - a) * cfg.coherence as f64 / ka as f64).sqrt()));
        gamma[..ka].iter_mut().for_each(|x| *x = g);
    }
    PowerSplit::from_training(gamma, cfg.alpha)
}

/// Optimal common `γ` for uniform gain `d` and `K = cfg.n_users`.
pub fn gamma_uniform_opt(cfg: &SystemConfig, d: f64) -> Result<f64> {
    cfg.validate()?;
    let (a, k, t) = (cfg.alpha, cfg.n_users as f64, cfg.coherence as f64);
    let snr = cfg.rho0() * d * d;
    let mu = if cfg.n_users <= cfg.training_len() {
        snr * (k - (1.0 - a) * t) / (1.0 - a + snr * k)
    } else {
        snr * (2.0 * a - 1.0) * k / (a * (1.0 - a + snr * k))
    };
    if !(1.0 - mu >= 0.0) {
        return Err(Error::Domain(format!("1 - mu = {} is negative", 1.0 - mu)));
    }
    Ok((1.0 / (a * (1.0 + (1.0 - mu).sqrt()))).clamp(0.0, 1.0 / a))
}

/// Effective SNR of the uniform-fading optimal design with `k` users.
pub fn tau(cfg: &SystemConfig, d: f64, gamma: f64, gamma_prime: f64, k: usize) -> Tau {
    let (a, t, kf) = (cfg.alpha, cfg.coherence as f64, k as f64);
    let rho = cfg.rho0();
    let (r2d4, rd2) = (rho * rho * d.powi(4), rho * d * d);
    let value = if k <= cfg.training_len() {
        a * gamma * gamma_prime * r2d4 * t / (rd2 * (gamma_prime * kf + a * gamma * t) + 1.0)
    } else {
        let num = gamma * gamma_prime * r2d4 * kf;
        num / (num * (kf - a * t) + rd2 * kf * (gamma + gamma_prime) + 1.0)
    };
    Tau { value }
}

/// Knobs of the power search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSolverOptions {
    /// Points on the log grid of noise levels `t`.
    pub t_points: usize,
    /// Iteration cap for each fixed-`t` problem.
    pub inner_iterations: usize,
    /// Iteration cap for the final polish.
    pub max_iterations: usize,
    /// Stop once `‖P(γ + ∇) - γ‖∞` falls below this.
    pub tolerance: f64,
    /// Largest projected-gradient residual still reported as converged.
    pub kkt_tolerance: f64,
    pub surrogate: SurrogateKind,
    /// Seed of the common-random-numbers batch, if used.
    pub seed: u64,
}

impl Default for PowerSolverOptions {
    fn default() -> Self {
        PowerSolverOptions {
            t_points: 40,
            inner_iterations: 10_000,
            max_iterations: 10_000,
            tolerance: 1e-7,
            kkt_tolerance: 1e-6,
            surrogate: SurrogateKind::default(),
            seed: 0,
        }
    }
}

/// Result of a power search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSolution {
    pub power: PowerSplit,
    /// Surrogate rate `(1-α) F(λ, σ_v²)` in bits per symbol.
    pub objective: f64,
    pub kkt_residual: f64,
    /// Grid value of `t` whose convex problem seeded the polish.
    pub t_star: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Rate as a function of `γ` for one `(config, fading)` pair.
pub struct PowerProblem<'a> {
    alpha: f64,
    upper: f64,
    n0: f64,
    scale: f64,
    /// `σ_v² = N0 + Σ a_k (1-αγ_k)/(1+b_kγ_k)`
    a: Vec<f64>,
    b: Vec<f64>,
    /// `δ_k = c_k γ_k (1-αγ_k)/(1+b_kγ_k)`
    c: Vec<f64>,
    zeros: usize,
    surrogate: &'a dyn RateSurrogate,
}

impl<'a> PowerProblem<'a> {
    pub fn new(cfg: &SystemConfig, d: &[f64], surrogate: &'a dyn RateSurrogate) -> Self {
        let (al, rho0, t) = (cfg.alpha, cfg.rho0(), cfg.coherence as f64);
        let d2: Vec<f64> = d.iter().map(|x| x * x).collect();
        PowerProblem {
            alpha: al,
            upper: 1.0 / al,
            n0: cfg.n0,
            scale: 1.0 - al,
            a: d2.iter().map(|x| x * cfg.p0 / (1.0 - al)).collect(),
            b: d2.iter().map(|x| al * rho0 * x * t).collect(),
            c: d2.iter().map(|x| al * rho0 * cfg.p0 * x * x * t / (1.0 - al)).collect(),
            zeros: d.len().saturating_sub(cfg.training_len()),
            surrogate,
        }
    }

    pub fn users(&self) -> usize {
        self.a.len()
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    fn h(&self, k: usize, g: f64) -> f64 {
        self.a[k] * (1.0 - self.alpha * g) / (1.0 + self.b[k] * g)
    }

    fn h_prime(&self, k: usize, g: f64) -> f64 {
        let q = 1.0 + self.b[k] * g;
        -self.a[k] * (self.alpha + self.b[k]) / (q * q)
    }

    pub fn sigma_v2(&self, gamma: &[f64]) -> f64 {
        self.n0 + (0..self.users()).map(|k| self.h(k, gamma[k])).sum::<f64>()
    }

    /// Noise level with no training at all.
    pub fn sigma_max(&self) -> f64 {
        self.n0 + self.a.iter().sum::<f64>()
    }

    fn delta(&self, k: usize, g: f64) -> (f64, f64) {
        let (b, al) = (self.b[k], self.alpha);
        let q = 1.0 + b * g;
        let v = self.c[k] * g * (1.0 - al * g) / q;
        let dv = self.c[k] * (1.0 - 2.0 * al * g - al * b * g * g) / (q * q);
        (v, dv)
    }

    /// `λ(γ)`: the diagonal `δ` itself when no zeros are forced, else its
    /// smallest majorizing vector (zeros dropped).
    pub fn lambdas(&self, gamma: &[f64]) -> Vec<f64> {
        let delta: Vec<f64> = (0..self.users()).map(|k| self.delta(k, gamma[k]).0).collect();
        self.layout(&delta).0
    }

    /// Nonzero-structure `λ` and, per position, which `δ` indices feed it.
    fn layout(&self, delta: &[f64]) -> (Vec<f64>, Vec<usize>, usize) {
        let n = delta.len();
        if self.zeros == 0 {
            return (delta.to_vec(), (0..n).collect(), 0);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| delta[i].total_cmp(&delta[j]));
        let split = min_majorizing_split(delta, self.zeros).expect("δ is finite and nonnegative");
        let width = split - self.zeros;
        let mut lam = Vec::with_capacity(n - self.zeros);
        if width > 0 {
            let level = order[..split].iter().map(|&i| delta[i]).sum::<f64>() / width as f64;
            lam.extend(std::iter::repeat_n(level, width));
        }
        lam.extend(order[split..].iter().map(|&i| delta[i]));
        (lam, order, split)
    }

    /// Rate and gradient. With `noise = Some(t)` the noise power is pinned
    /// at `t`, otherwise it follows `σ_v²(γ)`.
    pub fn evaluate(&self, gamma: &[f64], noise: Option<f64>) -> (f64, Vec<f64>) {
        let n = self.users();
        let mut delta = Vec::with_capacity(n);
        let mut d_delta = Vec::with_capacity(n);
        for k in 0..n {
            let (v, dv) = self.delta(k, gamma[k]);
            delta.push(v);
            d_delta.push(dv);
        }
        let (lam, order, split) = self.layout(&delta);
        let s = noise.unwrap_or_else(|| self.sigma_v2(gamma));
        let sv = self.surrogate.evaluate(&lam, s);

        let mut g_delta = vec![0.0; n];
        if self.zeros == 0 {
            g_delta.copy_from_slice(&sv.d_lambda);
        } else {
            let width = split - self.zeros;
            if width > 0 {
                let share = sv.d_lambda[..width].iter().sum::<f64>() / width as f64;
                for &i in &order[..split] {
                    g_delta[i] = share;
                }
            }
            for (pos, &i) in order[split..].iter().enumerate() {
                g_delta[i] = sv.d_lambda[width + pos];
            }
        }
        let grad = (0..n)
            .map(|k| {
                let mut g = g_delta[k] * d_delta[k];
                if noise.is_none() {
                    g += sv.d_s * self.h_prime(k, gamma[k]);
                }
                self.scale * g
            })
            .collect();
        (self.scale * sv.value, grad)
    }

    /// Rate `(1-α) F(λ(γ), σ_v²(γ))`.
    pub fn rate(&self, gamma: &[f64]) -> f64 {
        let s = self.sigma_v2(gamma);
        self.scale * self.surrogate.value(&self.lambdas(gamma), s)
    }

    /// Euclidean projection onto `[0, 1/α]^K ∩ {σ_v²(γ) <= t}`.
    ///
    /// KKT: `γ_k(μ)` minimises `½(γ - z_k)² + μ h_k(γ)` on the box and the
    /// multiplier `μ` solves `Σ h_k(γ_k(μ)) = t - N0`, found by safeguarded
    /// Newton on the decreasing load.
    fn project(&self, z: &[f64], t: f64, out: &mut [f64]) {
        let n = z.len();
        for k in 0..n {
            out[k] = z[k].clamp(0.0, self.upper);
        }
        let budget = t - self.n0;
        let (load0, _) = self.load(out, 0.0);
        if load0 <= budget {
            return;
        }
        if budget <= 0.0 {
            for k in 0..n {
                if self.a[k] > 0.0 {
                    out[k] = self.upper;
                }
            }
            return;
        }
        let tol = 1e-12 * (budget + self.a.iter().sum::<f64>());
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let (mut mu, mut excess, mut slope) = (0.0, load0 - budget, self.load(out, 0.0).1);
        // first-order guess treating every coordinate as free, for when all sit on bounds
        let free_slope: f64 = (0..n).map(|k| self.h_prime(k, out[k]).powi(2)).sum();
        let mut scale = if free_slope > 0.0 { excess / free_slope } else { 1.0 };
        let mut feasible: Option<f64> = None;
        for _ in 0..200 {
            let newton = if slope < 0.0 { mu - excess / slope } else { f64::NAN };
            let next = if newton > lo && newton < hi {
                newton
            } else if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                let up = (4.0 * mu).max(scale);
                scale *= 4.0;
                up
            };
            mu = next;
            self.shift(z, mu, out);
            let (l, dl) = self.load(out, mu);
            excess = l - budget;
            slope = dl;
            if excess <= 0.0 {
                hi = mu;
                feasible = Some(mu);
                if -excess <= tol {
                    return;
                }
            } else {
                lo = mu;
            }
            if hi.is_finite() && hi - lo <= 1e-15 * hi {
                break;
            }
        }
        match feasible {
            Some(m) if m != mu => self.shift(z, m, out),
            Some(_) => {}
            None => {
                for k in 0..n {
                    if self.a[k] > 0.0 {
                        out[k] = self.upper;
                    }
                }
            }
        }
    }

    /// `Σ h_k(γ_k)` and its derivative in `μ` along the projection path.
    fn load(&self, g: &[f64], mu: f64) -> (f64, f64) {
        let mut l = 0.0;
        let mut dl = 0.0;
        for k in 0..g.len() {
            l += self.h(k, g[k]);
            if g[k] > 0.0 && g[k] < self.upper {
                let q = 1.0 + self.b[k] * g[k];
                let hp = self.h_prime(k, g[k]);
                let hpp = 2.0 * self.a[k] * (self.alpha + self.b[k]) * self.b[k] / (q * q * q);
                dl -= hp * hp / (1.0 + mu * hpp);
            }
        }
        (l, dl)
    }

    /// Per-coordinate minimiser of `½(γ - z)² + μ h_k(γ)` on the box,
    /// warm-started from the current contents of `out` when curvature is mild.
    fn shift(&self, z: &[f64], mu: f64, out: &mut [f64]) {
        for k in 0..z.len() {
            let (a, b, al) = (self.a[k], self.b[k], self.alpha);
            let w = mu * a * (al + b);
            // stationarity: γ - z - w/(1+bγ)² = 0, increasing in γ
            let phi0 = -z[k] - w;
            if phi0 >= 0.0 {
                out[k] = 0.0;
                continue;
            }
            let qu = 1.0 + b * self.upper;
            if self.upper - z[k] - w / (qu * qu) <= 0.0 {
                out[k] = self.upper;
                continue;
            }
            out[k] = if b * self.upper > 1.0 {
                // q = 1 + bγ solves q³ - (1 + bz) q² - w b = 0; the cubic is
                // convex right of its root, so Newton from above descends onto it
                let c2 = 1.0 + b * z[k];
                let c0 = w * b;
                let cubic = |q: f64| q * q * (q - c2) - c0;
                // root lies in [c2, c2 + c0/c2²] for c2 >= 1
                let mut q = c2.max(1.0) + if c2 >= 1.0 { (c0 / (c2 * c2)).min(c0.cbrt()) } else { c0.cbrt() };
                let warm = 1.0 + b * out[k];
                if warm < q && warm >= c2.max(1.0) && cubic(warm) >= 0.0 {
                    q = warm;
                }
                for _ in 0..100 {
                    let p = cubic(q);
                    let dp = q * (3.0 * q - 2.0 * c2);
                    let next = q - p / dp;
                    if !(next < q) || q - next <= 1e-15 * q {
                        break;
                    }
                    q = next;
                }
                ((q - 1.0) / b).clamp(0.0, self.upper)
            } else {
                // φ is increasing and concave, so Newton from any φ <= 0 climbs monotonically
                let phi = |g: f64| {
                    let q = 1.0 + b * g;
                    (g - z[k] - w / (q * q), 1.0 + 2.0 * w * b / (q * q * q))
                };
                let mut g = 0.0;
                if out[k] > 0.0 && out[k] < self.upper && phi(out[k]).0 <= 0.0 {
                    g = out[k];
                }
                for _ in 0..100 {
                    let (v, dv) = phi(g);
                    let next = g - v / dv;
                    if !(next > g) || next - g <= 1e-15 * next {
                        break;
                    }
                    g = next;
                }
                g.min(self.upper)
            };
        }
    }
}

struct SpgOutcome {
    x: Vec<f64>,
    f: f64,
    residual: f64,
    iterations: usize,
}

/// Spectral projected gradient ascent with Armijo backtracking.
fn spg<E, P>(x0: &[f64], eval: E, project: P, tol: f64, max_iter: usize) -> SpgOutcome
where
    E: Fn(&[f64]) -> (f64, Vec<f64>),
    P: Fn(&[f64], &mut [f64]),
{
    let n = x0.len();
    let mut x = vec![0.0; n];
    project(x0, &mut x);
    let (mut f, mut g) = eval(&x);
    let mut probe = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let residual = |x: &[f64], g: &[f64], probe: &mut Vec<f64>, trial: &mut Vec<f64>| {
        for i in 0..n {
            probe[i] = x[i] + g[i];
        }
        project(probe, trial);
        (0..n).map(|i| (trial[i] - x[i]).abs()).fold(0.0, f64::max)
    };
    let mut res = residual(&x, &g, &mut probe, &mut trial);
    let mut step = if res > 0.0 { 1.0 / res.max(1e-12) } else { 1.0 };
    let mut it = 0;
    while it < max_iter && res > tol {
        it += 1;
        let mut accepted = false;
        let mut lam = step;
        let mut next_f = f;
        let mut next_g = g.clone();
        for _ in 0..60 {
            for i in 0..n {
                probe[i] = x[i] + lam * g[i];
            }
            project(&probe, &mut trial);
            let ascent: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            if ascent <= 0.0 {
                break;
            }
            let (ft, gt) = eval(&trial);
            if ft >= f + 1e-4 * ascent {
                next_f = ft;
                next_g = gt;
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if !accepted {
            break;
        }
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let s = trial[i] - x[i];
            ss += s * s;
            sy -= s * (next_g[i] - g[i]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (lam * 4.0).min(1e12) };
        x.copy_from_slice(&trial);
        f = next_f;
        g = next_g;
        res = residual(&x, &g, &mut probe, &mut trial);
    }
    SpgOutcome { x, f, residual: res, iterations: it }
}

/// Power search for any `K`; never fails, reports convergence instead.
pub fn solve_power(cfg: &SystemConfig, fading: &FadingProfile, opts: &PowerSolverOptions) -> Result<PowerSolution> {
    check_sizes(cfg, fading)?;
    let k = cfg.n_users;
    let streams = k.min(cfg.training_len());
    let surrogate = opts.surrogate.build(cfg.n_antennas, streams.max(1), opts.seed);
    let problem = PowerProblem::new(cfg, &fading.d, surrogate.as_ref());
    Ok(run_solver(&problem, &fading.d, cfg, opts))
}

fn run_solver(problem: &PowerProblem, d: &[f64], cfg: &SystemConfig, opts: &PowerSolverOptions) -> PowerSolution {
    let k = problem.users();
    let upper = problem.upper();
    let ka = k.min(cfg.training_len()).max(1);
    let g0 = 1.0 / (cfg.alpha * (1.0 + ((1.0 - cfg.alpha) * cfg.coherence as f64 / ka as f64).sqrt()));
    let mut start: Vec<f64> = d.iter().map(|&dk| if dk > 0.0 { g0 } else { 0.0 }).collect();

    let (lo, hi) = (problem.n0, problem.sigma_max());
    let points = opts.t_points.max(1);
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    // largest t first so each problem warm-starts from a looser one
    for j in (0..points).rev() {
        let t = if points == 1 { hi } else { lo * (hi / lo).powf(j as f64 / (points - 1) as f64) };
        let out = spg(
            &start,
            |x| problem.evaluate(x, Some(t)),
            |z, o| problem.project(z, t, o),
            opts.tolerance,
            opts.inner_iterations,
        );
        let r = problem.rate(&out.x);
        if best.as_ref().is_none_or(|(br, _, _)| r >= *br) {
            best = Some((r, t, out.x.clone()));
        }
        start = out.x;
    }
    let (_, t_star, seed) = best.expect("t grid is nonempty");

    let polish = spg(
        &seed,
        |x| problem.evaluate(x, None),
        |z, o| {
            for i in 0..z.len() {
                o[i] = z[i].clamp(0.0, upper);
            }
        },
        opts.tolerance,
        opts.max_iterations,
    );
    let gamma: Vec<f64> = polish
        .x
        .iter()
        .zip(d)
        .map(|(&g, &dk)| if dk > 0.0 && g < upper * (1.0 - 1e-12) { g } else { 0.0 })
        .collect();
    PowerSolution {
        power: PowerSplit::from_training(gamma, cfg.alpha),
        objective: polish.f,
        kkt_residual: polish.residual,
        t_star,
        iterations: polish.iterations,
        converged: polish.residual <= opts.kkt_tolerance,
    }
}

fn require_converged(sol: PowerSolution) -> Result<PowerSplit> {
    if sol.converged {
        Ok(sol.power)
    } else {
        Err(Error::Numeric(format!(
            "power search stopped with KKT residual {:.3e} after {} iterations; best rate {:.6} at gamma {:?}",
            sol.kkt_residual, sol.iterations, sol.objective, sol.power.gamma
        )))
    }
}

/// Optimal powers for `K <= αT` with default options.
pub fn solve_power_kleq(cfg: &SystemConfig, fading: &FadingProfile) -> Result<PowerSplit> {
    if cfg.n_users > cfg.training_len() {
        return Err(Error::Domain(format!(
            "K = {} exceeds αT = {}; use solve_power_kgt",
            cfg.n_users,
            cfg.training_len()
        )));
    }
    require_converged(solve_power(cfg, fading, &PowerSolverOptions::default())?)
}

/// Optimal powers for `K > αT` under the majorization-linked gains.
pub fn solve_power_kgt(cfg: &SystemConfig, fading: &FadingProfile) -> Result<PowerSplit> {
    if cfg.n_users <= cfg.training_len() {
        return Err(Error::Domain(format!(
            "K = {} does not exceed αT = {}; use solve_power_kleq",
            cfg.n_users,
            cfg.training_len()
        )));
    }
    require_converged(solve_power(cfg, fading, &PowerSolverOptions::default())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::DeterministicEquivalent;

    fn cfg(n: usize, k: usize, t: usize, at: usize, rho0: f64) -> SystemConfig {
        SystemConfig::new(n, k, t, at as f64 / t as f64, 1.0, 1.0 / rho0).unwrap()
    }

    #[test]
    fn gains_zero_without_power() {
        let c = cfg(4, 3, 10, 5, 10.0);
        let f = FadingProfile::uniform(3, 1.0).unwrap();
        let g = effective_gains(&c, &f, &PowerSplit::uniform(3, 0.0, 0.0)).unwrap();
        assert!(g.lambdas.iter().all(|l| *l == 0.0));
        assert_eq!(g.sigma_v2, c.n0);
    }

    #[test]
    fn scalar_gain_is_half_p0_rho0() {
        // α γ ρ0 d² T = 1 with α = 1/4, T = 4, ρ0 = 1, γ = 1, γ' = 1
        let c = SystemConfig::new(1, 1, 4, 0.25, 1.0, 1.0).unwrap();
        let f = FadingProfile::uniform(1, 1.0).unwrap();
        let p = PowerSplit { gamma: vec![1.0], gamma_prime: vec![1.0], active: vec![true] };
        let g = effective_gains(&c, &f, &p).unwrap();
        assert!((g.lambdas[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_gains_spread_over_training_symbols() {
        let c = cfg(8, 6, 12, 3, 100.0);
        let f = FadingProfile::uniform(6, 0.7).unwrap();
        let p = PowerSplit::from_training(vec![1.5; 6], c.alpha);
        let g = effective_gains(&c, &f, &p).unwrap();
        let delta = effective_diagonal(&c, &f.d, &p)[0];
        for l in &g.lambdas[..3] {
            assert!((l - 2.0 * delta).abs() < 1e-12 * delta);
        }
        assert!(g.lambdas[3..].iter().all(|l| *l == 0.0));
    }

    #[test]
    fn highsnr_closed_form_examples() {
        let c = SystemConfig::new(50, 100, 200, 0.5, 1.0, 1.0).unwrap();
        let p = gamma_highsnr(&c, 100);
        assert!((p.gamma[0] - 1.0).abs() < 1e-15 && (p.gamma_prime[0] - 1.0).abs() < 1e-15);
        let c = SystemConfig::new(50, 10, 100, 0.2, 1.0, 1.0).unwrap();
        let p = gamma_highsnr(&c, 10);
        assert!((p.gamma[0] - 1.306_019_374).abs() < 1e-8);
        assert!((p.gamma_prime[0] - 0.923_495_156).abs() < 1e-8);
        let c = SystemConfig::new(50, 150, 200, 0.5, 1.0, 1.0).unwrap();
        let p = gamma_highsnr(&c, 100);
        assert_eq!(p.active_count(), 100);
        assert!((p.gamma[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_gamma_special_cases() {
        // K = (1-α)T makes μ1 vanish
        let c = SystemConfig::new(8, 4, 8, 0.5, 1.0, 0.1).unwrap();
        assert!((gamma_uniform_opt(&c, 1.3).unwrap() - 1.0).abs() < 1e-15);
        let c = SystemConfig::new(8, 3, 10, 0.7, 1.0, 0.1).unwrap();
        assert!((gamma_uniform_opt(&c, 1.0).unwrap() - 1.0 / 1.4).abs() < 1e-15);
        // α = 1/2 makes μ2 vanish
        let c = SystemConfig::new(8, 9, 10, 0.5, 1.0, 0.01).unwrap();
        assert!((gamma_uniform_opt(&c, 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tau_example_and_zero_data_power() {
        let c = SystemConfig::new(100, 100, 200, 0.5, 1.0, 1.0).unwrap();
        assert!((tau(&c, 1.0, 1.0, 1.0, 100).value - 100.0 / 201.0).abs() < 1e-15);
        assert_eq!(tau(&c, 1.0, 1.0, 0.0, 100).value, 0.0);
        assert_eq!(tau(&c, 1.0, 1.0, 0.0, 150).value, 0.0);
    }

    #[test]
    fn problem_gradient_matches_finite_differences() {
        for &(k, at) in &[(4, 6), (6, 3)] {
            let c = cfg(10, k, 12, at, 50.0);
            let d: Vec<f64> = (0..k).map(|i| 1.5 / (1.0 + i as f64)).collect();
            let de = DeterministicEquivalent::new(10);
            let p = PowerProblem::new(&c, &d, &de);
            let gamma: Vec<f64> = (0..k).map(|i| 0.4 + 0.3 * i as f64).collect();
            for noise in [None, Some(0.3)] {
                let (_, grad) = p.evaluate(&gamma, noise);
                for i in 0..k {
                    let h = 1e-6;
                    let mut up = gamma.clone();
                    up[i] += h;
                    let mut dn = gamma.clone();
                    dn[i] -= h;
                    let fd = (p.evaluate(&up, noise).0 - p.evaluate(&dn, noise).0) / (2.0 * h);
                    assert!((fd - grad[i]).abs() < 1e-5 * fd.abs().max(1.0), "k={k} i={i}: {fd} vs {}", grad[i]);
                }
            }
        }
    }

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let c = cfg(6, 4, 10, 5, 20.0);
        let d = [1.0, 0.8, 0.5, 0.1];
        let de = DeterministicEquivalent::new(6);
        let p = PowerProblem::new(&c, &d, &de);
        let t = c.n0 + 0.3 * (p.sigma_max() - c.n0);
        let z = [3.0, -1.0, 0.2, 0.7];
        let mut out = [0.0; 4];
        p.project(&z, t, &mut out);
        assert!(p.sigma_v2(&out) <= t * (1.0 + 1e-12));
        assert!(out.iter().all(|g| (0.0..=p.upper()).contains(g)));
        let mut again = [0.0; 4];
        p.project(&out, t, &mut again);
        for i in 0..4 {
            assert!((again[i] - out[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_solution_is_symmetric() {
        let c = cfg(8, 4, 20, 5, 100.0);
        let f = FadingProfile::uniform(4, 1.0).unwrap();
        let p = solve_power_kleq(&c, &f).unwrap();
        for g in &p.gamma {
            assert!((g - p.gamma[0]).abs() < 1e-6);
        }
        // symmetric optimum maximises τ, i.e. the closed form
        let want = gamma_uniform_opt(&c, 1.0).unwrap();
        assert!((p.gamma[0] - want).abs() < 1e-4 * want, "{} vs {want}", p.gamma[0]);
    }

    #[test]
    fn wrong_branch_is_rejected() {
        let c = cfg(8, 6, 20, 5, 100.0);
        let f = FadingProfile::uniform(6, 1.0).unwrap();
        assert!(matches!(solve_power_kleq(&c, &f), Err(Error::Domain(_))));
        let c = cfg(8, 4, 20, 5, 100.0);
        let f = FadingProfile::uniform(4, 1.0).unwrap();
        assert!(matches!(solve_power_kgt(&c, &f), Err(Error::Domain(_))));
    }
}

