//! Smooth stand-ins for `E log2 det(I_N + G diag(λ) G† / s)`, `G` with
//! i.i.d. CN(0, 1) entries, used inside the power and design searches.
//!
//! Two flavours: the large-system deterministic equivalent (cheap,
//! deterministic, accurate to `O(1/N)`), and a sample average over a fixed
//! batch of Gaussian draws (common random numbers).

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{c, sample_cn, CMat, C64};

/// Value and gradient of the expected log-determinant, in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateValue {
    pub value: f64,
    pub d_lambda: Vec<f64>,
    pub d_s: f64,
}

pub trait RateSurrogate: Send + Sync {
    /// `E log2 det(I + G diag(λ) G† / s)` and its partial derivatives.
    fn evaluate(&self, lambdas: &[f64], s: f64) -> SurrogateValue;

    /// Value only.
    fn value(&self, lambdas: &[f64], s: f64) -> f64 {
        self.evaluate(lambdas, s).value
    }
}

/// Which surrogate a search should use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SurrogateKind {
    #[default]
    DeterministicEquivalent,
    CommonRandomNumbers { draws: usize },
}

impl SurrogateKind {
    /// Builds the surrogate for `n_antennas` receive antennas and at most
    /// `max_streams` nonzero `λ`.
    pub fn build(&self, n_antennas: usize, max_streams: usize, seed: u64) -> Box<dyn RateSurrogate> {
        match *self {
            SurrogateKind::DeterministicEquivalent => Box::new(DeterministicEquivalent::new(n_antennas)),
            SurrogateKind::CommonRandomNumbers { draws } => {
                Box::new(CommonRandomNumbers::new(n_antennas, max_streams, draws, seed))
            }
        }
    }
}

/// Large-system deterministic equivalent.
///
/// With `t_k = Nλ_k` and `m` the root of
/// `m (s + (1/N) Σ t_k / (1 + t_k m)) = 1`, the approximation is
/// `Σ ln(1 + t_k m) + N(s m - 1 - ln(s m))` nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicEquivalent {
    pub n_antennas: usize,
}

impl DeterministicEquivalent {
    pub fn new(n_antennas: usize) -> Self {
        DeterministicEquivalent { n_antennas }
    }

    /// Root `m ∈ (0, 1/s]` of the fixed-point equation.
    pub fn fixed_point(&self, lambdas: &[f64], s: f64) -> f64 {
        let n = self.n_antennas as f64;
        // g(m) = s m + (1/N) Σ t m/(1+t m) - 1 is increasing and concave,
        // so Newton from m = 0 climbs monotonically to the root
        let mut m = 0.0_f64;
        for _ in 0..200 {
            let (mut g, mut dg) = (s * m - 1.0, s);
            for &l in lambdas {
                let t = n * l.max(0.0);
                let q = 1.0 + t * m;
                g += t * m / (q * n);
                dg += t / (q * q * n);
            }
            let step = g / dg;
            let next = (m - step).min(1.0 / s);
            if (next - m).abs() <= 1e-15 * next.abs() {
                return next;
            }
            m = next;
        }
        m
    }
}

impl RateSurrogate for DeterministicEquivalent {
    fn evaluate(&self, lambdas: &[f64], s: f64) -> SurrogateValue {
        let n = self.n_antennas as f64;
        let m = self.fixed_point(lambdas, s);
        let sm = s * m;
        let mut nats = n * (sm - 1.0 - sm.ln());
        let mut d_lambda = Vec::with_capacity(lambdas.len());
        for &l in lambdas {
            let t = n * l.max(0.0);
            nats += (t * m).ln_1p();
            d_lambda.push(n * m / (1.0 + t * m) / LN_2);
        }
        SurrogateValue { value: nats.max(0.0) / LN_2, d_lambda, d_s: n * (m - 1.0 / s) / LN_2 }
    }
}

/// Sample average over a fixed batch of Gaussian matrices.
#[derive(Debug, Clone)]
pub struct CommonRandomNumbers {
    /// `G†G` for each draw, `max_streams x max_streams`.
    grams: Vec<DMatrix<C64>>,
}

impl CommonRandomNumbers {
    pub fn new(n_antennas: usize, max_streams: usize, draws: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grams = (0..draws.max(1))
            .map(|_| {
                let g = sample_cn(n_antennas, max_streams, &mut rng);
                g.adjoint() * g
            })
            .collect();
        CommonRandomNumbers { grams }
    }

    pub fn draws(&self) -> usize {
        self.grams.len()
    }
}

impl RateSurrogate for CommonRandomNumbers {
    fn evaluate(&self, lambdas: &[f64], s: f64) -> SurrogateValue {
        let n = lambdas.len();
        let cap = self.grams[0].nrows();
        assert!(n <= cap, "surrogate built for {cap} streams, got {n}");
        let mut value = 0.0;
        let mut d_lambda = vec![0.0; n];
        let mut d_s = 0.0;
        for gram in &self.grams {
            let sg = gram.view((0, 0), (n, n)).into_owned();
            // A = sI + ΛS, log det(I + ΛS/s) = log det A - n log s
            let mut a = sg.clone();
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] *= c(lambdas[i].max(0.0), 0.0);
                }
                a[(i, i)] += c(s, 0.0);
            }
            let lu = a.lu();
            value += (lu.determinant().ln().re - n as f64 * s.ln()) / LN_2;
            let inv = lu.try_inverse().expect("sI + ΛS is invertible for s > 0");
            let sa = &sg * &inv;
            for k in 0..n {
                d_lambda[k] += sa[(k, k)].re / LN_2;
            }
            d_s += ((0..n).map(|k| inv[(k, k)].re).sum::<f64>() - n as f64 / s) / LN_2;
        }
        let w = 1.0 / self.grams.len() as f64;
        d_lambda.iter_mut().for_each(|g| *g *= w);
        SurrogateValue { value: value * w, d_lambda, d_s: d_s * w }
    }
}

/// Exact sample mean of `log2 det(I + G diag(λ) G†/s)` for a given matrix.
pub fn logdet_sample(g: &CMat, lambdas: &[f64], s: f64) -> f64 {
    let n = lambdas.len();
    let gram = g.columns(0, n).adjoint() * g.columns(0, n);
    let mut a = CMat::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += gram[(i, j)] * c((lambdas[i].max(0.0) * lambdas[j].max(0.0)).sqrt() / s, 0.0);
        }
    }
    a.lu().determinant().ln().re / LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc_reference(n: usize, lambdas: &[f64], s: f64, draws: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        (0..draws)
            .map(|_| logdet_sample(&sample_cn(n, lambdas.len(), &mut rng), lambdas, s))
            .sum::<f64>()
            / draws as f64
    }

    #[test]
    fn deterministic_equivalent_tracks_monte_carlo() {
        let lambdas = [3.0, 1.0, 0.5, 0.25, 0.0, 2.0];
        for &(n, s) in &[(16, 1.0), (32, 0.1), (8, 10.0)] {
            let de = DeterministicEquivalent::new(n).value(&lambdas, s);
            let mc = mc_reference(n, &lambdas, s, 4000);
            assert!((de - mc).abs() < 0.01 * mc, "N={n} s={s}: {de} vs {mc}");
        }
    }

    #[test]
    fn deterministic_equivalent_gradient_matches_finite_differences() {
        let de = DeterministicEquivalent::new(12);
        let lambdas = vec![2.0, 0.7, 0.1, 5.0];
        let s = 0.4;
        let v = de.evaluate(&lambdas, s);
        let h = 1e-6;
        for k in 0..lambdas.len() {
            let mut up = lambdas.clone();
            up[k] += h;
            let mut dn = lambdas.clone();
            dn[k] -= h;
            let fd = (de.value(&up, s) - de.value(&dn, s)) / (2.0 * h);
            assert!((fd - v.d_lambda[k]).abs() < 1e-6 * fd.abs().max(1.0), "k={k}");
        }
        let fd = (de.value(&lambdas, s + h) - de.value(&lambdas, s - h)) / (2.0 * h);
        assert!((fd - v.d_s).abs() < 1e-6 * fd.abs().max(1.0));
    }

    #[test]
    fn zero_gains_give_zero() {
        let de = DeterministicEquivalent::new(10);
        let v = de.evaluate(&[0.0, 0.0], 3.0);
        assert_eq!(v.value, 0.0);
        assert!(v.d_s.abs() < 1e-12);
    }

    #[test]
    fn common_random_numbers_gradient_matches_finite_differences() {
        let crn = CommonRandomNumbers::new(6, 4, 20, 1);
        let lambdas = vec![1.0, 0.3, 2.0];
        let s = 0.5;
        let v = crn.evaluate(&lambdas, s);
        let h = 1e-6;
        for k in 0..3 {
            let mut up = lambdas.clone();
            up[k] += h;
            let mut dn = lambdas.clone();
            dn[k] -= h;
            let fd = (crn.value(&up, s) - crn.value(&dn, s)) / (2.0 * h);
            assert!((fd - v.d_lambda[k]).abs() < 1e-5 * fd.abs().max(1.0), "k={k}");
        }
        let fd = (crn.value(&lambdas, s + h) - crn.value(&lambdas, s - h)) / (2.0 * h);
        assert!((fd - v.d_s).abs() < 1e-5 * fd.abs().max(1.0));
    }

    #[test]
    fn common_random_numbers_close_to_deterministic_equivalent() {
        let lambdas = [1.0, 2.0, 0.5];
        let crn = CommonRandomNumbers::new(24, 3, 400, 5).value(&lambdas, 0.7);
        let de = DeterministicEquivalent::new(24).value(&lambdas, 0.7);
        assert!((crn - de).abs() < 0.02 * de, "{crn} vs {de}");
    }
}
