//! Complex matrix helpers shared by the estimation and evaluation code.
//!
//! Small dense problems go through `nalgebra`. The Monte Carlo inner loop
//! (Gram matrix plus Cholesky log-determinant) is hand-written on split
//! real/imaginary buffers because it dominates runtime.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Diagonal complex matrix from real entries.
pub fn diag_real(v: &[f64]) -> CMat {
    let n = v.len();
    CMat::from_fn(n, n, |i, j| if i == j { c(v[i], 0.0) } else { c(0.0, 0.0) })
}

/// Draws an `rows x cols` matrix of i.i.d. CN(0, 1) entries.
pub fn sample_cn<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMat::zeros(rows, cols);
    // column-major fill keeps the draw order independent of nalgebra internals
    for j in 0..cols {
        for i in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(i, j)] = c(re * s, im * s);
        }
    }
    m
}

/// Largest relative deviation from conjugate symmetry.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(1e-300);
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
///
/// The input is symmetrised first so round-off in callers never leaks into
/// complex eigenvalues.
pub fn hermitian_eigen(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    let sym = (a + a.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    Ok((values, vectors))
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn hermitian_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    hermitian_eigen(a).map(|(v, _)| v)
}

/// `V f(Λ) V†` for a Hermitian `A = V Λ V†`.
pub fn hermitian_fn<F: Fn(f64) -> f64>(a: &CMat, f: F) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(a)?;
    let n = vals.len();
    let mut scaled = vecs.clone();
    for k in 0..n {
        let fk = f(vals[k]);
        for r in 0..n {
            scaled[(r, k)] *= fk;
        }
    }
    Ok(&scaled * vecs.adjoint())
}

/// Matrix with orthonormal rows, `rows <= cols`, from the QR factor of a
/// seeded Gaussian matrix.
pub fn orthonormal_rows<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<CMat> {
    if rows > cols {
        return Err(Error::Dimension(format!(
            "cannot build {rows} orthonormal rows in dimension {cols}"
        )));
    }
    if rows == 0 {
        return Ok(CMat::zeros(0, cols));
    }
    let g = sample_cn(cols, rows, rng);
    let q = g.qr().q();
    Ok(q.adjoint())
}

/// Unitary DFT matrix of order `n`, `F[j,k] = exp(-2πi jk/n)/√n`.
pub fn unitary_dft(n: usize) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |j, k| {
        let phase = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
        c(phase.cos() * s, phase.sin() * s)
    })
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Scratch buffers for [`weighted_logdet`].
#[derive(Debug, Default, Clone)]
pub struct LogdetWorkspace {
    re: Vec<f64>,
    im: Vec<f64>,
}

/// `log2 det(I + G diag(w) G† / σ²)` for a column-major `rows x cols`
/// matrix given as split real/imaginary parts.
///
/// Works in whichever of the `cols x cols` or `rows x rows` forms is
/// smaller. Returns `None` if the Cholesky factorisation breaks down,
/// which only happens for non-finite input.
pub fn weighted_logdet(
    g_re: &[f64],
    g_im: &[f64],
    rows: usize,
    cols: usize,
    weights: &[f64],
    inv_sigma2: f64,
    ws: &mut LogdetWorkspace,
) -> Option<f64> {
    debug_assert_eq!(g_re.len(), rows * cols);
    debug_assert_eq!(weights.len(), cols);
    let m = rows.min(cols);
    if m == 0 {
        return Some(0.0);
    }
    ws.re.clear();
    ws.re.resize(m * m, 0.0);
    ws.im.clear();
    ws.im.resize(m * m, 0.0);
    let (are, aim) = (&mut ws.re, &mut ws.im);

    if cols <= rows {
        // A = I + W^{1/2} G†G W^{1/2} / σ², lower triangle only
        for i in 0..cols {
            let (ri, ii) = (&g_re[i * rows..(i + 1) * rows], &g_im[i * rows..(i + 1) * rows]);
            let wi = weights[i].max(0.0).sqrt();
            for j in 0..=i {
                let (rj, ij) = (&g_re[j * rows..(j + 1) * rows], &g_im[j * rows..(j + 1) * rows]);
                let mut sr = 0.0;
                let mut si = 0.0;
                for r in 0..rows {
                    // conj(g_ri) * g_rj
                    sr += ri[r] * rj[r] + ii[r] * ij[r];
                    si += ri[r] * ij[r] - ii[r] * rj[r];
                }
                let s = wi * weights[j].max(0.0).sqrt() * inv_sigma2;
                are[i * m + j] = sr * s;
                aim[i * m + j] = si * s;
            }
            are[i * m + i] += 1.0;
        }
    } else {
        // A = I + Σ_k w_k g_k g_k† / σ², lower triangle only
        for k in 0..cols {
            let w = weights[k].max(0.0) * inv_sigma2;
            if w == 0.0 {
                continue;
            }
            let (rk, ik) = (&g_re[k * rows..(k + 1) * rows], &g_im[k * rows..(k + 1) * rows]);
            for i in 0..rows {
                let (xr, xi) = (rk[i] * w, ik[i] * w);
                let row_re = &mut are[i * m..i * m + i + 1];
                let row_im = &mut aim[i * m..i * m + i + 1];
                for j in 0..=i {
                    // x_i conj(g_jk)
                    row_re[j] += xr * rk[j] + xi * ik[j];
                    row_im[j] += xi * rk[j] - xr * ik[j];
                }
            }
        }
        for i in 0..m {
            are[i * m + i] += 1.0;
        }
    }
    cholesky_logdet(are, aim, m).map(|ln| ln / std::f64::consts::LN_2)
}

/// In-place complex Cholesky of the lower triangle; returns `ln det`.
fn cholesky_logdet(are: &mut [f64], aim: &mut [f64], m: usize) -> Option<f64> {
    let mut ln_det = 0.0;
    for j in 0..m {
        let mut d = are[j * m + j];
        for k in 0..j {
            d -= are[j * m + k] * are[j * m + k] + aim[j * m + k] * aim[j * m + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let ljj = d.sqrt();
        are[j * m + j] = ljj;
        aim[j * m + j] = 0.0;
        ln_det += 2.0 * ljj.ln();
        let inv = 1.0 / ljj;
        for i in (j + 1)..m {
            let mut sr = are[i * m + j];
            let mut si = aim[i * m + j];
            for k in 0..j {
                // L_ik conj(L_jk)
                let (a, b) = (are[i * m + k], aim[i * m + k]);
                let (cr, ci) = (are[j * m + k], aim[j * m + k]);
                sr -= a * cr + b * ci;
                si -= b * cr - a * ci;
            }
            are[i * m + j] = sr * inv;
            aim[i * m + j] = si * inv;
        }
    }
    Some(ln_det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn logdet_reference(g: &CMat, w: &[f64], sigma2: f64) -> f64 {
        let n = g.nrows();
        let a = CMat::identity(n, n) + g * diag_real(w) * g.adjoint() / c(sigma2, 0.0);
        let (vals, _) = hermitian_eigen(&a).unwrap();
        vals.iter().map(|v| v.log2()).sum()
    }

    fn split(g: &CMat) -> (Vec<f64>, Vec<f64>) {
        (g.iter().map(|z| z.re).collect(), g.iter().map(|z| z.im).collect())
    }

    #[test]
    fn fast_logdet_matches_eigen_route_in_both_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ws = LogdetWorkspace::default();
        for &(rows, cols) in &[(6, 3), (3, 6), (5, 5), (1, 4)] {
            let g = sample_cn(rows, cols, &mut rng);
            let w: Vec<f64> = (0..cols).map(|k| 0.3 + k as f64).collect();
            let (re, im) = split(&g);
            let fast = weighted_logdet(&re, &im, rows, cols, &w, 1.0 / 0.7, &mut ws).unwrap();
            let slow = logdet_reference(&g, &w, 0.7);
            assert!((fast - slow).abs() < 1e-10, "{rows}x{cols}: {fast} vs {slow}");
        }
    }

    #[test]
    fn zero_weights_give_zero_logdet() {
        let mut ws = LogdetWorkspace::default();
        let v = weighted_logdet(&[1.0; 8], &[0.5; 8], 4, 2, &[0.0, 0.0], 1.0, &mut ws).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn orthonormal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = orthonormal_rows(3, 5, &mut rng).unwrap();
        let gram = &u * u.adjoint();
        assert!(frobenius(&(gram - CMat::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn dft_is_unitary() {
        let f = unitary_dft(6);
        assert!(frobenius(&(&f * f.adjoint() - CMat::identity(6, 6))) < 1e-12);
    }

    #[test]
    fn hermitian_fn_square_root_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = sample_cn(4, 4, &mut rng);
        let a = &g * g.adjoint();
        let r = hermitian_fn(&a, |x| x.max(0.0).sqrt()).unwrap();
        assert!(frobenius(&(&r * &r - &a)) < 1e-10 * frobenius(&a));
    }
}
