//! Vector majorization and Hermitian matrices with a prescribed spectrum
//! and diagonal.
//!
//! `x ≻ y` is tested on increasing rearrangements: every proper prefix sum
//! of `x` is at most the matching prefix sum of `y`, and the totals agree.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};

/// Absolute-plus-relative slack used by every majorization comparison.
pub const MAJORIZATION_TOL: f64 = 1e-9;

/// Increasing rearrangement; ties keep their original order.
pub fn increasing(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Domain(format!("{what} must be nonempty")));
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("{what} contains non-finite entry {bad}")));
    }
    Ok(())
}

/// True iff `x` majorizes `y`.
pub fn majorizes(x: &[f64], y: &[f64]) -> Result<bool> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "majorization needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    let xs = increasing(x);
    let ys = increasing(y);
    let tol = MAJORIZATION_TOL * ys.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    let n = xs.len();
    let (mut px, mut py) = (0.0, 0.0);
    for i in 0..n - 1 {
        px += xs[i];
        py += ys[i];
        if px > py + tol {
            return Ok(false);
        }
    }
    px += xs[n - 1];
    py += ys[n - 1];
    Ok((px - py).abs() <= tol)
}

/// The smallest vector with `zeros` zero entries that majorizes `y`.
///
/// Returned in increasing order: `zeros` leading zeros, then a flat block
/// holding the mass of the `k` smallest entries of `y`, then the remaining
/// entries of `y` unchanged. `k` is the first index at which the flat
/// level no longer exceeds the next entry of `y`.
pub fn min_majorizing_vector(y: &[f64], zeros: usize) -> Result<Vec<f64>> {
    let (ys, k) = flat_block(y, zeros)?;
    let n = ys.len();
    let mut out = vec![0.0; n];
    if k > zeros {
        let level = ys[..k].iter().sum::<f64>() / (k - zeros) as f64;
        for v in &mut out[zeros..k] {
            *v = level;
        }
    }
    out[k..].copy_from_slice(&ys[k..]);
    Ok(out)
}

/// End of the flat block of [`min_majorizing_vector`]: increasing positions
/// `zeros..k` share one level, positions `k..` copy `y`.
pub fn min_majorizing_split(y: &[f64], zeros: usize) -> Result<usize> {
    flat_block(y, zeros).map(|(_, k)| k)
}

fn flat_block(y: &[f64], zeros: usize) -> Result<(Vec<f64>, usize)> {
    check_finite(y, "y")?;
    let n = y.len();
    if zeros > n {
        return Err(Error::Domain(format!(
            "cannot force {zeros} zeros into a vector of length {n}"
        )));
    }
    if let Some(neg) = y.iter().find(|v| **v < 0.0) {
        return Err(Error::Domain(format!("y must be nonnegative, found {neg}")));
    }
    let ys = increasing(y);
    if zeros == n && ys.iter().any(|v| *v > 0.0) {
        return Err(Error::Domain(
            "an all-zero vector cannot majorize a nonzero y".into(),
        ));
    }
    let mut prefix: f64 = ys[..zeros].iter().sum();
    for j in zeros..n {
        if prefix <= (j - zeros) as f64 * ys[j] {
            return Ok((ys, j));
        }
        prefix += ys[j];
    }
    Ok((ys, n))
}

/// Real symmetric (hence Hermitian) matrix whose eigenvalues are `eigs` and
/// whose diagonal is `diag`.
///
/// Built by repeated 2x2 rotations: each step places the largest remaining
/// target on the diagonal by rotating the two adjacent eigenvalues that
/// bracket it, then recurses on the deflated problem.
pub fn schur_horn(eigs: &[f64], diag: &[f64]) -> Result<CMat> {
    if !majorizes(eigs, diag)? {
        return Err(Error::Domain(
            "eigenvalues do not majorize the requested diagonal".into(),
        ));
    }
    let n = eigs.len();
    let mut lam = eigs.to_vec();
    lam.sort_by(|a, b| b.total_cmp(a));

    // targets descending, remembering where each one belongs
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let targets: Vec<f64> = order.iter().map(|&i| diag[i]).collect();

    let q = rotation_frame(&lam, &targets);
    let a = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lam.clone())) * q.transpose();

    let mut out = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = if i == j { a[(i, i)] } else { 0.5 * (a[(i, j)] + a[(j, i)]) };
            out[(order[i], order[j])] = c(v, 0.0);
        }
    }
    Ok(out)
}

/// Orthogonal `Q` with `diag(Q diag(lam) Qᵀ) = targets`, both descending
/// and `lam ≻ targets`.
fn rotation_frame(lam: &[f64], targets: &[f64]) -> DMatrix<f64> {
    let n = lam.len();
    if n == 1 {
        return DMatrix::identity(1, 1);
    }
    let t0 = targets[0];
    // largest j with lam[j] >= t0, kept inside 0..n-1 so j+1 exists
    let mut j = 0;
    for (i, &l) in lam.iter().enumerate() {
        if l >= t0 {
            j = i;
        }
    }
    let j = j.min(n - 2);
    let (hi, lo) = (lam[j], lam[j + 1]);
    let gap = hi - lo;
    let c2 = if gap > 0.0 { ((t0 - lo) / gap).clamp(0.0, 1.0) } else { 1.0 };
    let (cs, sn) = (c2.sqrt(), (1.0 - c2).sqrt());
    let eta = hi + lo - t0;

    // deflated spectrum keeps descending order: eta sits between lam[j-1] and lam[j+2]
    let mut rest = Vec::with_capacity(n - 1);
    rest.extend_from_slice(&lam[..j]);
    rest.push(eta);
    rest.extend_from_slice(&lam[j + 2..]);
    let inner = rotation_frame(&rest, &targets[1..]);

    // P maps lam (original order) onto the arrowhead layout [t0 | rest]
    let mut p = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        if i < j {
            p[(i + 1, i)] = 1.0;
        } else if i > j + 1 {
            p[(i, i)] = 1.0;
        }
    }
    p[(0, j)] = cs;
    p[(j + 1, j)] = sn;
    p[(0, j + 1)] = -sn;
    p[(j + 1, j + 1)] = cs;

    let mut lift = DMatrix::<f64>::identity(n, n);
    lift.view_mut((1, 1), (n - 1, n - 1)).copy_from(&inner);
    lift * p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigenvalues;
    use proptest::prelude::*;

    #[test]
    fn majorizes_basic_cases() {
        assert!(majorizes(&[2.0, 0.0], &[1.0, 1.0]).unwrap());
        assert!(!majorizes(&[1.0, 1.0], &[2.0, 0.0]).unwrap());
        assert!(majorizes(&[3.0, 1.0, 4.0], &[3.0, 1.0, 4.0]).unwrap());
    }

    #[test]
    fn majorizes_rejects_length_mismatch() {
        assert!(matches!(majorizes(&[1.0], &[1.0, 0.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn majorizes_requires_equal_totals() {
        assert!(!majorizes(&[2.0, 0.1], &[1.0, 1.0]).unwrap());
    }

    #[test]
    fn min_majorizing_examples() {
        assert_eq!(min_majorizing_vector(&[1.0, 1.0, 1.0, 1.0], 2).unwrap(), vec![0.0, 0.0, 2.0, 2.0]);
        assert_eq!(
            min_majorizing_vector(&[1.0, 2.0, 10.0, 20.0], 1).unwrap(),
            vec![0.0, 3.0, 10.0, 20.0]
        );
        assert_eq!(min_majorizing_vector(&[5.0, 7.0], 0).unwrap(), vec![5.0, 7.0]);
        // unsorted input comes back increasing
        assert_eq!(min_majorizing_vector(&[7.0, 5.0], 0).unwrap(), vec![5.0, 7.0]);
    }

    #[test]
    fn min_majorizing_errors() {
        assert!(matches!(min_majorizing_vector(&[1.0, 2.0], 3), Err(Error::Domain(_))));
        assert!(matches!(min_majorizing_vector(&[1.0, -2.0], 1), Err(Error::Domain(_))));
        assert!(matches!(min_majorizing_vector(&[1.0, 2.0], 2), Err(Error::Domain(_))));
        assert_eq!(min_majorizing_vector(&[0.0, 0.0], 2).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn existing_zeros_are_reused() {
        // y already has two zeros; asking for two more changes nothing
        let y = [0.0, 0.0, 3.0, 4.0];
        assert_eq!(min_majorizing_vector(&y, 2).unwrap(), vec![0.0, 0.0, 3.0, 4.0]);
    }

    #[test]
    fn split_reports_flat_block_end() {
        assert_eq!(min_majorizing_split(&[1.0, 2.0, 10.0, 20.0], 1).unwrap(), 2);
        assert_eq!(min_majorizing_split(&[1.0, 1.0, 1.0, 1.0], 2).unwrap(), 4);
        assert_eq!(min_majorizing_split(&[5.0, 7.0], 0).unwrap(), 0);
    }

    fn check_schur_horn(eigs: &[f64], diag: &[f64]) {
        let a = schur_horn(eigs, diag).unwrap();
        let scale = eigs.iter().map(|v| v.abs()).fold(1.0_f64, f64::max);
        for i in 0..diag.len() {
            assert!((a[(i, i)].re - diag[i]).abs() < 1e-8 * scale, "diag {i}");
        }
        let mut got = hermitian_eigenvalues(&a).unwrap();
        let mut want = eigs.to_vec();
        got.sort_by(|a, b| a.total_cmp(b));
        want.sort_by(|a, b| a.total_cmp(b));
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8 * scale, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn schur_horn_two_by_two_is_all_ones() {
        let a = schur_horn(&[2.0, 0.0], &[1.0, 1.0]).unwrap();
        for z in a.iter() {
            assert!((z.re.abs() - 1.0).abs() < 1e-12 && z.im == 0.0);
        }
        check_schur_horn(&[2.0, 0.0], &[1.0, 1.0]);
    }

    #[test]
    fn schur_horn_diagonal_when_spectrum_is_diagonal() {
        let a = schur_horn(&[3.0, 1.0], &[3.0, 1.0]).unwrap();
        assert!((a[(0, 1)].norm()) < 1e-12);
        check_schur_horn(&[3.0, 1.0], &[3.0, 1.0]);
    }

    #[test]
    fn schur_horn_three_by_three() {
        check_schur_horn(&[3.0, 1.0, 0.0], &[2.0, 1.0, 1.0]);
        check_schur_horn(&[3.0, 1.0, 0.0], &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn schur_horn_rejects_non_majorizing_pair() {
        assert!(matches!(schur_horn(&[1.0, 1.0], &[2.0, 0.0]), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn min_majorizing_preserves_sum_and_majorizes(
            y in prop::collection::vec(0.0f64..10.0, 1..7),
            m_frac in 0.0f64..1.0,
        ) {
            let m = ((y.len() as f64) * m_frac) as usize;
            let x = min_majorizing_vector(&y, m).unwrap();
            let sx: f64 = x.iter().sum();
            let sy: f64 = y.iter().sum();
            prop_assert!((sx - sy).abs() <= 1e-12 * sy.max(1.0));
            prop_assert!(majorizes(&x, &y).unwrap());
            prop_assert!(x.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(x[..m].iter().all(|v| *v == 0.0));
        }

        #[test]
        fn schur_horn_from_random_spectrum(
            raw in prop::collection::vec(-5.0f64..5.0, 1..9),
            mix in 0.0f64..1.0,
        ) {
            // any convex mix of the spectrum with its mean is majorized by it
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            let diag: Vec<f64> = raw.iter().rev().map(|v| mix * v + (1.0 - mix) * mean).collect();
            check_schur_horn(&raw, &diag);
        }
    }
}
