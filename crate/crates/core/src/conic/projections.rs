use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::signal::Autocorrelation;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0).ok_or(Error::NonFinite)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(eig)
}

/// Frobenius-nearest PSD matrix: clamp negative eigenvalues to zero.
pub fn project_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    project_psd_with_spectrum(m).map(|(p, _)| p)
}

/// PSD projection that also reports `lambda_2 / lambda_1` of the
/// clamped spectrum (0 when the projection is zero).
pub fn project_psd_with_spectrum(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = m.nrows();
    let eig = eigen(m)?;
    let (mut top, mut second) = (0.0f64, 0.0f64);
    let kept: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    for &i in &kept {
        let l = eig.eigenvalues[i];
        if l > top {
            second = top;
            top = l;
        } else if l > second {
            second = l;
        }
    }
    // P = B B^T with B = Q_+ diag(sqrt(lambda_+))
    let mut b = DMatrix::<f64>::zeros(n, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        for r in 0..n {
            b[(r, c)] = eig.eigenvectors[(r, i)] * s;
        }
    }
    let mut p = &b * b.transpose();
    symmetrize_in_place(&mut p);
    let ratio = if top > 0.0 { second / top } else { 0.0 };
    Ok((p, ratio))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigen(m)?.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Frobenius-nearest matrix whose circular diagonals sum to `a`:
/// `sum_j X[j, (j+i) mod n] = a[i]` for every offset `i`. The circular
/// diagonals partition the matrix, so each gets an independent uniform
/// correction.
pub fn project_diagonal_sums(m: &DMatrix<f64>, a: &Autocorrelation) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(Error::InvalidArgument("matrix must be square".into()));
    }
    if a.n() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: a.n(),
        });
    }
    let mut out = m.clone();
    project_diagonal_sums_in_place(&mut out, &a.a);
    Ok(out)
}

pub(crate) fn project_diagonal_sums_in_place(m: &mut DMatrix<f64>, a: &[f64]) {
    let n = m.nrows();
    for i in 0..n {
        let sum: f64 = (0..n).map(|j| m[(j, (j + i) % n)]).sum();
        let corr = (a[i] - sum) / n as f64;
        for j in 0..n {
            m[(j, (j + i) % n)] += corr;
        }
    }
}

/// `sum_j X[j, (j+i) mod n]` for every offset.
pub(crate) fn diagonal_sums(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    (0..n)
        .map(|i| (0..n).map(|j| m[(j, (j + i) % n)]).sum())
        .collect()
}

/// Entrywise `sign(M_ij) max(|M_ij| - T_ij, 0)`.
///
/// Panics if the shapes differ.
pub fn soft_threshold(m: &DMatrix<f64>, t: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(m.shape(), t.shape(), "soft_threshold shape mismatch");
    m.zip_map(t, shrink)
}

#[inline]
pub(crate) fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Linearization weight of `log det(X + eps I)` at `X`: `(X + eps I)^-1`.
pub fn logdet_reweight(x: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let n = x.nrows();
    let shifted = symmetrize(x) + DMatrix::<f64>::identity(n, n) * epsilon;
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("X + eps I is not positive definite".into()))?;
    let mut w = chol.inverse();
    symmetrize_in_place(&mut w);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::autocorrelation_of;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        symmetrize(&m)
    }

    #[test]
    fn psd_projection_by_hand() {
        let p = project_psd(&dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        assert!((p - dmatrix![0.5, 0.5; 0.5, 0.5]).norm() < 1e-14);
        let id = DMatrix::<f64>::identity(4, 4);
        assert!((project_psd(&id).unwrap() - &id).norm() < 1e-14);
    }

    #[test]
    fn psd_projection_rejects_non_finite() {
        let m = dmatrix![f64::NAN, 0.0; 0.0, 1.0];
        assert_eq!(project_psd(&m), Err(Error::NonFinite));
    }

    #[test]
    fn psd_projection_idempotent_and_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_symmetric(8, &mut rng);
            let b = random_symmetric(8, &mut rng);
            let pa = project_psd(&a).unwrap();
            let pb = project_psd(&b).unwrap();
            assert!((project_psd(&pa).unwrap() - &pa).norm() < 1e-12);
            assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-12);
            assert!(min_eigenvalue(&pa).unwrap() > -1e-12);
        }
    }

    #[test]
    fn eigen_ratio_of_rank_one_is_zero() {
        let x = nalgebra::DVector::from_vec(vec![1.0, 0.0, 2.0]);
        let (_, r) = project_psd_with_spectrum(&(&x * x.transpose())).unwrap();
        assert!(r < 1e-12);
        let (_, r) = project_psd_with_spectrum(&DMatrix::<f64>::zeros(3, 3)).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn diagonal_projection_by_hand() {
        let a = Autocorrelation::new(vec![2.0, 2.0]);
        let p = project_diagonal_sums(&DMatrix::zeros(2, 2), &a).unwrap();
        assert!((p - dmatrix![1.0, 1.0; 1.0, 1.0]).norm() < 1e-15);
    }

    #[test]
    fn diagonal_projection_feasible_is_fixed_point() {
        let x = nalgebra::DVector::from_vec(vec![0.3, 0.0, 0.9, 0.4]);
        let xx = &x * x.transpose();
        let a = autocorrelation_of(x.as_slice());
        let p = project_diagonal_sums(&xx, &a).unwrap();
        assert!((p - xx).norm() < 1e-14);
    }

    #[test]
    fn diagonal_projection_residual_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 2, 3, 7, 16, 33, 64] {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = autocorrelation_of(&x);
            let m = random_symmetric(n, &mut rng);
            let p = project_diagonal_sums(&m, &a).unwrap();
            for (s, t) in diagonal_sums(&p).iter().zip(&a.a) {
                assert!((s - t).abs() <= 1e-12, "n={n}");
            }
            assert!((&p - p.transpose()).norm() < 1e-12);
            let pp = project_diagonal_sums(&p, &a).unwrap();
            assert!((pp - &p).norm() < 1e-12);
        }
        assert!(project_diagonal_sums(&DMatrix::zeros(3, 3), &Autocorrelation::new(vec![1.0])).is_err());
    }

    #[test]
    fn soft_threshold_cases() {
        let t = DMatrix::from_element(1, 3, 1.0);
        let m = DMatrix::from_row_slice(1, 3, &[3.0, -0.5, -4.0]);
        assert_eq!(soft_threshold(&m, &t), DMatrix::from_row_slice(1, 3, &[2.0, 0.0, -3.0]));
        assert_eq!(soft_threshold(&m, &DMatrix::zeros(1, 3)), m);
    }

    #[test]
    fn logdet_weights() {
        let w = logdet_reweight(&DMatrix::zeros(3, 3), 1.0).unwrap();
        assert!((w - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
        let w = logdet_reweight(&dmatrix![1.0, 0.0; 0.0, 0.0], 1.0).unwrap();
        assert!((w - dmatrix![0.5, 0.0; 0.0, 1.0]).norm() < 1e-15);
        assert!(logdet_reweight(&DMatrix::zeros(2, 2), 0.0).is_err());
    }
}
