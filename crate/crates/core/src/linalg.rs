//! Numeric kernels: Hermitian eigendecomposition, Haar-random unitaries,
//! Ginibre ensembles and isometry completion.
//!
//! Matrix storage everywhere else in the crate is `ndarray`; nalgebra is used
//! only behind these functions for its complex eigen- and QR decompositions.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::C64;

fn to_na(m: &Array2<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn from_na(m: &DMatrix<C64>) -> Array2<C64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigendecomposition of a Hermitian matrix: real eigenvalues and a matrix
/// whose columns are the corresponding orthonormal eigenvectors.
pub fn eigh(m: &Array2<C64>) -> (Vec<f64>, Array2<C64>) {
    assert_eq!(m.nrows(), m.ncols(), "eigh needs a square matrix");
    let eig = to_na(m).symmetric_eigen();
    let vals = eig.eigenvalues.iter().copied().collect();
    (vals, from_na(&eig.eigenvectors))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &Array2<C64>) -> f64 {
    eigh(m).0.into_iter().fold(f64::INFINITY, f64::min)
}

/// Complex Ginibre matrix: i.i.d. standard complex Gaussian entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<C64> {
    Array2::from_shape_fn((rows, cols), |_| {
        C64::new(
            rng.sample::<f64, _>(StandardNormal) / 2f64.sqrt(),
            rng.sample::<f64, _>(StandardNormal) / 2f64.sqrt(),
        )
    })
}

/// Orthonormalize the columns of a tall matrix (thin QR with the phase of
/// R's diagonal absorbed, which makes the distribution Haar for Ginibre
/// input). Returns a `rows x cols` isometry.
pub fn orthonormalize(g: &Array2<C64>) -> Array2<C64> {
    let (rows, cols) = g.dim();
    assert!(rows >= cols, "need at least as many rows as columns");
    let qr = to_na(g).qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = Array2::<C64>::zeros((rows, cols));
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..rows {
            out[[i, j]] = q[(i, j)] * phase;
        }
    }
    out
}

/// Haar-random unitary of the given dimension.
pub fn haar_unitary(dim: usize, rng: &mut impl Rng) -> Array2<C64> {
    orthonormalize(&ginibre(dim, dim, rng))
}

/// Random full-rank density matrix from the Ginibre ensemble: G G^dag / tr.
pub fn random_density(dim: usize, rng: &mut impl Rng) -> Array2<C64> {
    let g = ginibre(dim, dim, rng);
    let gd = g.t().mapv(|z| z.conj());
    let rho = g.dot(&gd);
    let tr: C64 = rho.diag().sum();
    rho.mapv(|z| z / tr.re)
}

/// Haar-random unit vector of the given dimension.
pub fn random_state(dim: usize, rng: &mut impl Rng) -> ndarray::Array1<C64> {
    let g = ginibre(dim, 1, rng);
    let norm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ndarray::Array1::from_iter(g.iter().map(|z| z / norm))
}

/// Extend an isometry (orthonormal columns) to a full unitary by completing
/// its column space with Gram-Schmidt over the standard basis.
pub fn complete_unitary(isometry: &Array2<C64>) -> Array2<C64> {
    let (rows, cols) = isometry.dim();
    assert!(cols <= rows);
    let mut basis: Vec<Vec<C64>> = (0..cols).map(|j| isometry.column(j).to_vec()).collect();
    let mut e = 0usize;
    while basis.len() < rows {
        assert!(e < rows, "standard basis exhausted before completion");
        let mut v = vec![C64::new(0.0, 0.0); rows];
        v[e] = C64::new(1.0, 0.0);
        e += 1;
        // two Gram-Schmidt passes for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let overlap: C64 = b.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum();
                for (bi, vi) in b.iter().zip(v.iter_mut()) {
                    *vi -= overlap * bi;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    let mut out = Array2::<C64>::zeros((rows, rows));
    for (j, b) in basis.iter().enumerate() {
        for (i, x) in b.iter().enumerate() {
            out[[i, j]] = *x;
        }
    }
    out
}

/// Conjugate transpose.
pub fn adjoint(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Largest absolute entry of the difference of two matrices.
pub fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Deviation of a matrix from the identity, as the largest absolute entry.
pub fn deviation_from_identity(m: &Array2<C64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let expect = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max((m[[i, j]] - expect).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::master_rng;

    #[test]
    fn eigh_reconstructs() {
        let mut rng = master_rng(3);
        let g = ginibre(5, 5, &mut rng);
        let h = &g + &adjoint(&g);
        let (vals, vecs) = eigh(&h);
        let mut recon = Array2::<C64>::zeros((5, 5));
        for (k, &v) in vals.iter().enumerate() {
            for i in 0..5 {
                for j in 0..5 {
                    recon[[i, j]] += vecs[[i, k]] * vecs[[j, k]].conj() * C64::new(v, 0.0);
                }
            }
        }
        assert!(max_abs_diff(&recon, &h) < 1e-10);
    }

    #[test]
    fn haar_unitary_is_unitary_and_seeded() {
        let u = haar_unitary(4, &mut master_rng(5));
        let udu = adjoint(&u).dot(&u);
        assert!(deviation_from_identity(&udu) < 1e-12);
        let v = haar_unitary(4, &mut master_rng(5));
        assert!(max_abs_diff(&u, &v) == 0.0);
    }

    #[test]
    fn completion_is_unitary_and_keeps_columns() {
        let mut rng = master_rng(9);
        let iso = orthonormalize(&ginibre(6, 2, &mut rng));
        let u = complete_unitary(&iso);
        assert!(deviation_from_identity(&adjoint(&u).dot(&u)) < 1e-10);
        for j in 0..2 {
            for i in 0..6 {
                assert!((u[[i, j]] - iso[[i, j]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn random_density_is_unit_trace_psd() {
        let rho = random_density(4, &mut master_rng(1));
        let tr: C64 = rho.diag().sum();
        assert!((tr.re - 1.0).abs() < 1e-12);
        assert!(min_eigenvalue(&rho) > -1e-12);
    }
}
