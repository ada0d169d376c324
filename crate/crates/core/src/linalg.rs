//! Small dense complex linear-algebra helpers shared by the physics modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{CMatrix, CVector, C64};

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `max |h - h^dagger|` over all entries.
pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    let n = h.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `max |U^dagger U - 1|`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for i in 0..prod.nrows() {
        for j in 0..prod.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// Columns of the returned matrix are the eigenvectors (no gauge fixing).
pub fn eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `exp(-i h dt)` for Hermitian `h`, via the spectral decomposition.
pub fn expm_hermitian(h: &CMatrix, dt: f64) -> CMatrix {
    let (values, vectors) = eigh(h);
    spectral_function(&values, &vectors, |e| C64::from_polar(1.0, -e * dt))
}

/// `V f(E) V^dagger`.
pub fn spectral_function<F: Fn(f64) -> C64>(values: &[f64], vectors: &CMatrix, f: F) -> CMatrix {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (c, &e) in values.iter().enumerate() {
        let w = f(e);
        for r in 0..n {
            scaled[(r, c)] *= w;
        }
    }
    scaled * vectors.adjoint()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Matrix unit `E_{ij}` of size `n`.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> CMatrix {
    let mut e = CMatrix::zeros(n, n);
    e[(i, j)] = C64::new(1.0, 0.0);
    e
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &CMatrix) -> f64 {
    eigh(h).0[0]
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    let gram = m.adjoint() * m;
    let (values, _) = eigh(&gram);
    values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    let re = DMatrix::from_row_slice(rows, cols, data);
    re.map(|x| C64::new(x, 0.0))
}

pub fn normalized(v: &CVector) -> CVector {
    let n = v.norm();
    v / C64::new(n, 0.0)
}

pub fn column(m: &CMatrix, c: usize) -> CVector {
    DVector::from_iterator(m.nrows(), m.column(c).iter().copied())
}
