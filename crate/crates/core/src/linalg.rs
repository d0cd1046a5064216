//! Dense complex linear algebra for operators on at most six qubits.
//!
//! Everything here works on [`ComplexMatrix`], a row-major square matrix of
//! `Complex64`. Sizes never exceed 64×64, so plain loops are fast enough and
//! no BLAS backend is involved.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Default entrywise tolerance for Hermiticity and structural predicates.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Largest supported matrix dimension (six qubits).
pub const MAX_DIM: usize = 64;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("invalid Pauli label {0:?} (expected one of I, X, Y, Z)")]
    InvalidPauli(String),
    #[error("matrix is not Hermitian: max |M - M^dagger| = {deviation:e}")]
    NotHermitian { deviation: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("expected {expected} entries, got {got}")]
    BadEntryCount { expected: usize, got: usize },
    #[error("empty Pauli string list")]
    EmptyPauliSum,
}

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_entries(dim: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if dim == 0 || data.len() != dim * dim {
            return Err(LinalgError::BadEntryCount {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let data: Vec<C64> = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| C64::new(x, 0.0)))
            .collect();
        Self::from_entries(dim, data)
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of qubits, i.e. log2 of the dimension (floor for non powers of two).
    pub fn qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Tr[self · rhs] without forming the product.
    pub fn trace_product(&self, rhs: &Self) -> C64 {
        assert_eq!(self.dim, rhs.dim, "trace_product dimension mismatch");
        let n = self.dim;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.data[i * n + k] * rhs.data[k * n + i];
            }
        }
        acc
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "max_abs_diff dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `M - M†`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    /// Entries off the diagonal and antidiagonal, largest modulus.
    pub fn off_cross_residue(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if j != i && j != n - 1 - i {
                    worst = worst.max(self[(i, j)].norm());
                }
            }
        }
        worst
    }

    /// Entries off the antidiagonal, largest modulus.
    pub fn off_antidiagonal_residue(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if j != n - 1 - i {
                    worst = worst.max(self[(i, j)].norm());
                }
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "sub dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> ComplexMatrix {
        let o = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let data = match self {
            Pauli::I => vec![one, o, o, one],
            Pauli::X => vec![o, one, one, o],
            Pauli::Y => vec![o, -i, i, o],
            Pauli::Z => vec![one, o, o, -one],
        };
        ComplexMatrix { dim: 2, data }
    }
}

impl FromStr for Pauli {
    type Err = LinalgError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" => Ok(Pauli::I),
            "X" => Ok(Pauli::X),
            "Y" => Ok(Pauli::Y),
            "Z" => Ok(Pauli::Z),
            other => Err(LinalgError::InvalidPauli(other.to_string())),
        }
    }
}

/// The 2×2 Pauli matrix for a label `I`, `X`, `Y` or `Z`.
pub fn pauli(label: &str) -> Result<ComplexMatrix, LinalgError> {
    Ok(label.parse::<Pauli>()?.matrix())
}

/// A real-weighted tensor product of Pauli matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    pub labels: Vec<Pauli>,
    pub coefficient: f64,
}

impl PauliString {
    pub fn new(labels: Vec<Pauli>, coefficient: f64) -> Self {
        Self {
            labels,
            coefficient,
        }
    }

    /// Parses compact notation such as `"XYZI"`.
    pub fn parse(labels: &str, coefficient: f64) -> Result<Self, LinalgError> {
        let labels = labels
            .chars()
            .map(|c| c.to_string().parse::<Pauli>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(labels, coefficient))
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        let factors: Vec<ComplexMatrix> = self.labels.iter().map(|p| p.matrix()).collect();
        kron_all(&factors).scale_real(self.coefficient)
    }
}

/// Σ coefficient · (⊗ labels). All strings must have the same length.
pub fn pauli_sum(terms: &[PauliString]) -> Result<ComplexMatrix, LinalgError> {
    let first = terms.first().ok_or(LinalgError::EmptyPauliSum)?;
    let len = first.labels.len();
    let mut acc = ComplexMatrix::zeros(1 << len);
    for t in terms {
        if t.labels.len() != len {
            return Err(LinalgError::DimensionMismatch {
                left: len,
                right: t.labels.len(),
            });
        }
        acc = &acc + &t.to_matrix();
    }
    Ok(acc)
}

/// Kronecker product: `out[(i·dB+k),(j·dB+l)] = A[i,j]·B[k,l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (da, db) = (a.dim, b.dim);
    let mut out = ComplexMatrix::zeros(da * db);
    for i in 0..da {
        for j in 0..da {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..db {
                for l in 0..db {
                    out[(i * db + k, j * db + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Left-to-right Kronecker product of a list; the empty list gives the 1×1 identity.
pub fn kron_all(factors: &[ComplexMatrix]) -> ComplexMatrix {
    factors
        .iter()
        .fold(ComplexMatrix::identity(1), |acc, f| kron(&acc, f))
}

/// All eigenvalues of a Hermitian matrix in ascending order, by cyclic
/// complex Jacobi rotations.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>, LinalgError> {
    Ok(jacobi(m, false)?.0)
}

/// Eigenvalues (ascending) and the matching eigenvectors as matrix columns.
pub fn hermitian_eigh(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), LinalgError> {
    let (values, vectors) = jacobi(m, true)?;
    Ok((values, vectors.expect("vectors requested")))
}

fn jacobi(
    m: &ComplexMatrix,
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<ComplexMatrix>), LinalgError> {
    let deviation = m.hermiticity_deviation();
    if deviation > STRUCTURE_TOL {
        return Err(LinalgError::NotHermitian { deviation });
    }
    let n = m.dim;
    let mut a = m.clone();
    // Symmetrize away the sub-tolerance noise so rotations stay exact.
    for i in 0..n {
        a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
        for j in i + 1..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
    let mut v = want_vectors.then(|| ComplexMatrix::identity(n));
    let threshold = JACOBI_TOL * a.frobenius_norm().max(1.0);

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) < threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, v.as_mut(), p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = v.map(|v| {
        let mut sorted = ComplexMatrix::zeros(n);
        for (col, &src) in order.iter().enumerate() {
            for row in 0..n {
                sorted[(row, col)] = v[(row, src)];
            }
        }
        sorted
    });
    Ok((values, vectors))
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// One Jacobi step zeroing the (p, q) entry: a phase rotation makes the pivot
/// real, then a real Givens rotation annihilates it.
fn rotate(a: &mut ComplexMatrix, v: Option<&mut ComplexMatrix>, p: usize, q: usize) {
    let b = a[(p, q)];
    let mag = b.norm();
    if mag < 1e-300 {
        return;
    }
    let phase = b / mag;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta == 0.0 {
        1.0
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // W = diag(1, conj(phase)) · [[c, s], [-s, c]] on the (p, q) plane.
    let w_pp = C64::new(c, 0.0);
    let w_pq = C64::new(s, 0.0);
    let w_qp = phase.conj() * (-s);
    let w_qq = phase.conj() * c;

    let n = a.dim;
    let apply_right = |m: &mut ComplexMatrix| {
        for k in 0..n {
            let mkp = m[(k, p)];
            let mkq = m[(k, q)];
            m[(k, p)] = mkp * w_pp + mkq * w_qp;
            m[(k, q)] = mkp * w_pq + mkq * w_qq;
        }
    };
    apply_right(a);
    if let Some(v) = v {
        apply_right(v);
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = w_pp.conj() * apk + w_qp.conj() * aqk;
        a[(q, k)] = w_pq.conj() * apk + w_qq.conj() * aqk;
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
}

/// Eigenvalues of `[[a, b], [conj(b), a]]`, returned as `(a - |b|, a + |b|)`.
pub fn eig2x2_hermitian(a: f64, b: C64) -> (f64, f64) {
    let r = b.norm();
    (a - r, a + r)
}

/// A 2×2 Hermitian block `[[a, b], [conj(b), d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block2 {
    pub a: f64,
    pub b: C64,
    pub d: f64,
}

impl Block2 {
    /// Ascending eigenvalue pair.
    pub fn eigenvalues(&self) -> (f64, f64) {
        if self.a == self.d {
            return eig2x2_hermitian(self.a, self.b);
        }
        let mean = 0.5 * (self.a + self.d);
        let half = 0.5 * (self.a - self.d);
        let r = (half * half + self.b.norm_sqr()).sqrt();
        (mean - r, mean + r)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().0
    }

    /// Sylvester test: leading minor and determinant non-negative.
    pub fn sylvester_psd(&self, tol: f64) -> bool {
        self.a >= -tol && self.a * self.d - self.b.norm_sqr() >= -tol
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b.norm_sqr()
    }
}

/// The exchange matrix J with ones on the antidiagonal.
pub fn exchange_matrix(dim: usize) -> ComplexMatrix {
    let mut j = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        j[(i, dim - 1 - i)] = C64::new(1.0, 0.0);
    }
    j
}

/// `M == J Mᵀ J` within `tol`, entrywise.
pub fn is_persymmetric(m: &ComplexMatrix, tol: f64) -> bool {
    persymmetry_deviation(m) <= tol
}

/// max |M - J Mᵀ J|; (J Mᵀ J)[i,j] = M[n-1-j, n-1-i].
pub fn persymmetry_deviation(m: &ComplexMatrix) -> f64 {
    let n = m.dim;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(n - 1 - j, n - 1 - i)]).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn pauli_definitions() {
        assert_eq!(pauli("I").unwrap(), ComplexMatrix::identity(2));
        let x = pauli("X").unwrap();
        assert_eq!(x[(0, 1)], c(1.0));
        assert_eq!(x[(1, 0)], c(1.0));
        assert_eq!(x[(0, 0)], c(0.0));
        let y = pauli("Y").unwrap();
        assert_eq!(&y * &y, ComplexMatrix::identity(2));
        assert!(matches!(pauli("W"), Err(LinalgError::InvalidPauli(_))));
        for label in ["X", "Y", "Z"] {
            let p = pauli(label).unwrap();
            assert!(p.is_hermitian(0.0));
            assert_eq!(p.trace(), c(0.0));
            assert_eq!(&p * &p.adjoint(), ComplexMatrix::identity(2));
        }
    }

    #[test]
    fn kron_examples() {
        let i2 = ComplexMatrix::identity(2);
        let x = Pauli::X.matrix();
        let ix = kron(&i2, &x);
        assert_eq!(ix.dim(), 4);
        assert_eq!(ix[(0, 1)], c(1.0));
        assert_eq!(ix[(2, 3)], c(1.0));
        assert_eq!(ix[(0, 3)], c(0.0));

        let xx = kron(&x, &x);
        for i in 0..4 {
            for j in 0..4 {
                let expect = if j == 3 - i { 1.0 } else { 0.0 };
                assert_eq!(xx[(i, j)], c(expect));
            }
        }
        let zz = kron(&Pauli::Z.matrix(), &Pauli::Z.matrix());
        let expect = ComplexMatrix::diagonal(&[c(1.0), c(-1.0), c(-1.0), c(1.0)]);
        assert_eq!(zz, expect);
    }

    #[test]
    fn kron_is_associative_on_integer_entries() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, -1.0]]).unwrap();
        let b = Pauli::Y.matrix();
        let cm = ComplexMatrix::from_real_rows(&[&[0.0, 5.0], &[-2.0, 7.0]]).unwrap();
        assert_eq!(kron(&kron(&a, &b), &cm), kron(&a, &kron(&b, &cm)));
    }

    #[test]
    fn eigenvalues_of_z() {
        let e = hermitian_eigenvalues(&Pauli::Z.matrix()).unwrap();
        assert_eq!(e, vec![-1.0, 1.0]);
    }

    #[test]
    fn eigenvalues_reject_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(matches!(
            hermitian_eigenvalues(&m),
            Err(LinalgError::NotHermitian { .. })
        ));
    }

    #[test]
    fn eig2x2_examples() {
        assert_eq!(eig2x2_hermitian(0.0, c(0.0)), (0.0, 0.0));
        assert_eq!(eig2x2_hermitian(1.0, C64::new(0.0, 1.0)), (0.0, 2.0));
    }

    #[test]
    fn exchange_matrix_is_tensor_power_of_x() {
        let x = Pauli::X.matrix();
        assert_eq!(exchange_matrix(2), x);
        assert_eq!(exchange_matrix(4), kron(&x, &x));
        assert_eq!(exchange_matrix(8), kron(&x, &kron(&x, &x)));
        let j = exchange_matrix(8);
        assert_eq!(&j * &j, ComplexMatrix::identity(8));
    }

    #[test]
    fn persymmetry_examples() {
        let pal = ComplexMatrix::diagonal(&[c(1.0), c(2.0), c(2.0), c(1.0)]);
        assert!(is_persymmetric(&pal, STRUCTURE_TOL));
        let not = ComplexMatrix::diagonal(&[c(1.0), c(0.0), c(0.0), c(0.0)]);
        assert!(!is_persymmetric(&not, STRUCTURE_TOL));
    }

    #[test]
    fn pauli_sum_rejects_ragged_strings() {
        let terms = vec![
            PauliString::parse("XX", 1.0).unwrap(),
            PauliString::parse("X", 1.0).unwrap(),
        ];
        assert!(pauli_sum(&terms).is_err());
        assert!(matches!(pauli_sum(&[]), Err(LinalgError::EmptyPauliSum)));
    }

    #[test]
    fn real_pauli_sums_are_hermitian() {
        let terms = vec![
            PauliString::parse("XYZ", 0.3).unwrap(),
            PauliString::parse("YYI", -1.7).unwrap(),
            PauliString::parse("ZIX", 2.0).unwrap(),
        ];
        assert!(pauli_sum(&terms).unwrap().is_hermitian(0.0));
    }

    #[test]
    fn block2_general_eigenvalues() {
        let blk = Block2 {
            a: 3.0,
            b: C64::new(0.0, 0.0),
            d: -1.0,
        };
        assert_eq!(blk.eigenvalues(), (-1.0, 3.0));
        assert!(!blk.sylvester_psd(0.0));
    }
}
