//! Dense complex linear algebra for the 2-, 4- and 16-dimensional objects used
//! throughout the crate.
//!
//! Single-qubit basis order is `(|e>, |g>)`, so `sigma_z = diag(+1, -1)` and
//! the lowering operator is `|g><e|`. Two-qubit objects are always ordered
//! probe ⊗ ancilla.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense complex matrix. Indexing is bounds-checked by `nalgebra` and panics
/// on out-of-range access.
pub type ComplexMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Drift from Hermiticity that is silently symmetrized away.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn zeros(n: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(n, n)
}

pub fn from_real_rows(n: usize, rows: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_row_iterator(n, n, rows.iter().map(|&x| C64::new(x, 0.0)))
}

pub fn diag(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    let mut m = zeros(n);
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = C64::new(v, 0.0);
    }
    m
}

/// Single-qubit operators.
pub mod pauli {
    use super::*;

    pub fn id() -> ComplexMatrix {
        identity(2)
    }

    pub fn x() -> ComplexMatrix {
        from_real_rows(2, &[0.0, 1.0, 1.0, 0.0])
    }

    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
    }

    pub fn z() -> ComplexMatrix {
        from_real_rows(2, &[1.0, 0.0, 0.0, -1.0])
    }

    /// `|g><e|`.
    pub fn lowering() -> ComplexMatrix {
        from_real_rows(2, &[0.0, 0.0, 1.0, 0.0])
    }

    /// `|e><g|`.
    pub fn raising() -> ComplexMatrix {
        from_real_rows(2, &[0.0, 1.0, 0.0, 0.0])
    }

    /// `[I, X, Y, Z]`, the index order used by the Pauli-basis representation.
    pub fn all() -> [ComplexMatrix; 4] {
        [id(), x(), y(), z()]
    }
}

/// Kronecker product; `(a ⊗ b)[i*q + k, j*r + l] = a[i, j] * b[k, l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn trace(m: &ComplexMatrix) -> C64 {
    m.trace()
}

/// Largest elementwise modulus.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest elementwise deviation between `m` and its conjugate transpose.
pub fn hermiticity_drift(m: &ComplexMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Neumaier summation.
pub fn compensated_sum(terms: &[f64]) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for &x in terms {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + carry
}

/// `x y` as an unevaluated sum `hi + lo`.
pub fn exact_product(x: f64, y: f64) -> (f64, f64) {
    let hi = x * y;
    (hi, x.mul_add(y, -hi))
}

/// `a d - |b|^2` of a Hermitian `[[a, b], [b*, d]]`, accurate even when
/// the matrix is close to rank one.
pub fn qubit_determinant(m: &ComplexMatrix) -> f64 {
    let b = m[(0, 1)];
    let (p1, e1) = exact_product(m[(0, 0)].re, m[(1, 1)].re);
    let (p2, e2) = exact_product(b.re, b.re);
    let (p3, e3) = exact_product(b.im, b.im);
    compensated_sum(&[p1, -p2, -p3, e1, -e2, -e3])
}

/// Symmetrize `m` if its drift from Hermiticity is below `tol * max(1, |m|)`,
/// otherwise reject it.
pub fn hermitize_checked(m: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: "square matrix".into(),
            actual: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let drift = hermiticity_drift(m);
    let scale = max_abs(m).max(1.0);
    if !(drift <= tol * scale) {
        return Err(Error::invalid_state(
            "hermiticity",
            format!("max |A - A^dagger| = {drift:e} exceeds {:e}", tol * scale),
        ));
    }
    Ok(hermitian_part(m))
}

/// Eigen-decomposition of a Hermitian matrix: eigenvalues in ascending order
/// and the matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

/// The one spectral primitive used for trace distances, positivity checks and
/// the symmetric logarithmic derivative.
pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<HermitianEigen> {
    let h = hermitize_checked(m, HERMITIAN_TOL)?;
    Ok(hermitian_eigen_unchecked(h))
}

pub(crate) fn hermitian_eigen_unchecked(h: ComplexMatrix) -> HermitianEigen {
    let n = h.nrows();
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    HermitianEigen { values, vectors }
}

/// Eigenvalues of a general square matrix, via the complex Schur form.
pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<C64>> {
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NumericalInvariant("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Matrix 1-norm (largest absolute column sum).
pub fn norm1<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.clone().abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Degree-13 Padé numerator/denominator coefficients.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Scaled matrices with 1-norm below this are approximated by `r13` to
/// double precision.
const THETA13: f64 = 5.371_920_351_148_152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant; the number of squarings follows from the 1-norm.
pub fn expm<T>(a: &DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm = norm1(a);
    if !norm.is_finite() {
        return DMatrix::from_element(n, n, T::from_real(f64::NAN));
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scale(2f64.powi(-squarings));
    let mut r = pade13(&scaled);
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn pade13<T>(a: &DMatrix<T>) -> DMatrix<T>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let n = a.nrows();
    let b = |k: usize| T::from_real(PADE13[k]);
    let id = DMatrix::<T>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = a * (u_inner + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let v_inner = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8));
    let v = v_inner + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);

    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .unwrap_or_else(|| DMatrix::from_element(n, n, T::from_real(f64::NAN)))
}

/// Column-stacking vectorization: `vec(X)[i + n*j] = X[i, j]`.
pub fn vectorize(m: &ComplexMatrix) -> nalgebra::DVector<C64> {
    // nalgebra storage is column-major, which is exactly column stacking.
    nalgebra::DVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &nalgebra::DVector<C64>, n: usize) -> ComplexMatrix {
    assert_eq!(v.len(), n * n, "vector length must be n^2");
    ComplexMatrix::from_column_slice(n, n, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        let (p, q) = (a.nrows(), a.ncols());
        let (r, s) = (b.nrows(), b.ncols());
        let mut out = ComplexMatrix::zeros(p * r, q * s);
        for i in 0..p {
            for j in 0..q {
                for k in 0..r {
                    for l in 0..s {
                        out[(i * r + k, j * s + l)] = a[(i, j)] * b[(k, l)];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn kron_identity_and_sigma_z() {
        assert_eq!(kron(&pauli::id(), &pauli::id()), identity(4));
        assert_eq!(
            kron(&pauli::z(), &pauli::id()),
            diag(&[1.0, 1.0, -1.0, -1.0])
        );
    }

    #[test]
    fn kron_xx_is_antidiagonal() {
        let expected = brute_kron(&pauli::x(), &pauli::x());
        let got = kron(&pauli::x(), &pauli::x());
        assert_eq!(got, expected);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i + j == 3 { ONE } else { ZERO };
                assert_eq!(got[(i, j)], want);
            }
        }
    }

    #[test]
    fn kron_matches_brute_force_on_mixed_shapes() {
        let a = ComplexMatrix::from_fn(2, 3, |i, j| C64::new(i as f64 + 0.5, j as f64 - 1.0));
        let b = ComplexMatrix::from_fn(3, 2, |i, j| C64::new(j as f64 * 0.25, i as f64));
        assert_eq!(kron(&a, &b), brute_kron(&a, &b));
    }

    #[test]
    fn paulis_satisfy_the_algebra() {
        let [id, x, y, z] = pauli::all();
        assert!(max_abs(&(&x * &y - &z * I)) < 1e-15);
        assert!(max_abs(&(&x * &x - &id)) < 1e-15);
        // sigma_- = (X - iY)/2 = |g><e|
        let lowering = (&x - &y * I).scale(0.5);
        assert!(max_abs(&(lowering - pauli::lowering())) < 1e-15);
        assert_eq!(pauli::raising(), pauli::lowering().adjoint());
    }

    #[test]
    fn hermitize_rejects_large_drift() {
        let mut m = pauli::x();
        m[(0, 1)] += C64::new(1e-12, 0.0);
        assert!(hermitize_checked(&m, HERMITIAN_TOL).is_ok());
        m[(0, 1)] += C64::new(1e-6, 0.0);
        assert!(matches!(
            hermitize_checked(&m, HERMITIAN_TOL),
            Err(Error::InvalidState {
                invariant: "hermiticity",
                ..
            })
        ));
    }

    #[test]
    fn hermitian_eigen_sorted_and_orthonormal() {
        let h = kron(&pauli::x(), &pauli::z()) + kron(&pauli::z(), &pauli::id()).scale(0.3);
        let e = hermitian_eigen(&h).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let v = &e.vectors;
        assert!(max_abs(&(v.adjoint() * v - identity(4))) < 1e-13);
        let rebuilt = v * diag(&e.values) * v.adjoint();
        assert!(max_abs(&(rebuilt - h)) < 1e-13);
    }

    #[test]
    fn expm_of_hermitian_generator_matches_spectral_formula() {
        // exp(-iHt) via eigen-decomposition is an independent route.
        let h = kron(&pauli::x(), &pauli::x()).scale(0.7)
            + kron(&pauli::z(), &pauli::id()).scale(0.5)
            + kron(&pauli::id(), &pauli::y()).scale(-0.2);
        for &t in &[0.01, 1.0, 37.0, 900.0] {
            let e = hermitian_eigen(&h).unwrap();
            let phases: Vec<C64> = e.values.iter().map(|&l| (-I * l * t).exp()).collect();
            let mut d = zeros(4);
            for (k, p) in phases.iter().enumerate() {
                d[(k, k)] = *p;
            }
            let expected = &e.vectors * d * e.vectors.adjoint();
            let got = expm(&(h.clone() * (-I * t)));
            assert!(max_abs(&(got - expected)) < 1e-11 * t.max(1.0), "t = {t}");
        }
    }

    #[test]
    fn expm_small_norm_matches_taylor_series() {
        let a = ComplexMatrix::from_fn(4, 4, |i, j| {
            C64::new(0.05 * (i as f64 - j as f64), 0.02 * (i * j) as f64)
        });
        let mut term = identity(4);
        let mut sum = identity(4);
        for k in 1..30 {
            term = &term * &a / C64::new(k as f64, 0.0);
            sum += &term;
        }
        assert!(max_abs(&(expm(&a) - sum)) < 1e-15);
    }

    #[test]
    fn expm_real_nilpotent_and_zero() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(expm(&z), DMatrix::<f64>::identity(3, 3));
        let mut n = DMatrix::<f64>::zeros(2, 2);
        n[(0, 1)] = 2.5;
        let e = expm(&n);
        assert_eq!(e[(0, 1)], 2.5);
        assert_eq!(e[(0, 0)], 1.0);
    }

    #[test]
    fn vectorize_is_column_stacking() {
        let m = ComplexMatrix::from_fn(2, 2, |i, j| C64::new((i + 2 * j) as f64, 0.0));
        let v = vectorize(&m);
        let want = [0.0, 1.0, 2.0, 3.0];
        for (k, w) in want.iter().enumerate() {
            assert_eq!(v[k].re, *w);
        }
        assert_eq!(unvectorize(&v, 2), m);
    }

    #[test]
    fn eigenvalues_of_triangular() {
        let m = ComplexMatrix::from_row_slice(
            2,
            2,
            &[C64::new(-1.0, 0.5), ONE, ZERO, C64::new(2.0, 0.0)],
        );
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((ev[0] - C64::new(-1.0, 0.5)).norm() < 1e-14);
        assert!((ev[1] - C64::new(2.0, 0.0)).norm() < 1e-14);
    }
}
