//! Small dense helpers for qubit and qubit-pair matrices.
//!
//! A 2×2 Hermitian matrix is frequently carried in its Bloch form
//! `X = x0·I + x1·σx + x2·σy + x3·σz`, stored as `[x0, x1, x2, x3]`.
//! Its eigenvalues are `x0 ± |(x1, x2, x3)|` and `Tr(XY) = 2 x·y`.

use nalgebra::{Complex, Matrix2, Matrix3, Matrix4, Vector3};

pub type C64 = Complex<f64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

/// Bloch coordinates of a 2×2 Hermitian matrix.
pub type Bloch = [f64; 4];

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Pauli basis: σ0 = I, σ1 = X, σ2 = Y, σ3 = Z.
pub fn pauli(i: usize) -> Mat2 {
    match i {
        0 => Mat2::new(ONE, ZERO, ZERO, ONE),
        1 => Mat2::new(ZERO, ONE, ONE, ZERO),
        2 => Mat2::new(ZERO, -I, I, ZERO),
        3 => Mat2::new(ONE, ZERO, ZERO, -ONE),
        _ => panic!("pauli index {i} out of range"),
    }
}

/// Kronecker product `a ⊗ b` with `a` acting on the first (Alice) qubit.
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// Largest elementwise modulus of `m − m†`.
pub fn hermitian_deviation4(m: &Mat4) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_deviation2(m: &Mat2) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Ascending eigenvalues of a Hermitian 4×4 matrix.
pub fn eigenvalues4(m: &Mat4) -> [f64; 4] {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let ev = h.symmetric_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2], ev[3]];
    out.sort_by(f64::total_cmp);
    out
}

pub fn min_eigenvalue4(m: &Mat4) -> f64 {
    eigenvalues4(m)[0]
}

/// Real symmetric 3×3 eigenvalues, ascending.
pub fn eigenvalues3(m: &Matrix3<f64>) -> [f64; 3] {
    let sym = (m + m.transpose()) * 0.5;
    let ev = sym.symmetric_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2]];
    out.sort_by(f64::total_cmp);
    out
}

pub fn to_bloch(m: &Mat2) -> Bloch {
    let x0 = 0.5 * (m[(0, 0)].re + m[(1, 1)].re);
    let x1 = 0.5 * (m[(0, 1)].re + m[(1, 0)].re);
    let x2 = 0.5 * (m[(1, 0)].im - m[(0, 1)].im);
    let x3 = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
    [x0, x1, x2, x3]
}

pub fn from_bloch(x: &Bloch) -> Mat2 {
    Mat2::new(
        C64::new(x[0] + x[3], 0.0),
        C64::new(x[1], -x[2]),
        C64::new(x[1], x[2]),
        C64::new(x[0] - x[3], 0.0),
    )
}

#[inline]
pub fn bloch_radius(x: &Bloch) -> f64 {
    (x[1] * x[1] + x[2] * x[2] + x[3] * x[3]).sqrt()
}

/// Smallest eigenvalue of the Hermitian matrix with Bloch coordinates `x`.
#[inline]
pub fn bloch_min_eigenvalue(x: &Bloch) -> f64 {
    x[0] - bloch_radius(x)
}

pub fn min_eigenvalue2(m: &Mat2) -> f64 {
    bloch_min_eigenvalue(&to_bloch(m))
}

/// Applies a scalar function to a Hermitian 2×2 matrix through its spectrum.
pub fn hermitian_fn2(m: &Mat2, f: impl Fn(f64) -> f64) -> Mat2 {
    let x = to_bloch(m);
    let r = bloch_radius(&x);
    if r < 1e-300 {
        return from_bloch(&[f(x[0]), 0.0, 0.0, 0.0]);
    }
    let hi = f(x[0] + r);
    let lo = f(x[0] - r);
    let s = 0.5 * (hi - lo) / r;
    from_bloch(&[0.5 * (hi + lo), s * x[1], s * x[2], s * x[3]])
}

pub fn trace4(m: &Mat4) -> C64 {
    m[(0, 0)] + m[(1, 1)] + m[(2, 2)] + m[(3, 3)]
}

pub fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

pub fn max_abs_diff4(a: &Mat4, b: &Mat4) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff2(a: &Mat2, b: &Mat2) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) fn real_matrix4_max_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    (a - b).iter().map(|v| v.abs()).fold(0.0, f64::max)
}
