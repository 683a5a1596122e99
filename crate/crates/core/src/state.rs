//! Two-qubit state algebra.
//!
//! States are 4×4 density matrices on Alice ⊗ Bob, Alice being the first
//! tensor factor. The real correlation representation is
//! `Θ_ij = Tr(ρ σ_i ⊗ σ_j)` with `ρ = ¼ Σ_ij Θ_ij σ_i ⊗ σ_j`, where row `i`
//! indexes Alice's Pauli operator and column `j` Bob's.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    self, hermitian_deviation2, hermitian_deviation4, kron, pauli, trace4, Mat2, Mat4, C64,
};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
/// Minimum marginal eigenvalue for one-way SLOCC canonicalization.
pub const PURITY_THRESHOLD: f64 = 1e-6;

/// One of the two parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

/// A validated two-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: Mat4) -> Result<Self> {
        let deviation = hermitian_deviation4(&m);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = trace4(&m).re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotUnitTrace { trace });
        }
        let min_eigenvalue = linalg::min_eigenvalue4(&m);
        if min_eigenvalue < -PSD_TOL {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(DensityMatrix(m))
    }

    /// Hermitian-symmetrizes and trace-normalizes before validating.
    pub(crate) fn normalized(m: Mat4) -> Result<Self> {
        let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let tr = trace4(&h).re;
        Self::new(h / C64::new(tr, 0.0))
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat4::identity() * C64::new(0.25, 0.0))
    }

    /// Projector onto a normalized pure state vector.
    pub fn pure(psi: &Vector4<C64>) -> Result<Self> {
        let norm = psi.norm();
        let v = psi / C64::new(norm, 0.0);
        Self::new(v * v.adjoint())
    }

    pub fn product(a: &LocalState, b: &LocalState) -> Self {
        DensityMatrix(kron(a.matrix(), b.matrix()))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        linalg::eigenvalues4(&self.0)
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    /// Convex combination `w·self + (1−w)·other`.
    pub fn mix(&self, other: &DensityMatrix, w: f64) -> Result<Self> {
        Self::new(self.0 * C64::new(w, 0.0) + other.0 * C64::new(1.0 - w, 0.0))
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        linalg::max_abs_diff4(&self.0, &other.0)
    }
}

/// A validated single-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState(Mat2);

impl LocalState {
    pub fn new(m: Mat2) -> Result<Self> {
        let deviation = hermitian_deviation2(&m);
        if deviation > PSD_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = m.trace().re;
        if (trace - 1.0).abs() > PSD_TOL {
            return Err(Error::NotUnitTrace { trace });
        }
        let min_eigenvalue = linalg::min_eigenvalue2(&m);
        if min_eigenvalue < -PSD_TOL {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(LocalState(m))
    }

    pub fn from_bloch_vector(r: Vector3<f64>) -> Result<Self> {
        Self::new(linalg::from_bloch(&[0.5, 0.5 * r[0], 0.5 * r[1], 0.5 * r[2]]))
    }

    pub fn maximally_mixed() -> Self {
        LocalState(Mat2::identity() * C64::new(0.5, 0.0))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    /// Bloch vector `r` with `ρ = (I + r·σ)/2`.
    pub fn bloch_vector(&self) -> Vector3<f64> {
        let x = linalg::to_bloch(&self.0);
        Vector3::new(2.0 * x[1], 2.0 * x[2], 2.0 * x[3])
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue2(&self.0)
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let x = linalg::to_bloch(&self.0);
        let r = linalg::bloch_radius(&x);
        [x[0] - r, x[0] + r]
    }
}

/// Real 4×4 correlation matrix Θ with block layout `(1, bᵀ; a, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliRep {
    theta: Matrix4<f64>,
}

impl PauliRep {
    /// Wraps a Θ matrix; Θ00 must be exactly 1.
    pub fn new(theta: Matrix4<f64>) -> Result<Self> {
        if theta[(0, 0)] != 1.0 {
            return Err(Error::ThetaNormalization(theta[(0, 0)]));
        }
        Ok(PauliRep { theta })
    }

    pub fn from_blocks(a: Vector3<f64>, b: Vector3<f64>, t: Matrix3<f64>) -> Self {
        let mut theta = Matrix4::zeros();
        theta[(0, 0)] = 1.0;
        for i in 0..3 {
            theta[(i + 1, 0)] = a[i];
            theta[(0, i + 1)] = b[i];
            for j in 0..3 {
                theta[(i + 1, j + 1)] = t[(i, j)];
            }
        }
        PauliRep { theta }
    }

    /// The 15 entries of Θ in row-major order with Θ00 omitted.
    pub fn from_general15(values: &[f64]) -> Result<Self> {
        if values.len() != 15 {
            return Err(Error::ShapeMismatch {
                expected: 15,
                found: values.len(),
            });
        }
        let mut theta = Matrix4::zeros();
        theta[(0, 0)] = 1.0;
        for (k, v) in values.iter().enumerate() {
            let idx = k + 1;
            theta[(idx / 4, idx % 4)] = *v;
        }
        Ok(PauliRep { theta })
    }

    pub fn general15(&self) -> [f64; 15] {
        let mut out = [0.0; 15];
        for (k, slot) in out.iter_mut().enumerate() {
            let idx = k + 1;
            *slot = self.theta[(idx / 4, idx % 4)];
        }
        out
    }

    pub fn theta(&self) -> &Matrix4<f64> {
        &self.theta
    }

    /// Alice's Bloch vector.
    pub fn a(&self) -> Vector3<f64> {
        Vector3::new(self.theta[(1, 0)], self.theta[(2, 0)], self.theta[(3, 0)])
    }

    /// Bob's Bloch vector.
    pub fn b(&self) -> Vector3<f64> {
        Vector3::new(self.theta[(0, 1)], self.theta[(0, 2)], self.theta[(0, 3)])
    }

    /// Correlation block, rows indexed by Alice.
    pub fn t(&self) -> Matrix3<f64> {
        self.theta.fixed_view::<3, 3>(1, 1).into_owned()
    }
}

/// `Θ_ij = Tr(ρ σ_i ⊗ σ_j)`.
pub fn pauli_decompose(rho: &DensityMatrix) -> PauliRep {
    theta_of(rho.matrix())
}

pub(crate) fn theta_of(m: &Mat4) -> PauliRep {
    let mut theta = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            theta[(i, j)] = trace4(&(m * kron(&pauli(i), &pauli(j)))).re;
        }
    }
    theta[(0, 0)] = 1.0;
    PauliRep { theta }
}

/// Checked variant for raw matrices: rejects non-Hermitian input.
pub fn pauli_decompose_matrix(m: &Mat4) -> Result<PauliRep> {
    let deviation = hermitian_deviation4(m);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let tr = trace4(m).re;
    if (tr - 1.0).abs() > TRACE_TOL {
        return Err(Error::NotUnitTrace { trace: tr });
    }
    Ok(theta_of(m))
}

/// `ρ = ¼ Σ Θ_ij σ_i ⊗ σ_j`, validated.
pub fn pauli_compose(rep: &PauliRep) -> Result<DensityMatrix> {
    let mut m = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let w = rep.theta[(i, j)];
            if w != 0.0 {
                m += kron(&pauli(i), &pauli(j)) * C64::new(0.25 * w, 0.0);
            }
        }
    }
    DensityMatrix::new(m).map_err(|e| match e {
        Error::NotPositive { min_eigenvalue } => Error::NonPhysicalTheta { min_eigenvalue },
        other => other,
    })
}

/// Hilbert–Schmidt random state: `GGᴴ / Tr(GGᴴ)` with `G` a 4×4 complex Ginibre matrix.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    let g = Mat4::from_fn(|_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let m = g * g.adjoint();
    let tr = trace4(&m).re;
    let m = (m + m.adjoint()) * C64::new(0.5 / tr, 0.0);
    DensityMatrix::new(m).expect("Ginibre product is a valid state")
}

/// Traces out `traced`, returning the other party's state.
pub fn partial_trace(rho: &DensityMatrix, traced: Party) -> LocalState {
    LocalState(partial_trace_matrix(rho.matrix(), traced))
}

pub(crate) fn partial_trace_matrix(m: &Mat4, traced: Party) -> Mat2 {
    Mat2::from_fn(|r, c| match traced {
        Party::Alice => m[(r, c)] + m[(2 + r, 2 + c)],
        Party::Bob => m[(2 * r, 2 * c)] + m[(2 * r + 1, 2 * c + 1)],
    })
}

/// Reduced state held by `party`.
pub fn marginal(rho: &DensityMatrix, party: Party) -> LocalState {
    partial_trace(rho, party.other())
}

/// Partial transpose on Bob's indices.
pub fn partial_transpose(m: &Mat4) -> Mat4 {
    Mat4::from_fn(|r, c| {
        let (ra, rb) = (r / 2, r % 2);
        let (ca, cb) = (c / 2, c % 2);
        m[(2 * ra + cb, 2 * ca + rb)]
    })
}

/// Peres–Horodecki test; exact for two qubits.
pub fn ppt_is_separable(rho: &DensityMatrix) -> bool {
    linalg::min_eigenvalue4(&partial_transpose(rho.matrix())) >= -PSD_TOL
}

/// Embeds a single-qubit operator on `party`.
pub fn local_operator(op: &Mat2, party: Party) -> Mat4 {
    match party {
        Party::Alice => kron(op, &Mat2::identity()),
        Party::Bob => kron(&Mat2::identity(), op),
    }
}

/// One-way SLOCC `ρ ↦ (K ρ K†) / Tr(K ρ K†)` with `K` acting on `party`.
pub fn one_way_slocc(rho: &DensityMatrix, party: Party, kraus: &Mat2) -> Result<DensityMatrix> {
    let k = local_operator(kraus, party);
    DensityMatrix::normalized(k * rho.matrix() * k.adjoint())
}

/// Applies `(2ρ_X)^{-1/2}` on party X so that its marginal becomes I/2.
pub fn slocc_canonicalize(rho: &DensityMatrix, party: Party) -> Result<DensityMatrix> {
    slocc_canonicalize_with(rho, party, PURITY_THRESHOLD)
}

pub fn slocc_canonicalize_with(
    rho: &DensityMatrix,
    party: Party,
    purity_threshold: f64,
) -> Result<DensityMatrix> {
    let local = marginal(rho, party);
    let min_eigenvalue = local.min_eigenvalue();
    if min_eigenvalue < purity_threshold {
        return Err(Error::SingularMarginal {
            party,
            min_eigenvalue,
        });
    }
    let k = linalg::hermitian_fn2(local.matrix(), |v| v.powf(-0.5));
    one_way_slocc(rho, party, &k)
}

/// A single-qubit unitary together with its induced SO(3) rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUnitary {
    matrix: Mat2,
    bloch_rotation: Matrix3<f64>,
}

impl LocalUnitary {
    pub fn new(matrix: Mat2) -> Result<Self> {
        let deviation = (matrix * matrix.adjoint() - Mat2::identity())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        let bloch_rotation = Matrix3::from_fn(|i, j| {
            0.5 * (pauli(i + 1) * matrix * pauli(j + 1) * matrix.adjoint())
                .trace()
                .re
        });
        Ok(LocalUnitary {
            matrix,
            bloch_rotation,
        })
    }

    pub fn identity() -> Self {
        LocalUnitary {
            matrix: Mat2::identity(),
            bloch_rotation: Matrix3::identity(),
        }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.matrix
    }

    pub fn bloch_rotation(&self) -> &Matrix3<f64> {
        &self.bloch_rotation
    }
}

/// Haar-random SU(2) element from a uniformly random unit quaternion.
pub fn random_local_unitary<R: Rng + ?Sized>(rng: &mut R) -> LocalUnitary {
    let mut q = [0.0f64; 4];
    loop {
        for v in q.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-8 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    let u = Mat2::new(C64::new(w, z), C64::new(y, x), C64::new(-y, x), C64::new(w, -z));
    LocalUnitary::new(u).expect("unit quaternion gives a unitary")
}

/// `(U_A ⊗ U_B) ρ (U_A ⊗ U_B)†`.
pub fn apply_local_unitaries(
    rho: &DensityMatrix,
    ua: &LocalUnitary,
    ub: &LocalUnitary,
) -> DensityMatrix {
    let u = kron(ua.matrix(), ub.matrix());
    DensityMatrix::normalized(u * rho.matrix() * u.adjoint())
        .expect("unitary conjugation preserves validity")
}

/// The same transformation carried out on Θ: `a ↦ O_A a`, `b ↦ O_B b`, `T ↦ O_A T O_Bᵀ`.
pub fn rotate_pauli_rep(rep: &PauliRep, ua: &LocalUnitary, ub: &LocalUnitary) -> PauliRep {
    let oa = ua.bloch_rotation();
    let ob = ub.bloch_rotation();
    PauliRep::from_blocks(oa * rep.a(), ob * rep.b(), oa * rep.t() * ob.transpose())
}
