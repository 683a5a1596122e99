//! Assemblages and the local-hidden-state (LHS) membership test.
//!
//! An assemblage `{σ_{a|x}}` admits an LHS model iff it decomposes over
//! deterministic strategies, `σ_{a|x} = Σ_λ D(a|x,λ) σ_λ` with every
//! `σ_λ ⪰ 0`. [`solve_lhs`] maximizes the smallest eigenvalue `t` over all
//! such decompositions. It works on the dual problem, whose variables are
//! Hermitian 2×2 operators `F_x` (one per setting) and `G`:
//!
//! ```text
//! minimize   Σ_x Tr(F_x σ_{0|x}) + Tr(G ρ_B)
//! subject to M_λ = G + Σ_{x : λ_x = 0} F_x ⪰ 0     for every λ
//!            (1/2ⁿ) Σ_λ Tr M_λ = 1
//! ```
//!
//! whose optimum equals `2ⁿ t*`. In Bloch coordinates every `M_λ ⪰ 0` is a
//! second-order cone, so the dual is a small SOCP with `4(n+1)` unknowns,
//! handled by a log-barrier Newton method started from the strictly feasible
//! point `G = I/2`, `F_x = 0`. Every dual iterate is a feasible witness, and a
//! primal model is recovered from each centered iterate. A verdict is only
//! issued with a certificate that passed [`validate_model`] or
//! [`validate_witness`].

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Bloch, Mat2, C64};
use crate::state::{partial_trace_matrix, DensityMatrix, Party};

const UNIT_TOL: f64 = 1e-12;
const ASSEMBLAGE_TOL: f64 = 1e-10;
/// Largest strategy table accepted (`oⁿ ≤ 2²⁰`).
pub const STRATEGY_GUARD: usize = 1 << 20;

/// Projective qubit measurement along a unit axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    axis: Vector3<f64>,
    projectors: [Mat2; 2],
}

impl Measurement {
    /// `axis` must have unit length within 1e-12.
    pub fn new(axis: Vector3<f64>) -> Result<Self> {
        let norm = axis.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidMeasurement(format!(
                "axis norm {norm} is not 1"
            )));
        }
        let plus = linalg::from_bloch(&[0.5, 0.5 * axis[0], 0.5 * axis[1], 0.5 * axis[2]]);
        let minus = linalg::from_bloch(&[0.5, -0.5 * axis[0], -0.5 * axis[1], -0.5 * axis[2]]);
        Ok(Measurement {
            axis,
            projectors: [plus, minus],
        })
    }

    /// Normalizes an arbitrary nonzero direction.
    pub fn along(direction: Vector3<f64>) -> Result<Self> {
        let norm = direction.norm();
        if norm < 1e-300 {
            return Err(Error::InvalidMeasurement("zero direction".into()));
        }
        Self::new(direction / norm)
    }

    pub fn axis(&self) -> &Vector3<f64> {
        &self.axis
    }

    /// `M_a = (I + (−1)^a u·σ)/2`.
    pub fn projector(&self, a: usize) -> &Mat2 {
        &self.projectors[a]
    }
}

/// Draws `n` axes uniformly from the unit sphere.
pub fn sample_measurements<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Measurement> {
    (0..n).map(|_| sample_measurement(rng)).collect()
}

pub fn sample_measurement<R: Rng + ?Sized>(rng: &mut R) -> Measurement {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let norm = v.norm();
        if norm > 1e-8 {
            // Renormalize twice so the unit-length check holds to rounding.
            let u = v / norm;
            return Measurement::new(u / u.norm()).expect("normalized axis");
        }
    }
}

/// Bob's conditional states `σ_{a|x}` for two-outcome settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Assemblage {
    sigma: Vec<[Mat2; 2]>,
}

impl Assemblage {
    /// Validates positivity, normalization and no-signalling.
    pub fn new(sigma: Vec<[Mat2; 2]>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::InvalidAssemblage("no settings".into()));
        }
        let reference = sigma[0][0] + sigma[0][1];
        for (x, pair) in sigma.iter().enumerate() {
            for (a, s) in pair.iter().enumerate() {
                let dev = linalg::hermitian_deviation2(s);
                if dev > ASSEMBLAGE_TOL {
                    return Err(Error::InvalidAssemblage(format!(
                        "σ({a}|{x}) not Hermitian ({dev:.3e})"
                    )));
                }
                let ev = linalg::min_eigenvalue2(s);
                if ev < -ASSEMBLAGE_TOL {
                    return Err(Error::InvalidAssemblage(format!(
                        "σ({a}|{x}) has eigenvalue {ev:.3e}"
                    )));
                }
            }
            let total = pair[0] + pair[1];
            let p = total.trace().re;
            if (p - 1.0).abs() > ASSEMBLAGE_TOL {
                return Err(Error::InvalidAssemblage(format!(
                    "setting {x} probabilities sum to {p}"
                )));
            }
            let drift = linalg::max_abs_diff2(&total, &reference);
            if drift > ASSEMBLAGE_TOL {
                return Err(Error::InvalidAssemblage(format!(
                    "setting {x} violates no-signalling by {drift:.3e}"
                )));
            }
        }
        Ok(Assemblage { sigma })
    }

    pub fn settings(&self) -> usize {
        self.sigma.len()
    }

    pub fn outcomes(&self) -> usize {
        2
    }

    pub fn element(&self, a: usize, x: usize) -> &Mat2 {
        &self.sigma[x][a]
    }

    /// `p(a|x) = Tr σ_{a|x}`.
    pub fn probability(&self, a: usize, x: usize) -> f64 {
        self.sigma[x][a].trace().re
    }

    /// Bob's unconditional state, averaged over settings.
    pub fn bob_state(&self) -> Mat2 {
        let n = self.sigma.len() as f64;
        self.sigma
            .iter()
            .fold(Mat2::zeros(), |acc, p| acc + p[0] + p[1])
            / C64::new(n, 0.0)
    }

    /// Restriction to a subset of settings, in the given order.
    pub fn select(&self, settings: &[usize]) -> Result<Assemblage> {
        Assemblage::new(settings.iter().map(|&x| self.sigma[x]).collect())
    }
}

/// `σ_{a|x} = Tr_A[(M_{a|x} ⊗ I) ρ]`.
pub fn build_assemblage(rho: &DensityMatrix, measurements: &[Measurement]) -> Result<Assemblage> {
    let sigma = measurements
        .iter()
        .map(|m| {
            let mut pair = [Mat2::zeros(); 2];
            for (a, slot) in pair.iter_mut().enumerate() {
                let op = crate::state::local_operator(m.projector(a), Party::Alice);
                let s = partial_trace_matrix(&(op * rho.matrix()), Party::Alice);
                *slot = (s + s.adjoint()) * C64::new(0.5, 0.0);
            }
            pair
        })
        .collect();
    Assemblage::new(sigma)
}

/// Deterministic response functions `λ: x ↦ a`, with `a` the base-`o` digit `x` of `λ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyTable {
    settings: usize,
    outcomes: usize,
    responses: Vec<u8>,
}

impl StrategyTable {
    pub fn settings(&self) -> usize {
        self.settings
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn len(&self) -> usize {
        self.responses.len() / self.settings.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Outcome produced by strategy `lambda` on setting `x`.
    pub fn response(&self, x: usize, lambda: usize) -> usize {
        self.responses[lambda * self.settings + x] as usize
    }

    /// `D(a|x,λ) ∈ {0, 1}`.
    pub fn d(&self, a: usize, x: usize, lambda: usize) -> u8 {
        u8::from(self.response(x, lambda) == a)
    }
}

pub fn enumerate_strategies(settings: usize, outcomes: usize) -> Result<StrategyTable> {
    let too_large = Error::StrategyTableTooLarge { settings, outcomes };
    if !(1..=256).contains(&outcomes) {
        return Err(too_large);
    }
    let count = (outcomes as u128)
        .checked_pow(settings as u32)
        .filter(|&c| c <= STRATEGY_GUARD as u128)
        .ok_or(too_large)? as usize;
    let mut responses = Vec::with_capacity(count * settings);
    for lambda in 0..count {
        let mut rest = lambda;
        for _ in 0..settings {
            responses.push((rest % outcomes) as u8);
            rest /= outcomes;
        }
    }
    Ok(StrategyTable {
        settings,
        outcomes,
        responses,
    })
}

/// Tolerances for [`solve_lhs`] and certificate validation.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// PSD slack accepted when validating certificates.
    pub eps_psd: f64,
    /// Max-norm reconstruction error accepted for an LHS model.
    pub eps_eq: f64,
    /// Width of the band around `t* = 0` treated as feasible.
    pub eps_feas: f64,
    /// Required witness violation `v ≤ −δ`.
    pub margin: f64,
    /// Newton-step budget per solve.
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps_psd: 1e-9,
            eps_eq: 1e-8,
            eps_feas: 1e-8,
            margin: 1e-7,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    Unsteerable,
    Steerable,
    Indeterminate,
}

/// Dual certificate: Hermitian `F_{a|x}` with `Σ_x F_{λ_x|x} ⪰ 0` for every strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub elements: Vec<[Mat2; 2]>,
}

impl Witness {
    pub fn zeros(settings: usize) -> Self {
        Witness {
            elements: vec![[Mat2::zeros(); 2]; settings],
        }
    }

    pub fn settings(&self) -> usize {
        self.elements.len()
    }

    /// `v = Σ_{a,x} Tr(F_{a|x} σ_{a|x})`.
    pub fn value(&self, asm: &Assemblage) -> f64 {
        self.elements
            .iter()
            .enumerate()
            .map(|(x, f)| {
                (0..2)
                    .map(|a| (f[a] * asm.element(a, x)).trace().re)
                    .sum::<f64>()
            })
            .sum()
    }

    /// Pads with zero operators for additional settings.
    pub fn extended(&self, settings: usize) -> Witness {
        let mut elements = self.elements.clone();
        elements.resize(settings, [Mat2::zeros(); 2]);
        Witness { elements }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LhsVerdict {
    pub kind: VerdictKind,
    /// Estimate of the optimal minimum eigenvalue `t*`: a lower bound when
    /// unsteerable, an upper bound when steerable.
    pub t_star: f64,
    /// `σ_λ` for every strategy, present iff unsteerable.
    pub model: Option<Vec<Mat2>>,
    pub witness: Option<Witness>,
    /// Witness value `v`, when a witness is attached.
    pub witness_value: Option<f64>,
    pub iterations: usize,
}

/// Checks an LHS model: PSD elements and faithful reconstruction of the assemblage.
pub fn validate_model(asm: &Assemblage, model: &[Mat2], tol: &SolverConfig) -> bool {
    let n = asm.settings();
    if n >= usize::BITS as usize || model.len() != 1usize << n {
        return false;
    }
    if model
        .iter()
        .any(|s| linalg::hermitian_deviation2(s) > tol.eps_eq || linalg::min_eigenvalue2(s) < -tol.eps_psd)
    {
        return false;
    }
    for x in 0..n {
        let mut sums = [Mat2::zeros(); 2];
        for (lambda, s) in model.iter().enumerate() {
            sums[(lambda >> x) & 1] += s;
        }
        for (a, sum) in sums.iter().enumerate() {
            if linalg::max_abs_diff2(sum, asm.element(a, x)) > tol.eps_eq {
                return false;
            }
        }
    }
    true
}

/// Checks a witness: positive on every deterministic strategy and `v ≤ −δ`.
pub fn validate_witness(asm: &Assemblage, witness: &Witness, tol: &SolverConfig) -> bool {
    let n = asm.settings();
    if witness.settings() != n || n >= usize::BITS as usize {
        return false;
    }
    if witness
        .elements
        .iter()
        .flatten()
        .any(|f| linalg::hermitian_deviation2(f) > tol.eps_psd)
    {
        return false;
    }
    let blochs: Vec<[Bloch; 2]> = witness
        .elements
        .iter()
        .map(|f| [linalg::to_bloch(&f[0]), linalg::to_bloch(&f[1])])
        .collect();
    for lambda in 0..(1usize << n) {
        let mut acc = [0.0; 4];
        for (x, f) in blochs.iter().enumerate() {
            let b = &f[(lambda >> x) & 1];
            for k in 0..4 {
                acc[k] += b[k];
            }
        }
        if linalg::bloch_min_eigenvalue(&acc) < -tol.eps_psd {
            return false;
        }
    }
    witness.value(asm) <= -tol.margin
}

/// Decides whether `asm` admits an LHS model, returning a validated certificate
/// or `Indeterminate`.
pub fn solve_lhs(asm: &Assemblage, cfg: &SolverConfig) -> Result<LhsVerdict> {
    let n = asm.settings();
    if n == 0 || n > 20 {
        return Err(Error::StrategyTableTooLarge {
            settings: n,
            outcomes: 2,
        });
    }
    let mut solver = BarrierSolver::new(asm);
    Ok(solver.run(asm, cfg))
}

struct BarrierSolver {
    n: usize,
    strategies: usize,
    dim: usize,
    /// Objective `c` (twice the Bloch vectors of σ_{0|x} and ρ_B).
    c: Vec<f64>,
    /// Normalization row `a·y = 1`.
    norm_row: Vec<f64>,
    y: Vec<f64>,
    cones: Vec<Bloch>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    hess_backup: Vec<f64>,
    pair_blocks: Vec<[f64; 16]>,
    rhs: Vec<f64>,
    dir: Vec<f64>,
    trial: Vec<f64>,
    trial_cones: Vec<Bloch>,
}

impl BarrierSolver {
    fn new(asm: &Assemblage) -> Self {
        let n = asm.settings();
        let strategies = 1usize << n;
        let dim = 4 * (n + 1);
        let mut c = vec![0.0; dim];
        for x in 0..n {
            let s = linalg::to_bloch(asm.element(0, x));
            for k in 0..4 {
                c[4 * x + k] = 2.0 * s[k];
            }
        }
        let r = linalg::to_bloch(&asm.bob_state());
        for k in 0..4 {
            c[4 * n + k] = 2.0 * r[k];
        }
        let mut norm_row = vec![0.0; dim];
        for x in 0..n {
            norm_row[4 * x] = 1.0;
        }
        norm_row[4 * n] = 2.0;
        let mut y = vec![0.0; dim];
        y[4 * n] = 0.5;
        BarrierSolver {
            n,
            strategies,
            dim,
            c,
            norm_row,
            y,
            cones: vec![[0.0; 4]; strategies],
            grad: vec![0.0; dim],
            hess: vec![0.0; dim * dim],
            hess_backup: vec![0.0; dim * dim],
            pair_blocks: vec![[0.0; 16]; (n + 1) * (n + 2) / 2],
            rhs: vec![0.0; dim],
            dir: vec![0.0; dim],
            trial: vec![0.0; dim],
            trial_cones: vec![[0.0; 4]; strategies],
        }
    }

    /// `M_λ = g + Σ_{x: bit x of λ is 0} f_x`, built incrementally over λ.
    fn fill_cones(n: usize, y: &[f64], cones: &mut [Bloch]) {
        let g = 4 * n;
        let mut first = [y[g], y[g + 1], y[g + 2], y[g + 3]];
        for x in 0..n {
            for k in 0..4 {
                first[k] += y[4 * x + k];
            }
        }
        cones[0] = first;
        for lambda in 1..cones.len() {
            let bit = lambda.trailing_zeros() as usize;
            let mut m = cones[lambda & (lambda - 1)];
            for k in 0..4 {
                m[k] -= y[4 * bit + k];
            }
            cones[lambda] = m;
        }
    }

    fn interior(cones: &[Bloch]) -> bool {
        cones.iter().all(|m| m[0] > 0.0 && lorentz(m) > 0.0)
    }

    fn dual_value(&self) -> f64 {
        dot(&self.c, &self.y)
    }

    /// Gradient and Hessian of `t·c·y − Σ_λ log(m0² − |m|²)`.
    fn assemble(&mut self, t: f64) {
        let dim = self.dim;
        let n = self.n;
        for (g, c) in self.grad.iter_mut().zip(&self.c) {
            *g = t * c;
        }
        // 4×4 Hessian blocks for variable-block pairs (bi ≤ bj), with g = block n.
        let pair = |bi: usize, bj: usize| bj * (bj + 1) / 2 + bi;
        self.pair_blocks.iter_mut().for_each(|b| *b = [0.0; 16]);
        let mut blocks = [0usize; 21];
        for (lambda, m) in self.cones.iter().enumerate() {
            let inv_q = 1.0 / lorentz(m);
            let jm = [m[0], -m[1], -m[2], -m[3]];
            let mut h = [0.0; 16];
            let f = 4.0 * inv_q * inv_q;
            for r in 0..4 {
                for c in 0..4 {
                    h[4 * r + c] = f * jm[r] * jm[c];
                }
            }
            h[0] -= 2.0 * inv_q;
            h[5] += 2.0 * inv_q;
            h[10] += 2.0 * inv_q;
            h[15] += 2.0 * inv_q;
            let mut len = 0;
            for x in 0..n {
                if (lambda >> x) & 1 == 0 {
                    blocks[len] = x;
                    len += 1;
                }
            }
            blocks[len] = n;
            len += 1;
            let active = &blocks[..len];
            for &bi in active {
                let gb = &mut self.grad[4 * bi..4 * bi + 4];
                for k in 0..4 {
                    gb[k] -= 2.0 * jm[k] * inv_q;
                }
            }
            for (j, &bj) in active.iter().enumerate() {
                for &bi in &active[..=j] {
                    let acc = &mut self.pair_blocks[pair(bi, bj)];
                    for k in 0..16 {
                        acc[k] += h[k];
                    }
                }
            }
        }
        for bj in 0..=n {
            for bi in 0..=bj {
                let b = &self.pair_blocks[pair(bi, bj)];
                for r in 0..4 {
                    for c in 0..4 {
                        let v = b[4 * r + c];
                        self.hess[(4 * bi + r) * dim + 4 * bj + c] = v;
                        self.hess[(4 * bj + c) * dim + 4 * bi + r] = v;
                    }
                }
            }
        }
    }

    /// Equality-constrained Newton direction; returns the Newton decrement, or
    /// `None` if the Hessian lost positive definiteness numerically.
    fn newton_direction(&mut self) -> Option<f64> {
        let dim = self.dim;
        self.hess_backup.copy_from_slice(&self.hess);
        let mut factored = cholesky_in_place(&mut self.hess, dim);
        // Near the optimum some cones approach their boundary and the Hessian
        // becomes ill-conditioned; retry with a small diagonal shift.
        let scale = (0..dim).map(|i| self.hess_backup[i * dim + i]).fold(0.0, f64::max);
        for shift in [1e-13, 1e-11, 1e-9] {
            if factored {
                break;
            }
            self.hess.copy_from_slice(&self.hess_backup);
            for i in 0..dim {
                self.hess[i * dim + i] += shift * scale;
            }
            factored = cholesky_in_place(&mut self.hess, dim);
        }
        if !factored {
            return None;
        }
        // H u = −∇ψ, H w = a, then project onto a·Δ = 0.
        for (r, g) in self.rhs.iter_mut().zip(&self.grad) {
            *r = -g;
        }
        cholesky_solve(&self.hess, dim, &mut self.rhs);
        let mut w = self.norm_row.clone();
        cholesky_solve(&self.hess, dim, &mut w);
        let scale = dot(&self.norm_row, &self.rhs) / dot(&self.norm_row, &w);
        for i in 0..dim {
            self.dir[i] = self.rhs[i] - scale * w[i];
        }
        // Decrement² = −∇ψ·Δ on the constraint subspace.
        let dec2 = -dot(&self.grad, &self.dir);
        Some(dec2.max(0.0).sqrt())
    }

    fn barrier(&self, t: f64, y: &[f64], cones: &[Bloch]) -> f64 {
        t * dot(&self.c, y) - cones.iter().map(|m| lorentz(m).ln()).sum::<f64>()
    }

    /// Backtracking line search on the barrier objective. Once the step is
    /// no longer than the damped Newton step, any interior point is accepted.
    fn step(&mut self, t: f64, decrement: f64) -> bool {
        let current = self.barrier(t, &self.y, &self.cones);
        let slope = decrement * decrement;
        let damped = 1.0 / (1.0 + decrement);
        let mut alpha = 1.0;
        for _ in 0..60 {
            for i in 0..self.dim {
                self.trial[i] = self.y[i] + alpha * self.dir[i];
            }
            Self::fill_cones(self.n, &self.trial, &mut self.trial_cones);
            if Self::interior(&self.trial_cones)
                && (alpha <= damped
                    || self.barrier(t, &self.trial, &self.trial_cones) <= current - 0.01 * alpha * slope)
            {
                std::mem::swap(&mut self.y, &mut self.trial);
                std::mem::swap(&mut self.cones, &mut self.trial_cones);
                return true;
            }
            alpha *= 0.5;
        }
        false
    }

    fn witness(&self) -> Witness {
        let n = self.n;
        let g = [self.y[4 * n], self.y[4 * n + 1], self.y[4 * n + 2], self.y[4 * n + 3]];
        let share = linalg::from_bloch(&g) / C64::new(n as f64, 0.0);
        let elements = (0..n)
            .map(|x| {
                let f = [self.y[4 * x], self.y[4 * x + 1], self.y[4 * x + 2], self.y[4 * x + 3]];
                [linalg::from_bloch(&f) + share, share]
            })
            .collect();
        Witness { elements }
    }

    /// Primal model from the barrier multipliers `τ_λ = (m0, −m)/(t q)`,
    /// corrected onto the affine constraints by the minimum-norm update.
    fn primal_model(&self, t: f64) -> Vec<Bloch> {
        let n = self.n;
        let mut model: Vec<Bloch> = self
            .cones
            .iter()
            .map(|m| {
                let s = 1.0 / (t * lorentz(m));
                [m[0] * s, -m[1] * s, -m[2] * s, -m[3] * s]
            })
            .collect();
        // Residuals of Σ_{λ_x=0} σ_λ = σ_{0|x} and Σ_λ σ_λ = ρ_B.
        let mut res = vec![[0.0; 4]; n + 1];
        for x in 0..n {
            for k in 0..4 {
                res[x][k] = 0.5 * self.c[4 * x + k];
            }
        }
        for k in 0..4 {
            res[n][k] = 0.5 * self.c[4 * n + k];
        }
        for (lambda, p) in model.iter().enumerate() {
            for x in 0..n {
                if (lambda >> x) & 1 == 0 {
                    for k in 0..4 {
                        res[x][k] -= p[k];
                    }
                }
            }
            for k in 0..4 {
                res[n][k] -= p[k];
            }
        }
        // (A Aᵀ) w = res has the closed form below for the strategy structure.
        let quarter = (self.strategies as f64) / 4.0;
        let half = (self.strategies as f64) / 2.0;
        let full = self.strategies as f64;
        let mut w = vec![[0.0; 4]; n];
        let mut total = [0.0; 4];
        for x in 0..n {
            for k in 0..4 {
                w[x][k] = (res[x][k] - 0.5 * res[n][k]) / quarter;
                total[k] += w[x][k];
            }
        }
        let mut wb = [0.0; 4];
        for k in 0..4 {
            wb[k] = (res[n][k] - half * total[k]) / full;
        }
        for (lambda, p) in model.iter_mut().enumerate() {
            for k in 0..4 {
                p[k] += wb[k];
            }
            for x in 0..n {
                if (lambda >> x) & 1 == 0 {
                    for k in 0..4 {
                        p[k] += w[x][k];
                    }
                }
            }
        }
        model
    }

    fn steerable(&self, asm: &Assemblage, cfg: &SolverConfig, iterations: usize) -> Option<LhsVerdict> {
        let v = self.dual_value();
        if v > -cfg.margin {
            return None;
        }
        let witness = self.witness();
        if !validate_witness(asm, &witness, cfg) {
            return None;
        }
        let value = witness.value(asm);
        Some(LhsVerdict {
            kind: VerdictKind::Steerable,
            t_star: v / self.strategies as f64,
            model: None,
            witness: Some(witness),
            witness_value: Some(value),
            iterations,
        })
    }

    fn unsteerable(&self, asm: &Assemblage, cfg: &SolverConfig, t: f64, iterations: usize) -> Option<LhsVerdict> {
        let model = self.primal_model(t);
        let t_primal = model
            .iter()
            .map(linalg::bloch_min_eigenvalue)
            .fold(f64::INFINITY, f64::min);
        if t_primal < -cfg.eps_psd.min(cfg.eps_feas) {
            return None;
        }
        let model: Vec<Mat2> = model.iter().map(linalg::from_bloch).collect();
        if !validate_model(asm, &model, cfg) {
            return None;
        }
        Some(LhsVerdict {
            kind: VerdictKind::Unsteerable,
            t_star: t_primal,
            model: Some(model),
            witness: None,
            witness_value: None,
            iterations,
        })
    }

    fn run(&mut self, asm: &Assemblage, cfg: &SolverConfig) -> LhsVerdict {
        let barrier_weight = 2.0 * self.strategies as f64;
        // Centered duality gap is barrier_weight / t; start with gap 1.
        let mut t = barrier_weight;
        let final_gap = 1e-3 * cfg.margin.min(cfg.eps_feas * self.strategies as f64);
        Self::fill_cones(self.n, &self.y, &mut self.cones);
        let mut iterations = 0;
        let mut best_primal = f64::NEG_INFINITY;
        // Deep inside the LHS set the affine repair of the starting point already works.
        if let Some(v) = self.unsteerable(asm, cfg, t, iterations) {
            return v;
        }
        'outer: loop {
            // Centering.
            loop {
                if iterations >= cfg.max_iterations {
                    break 'outer;
                }
                self.assemble(t);
                let Some(decrement) = self.newton_direction() else {
                    break 'outer;
                };
                if decrement * decrement < 1e-8 {
                    break;
                }
                if !self.step(t, decrement) {
                    break 'outer;
                }
                iterations += 1;
                if let Some(v) = self.steerable(asm, cfg, iterations) {
                    return v;
                }
                if let Some(v) = self.unsteerable(asm, cfg, t, iterations) {
                    return v;
                }
            }
            if let Some(v) = self.unsteerable(asm, cfg, t, iterations) {
                return v;
            }
            best_primal = best_primal.max(
                self.primal_model(t)
                    .iter()
                    .map(linalg::bloch_min_eigenvalue)
                    .fold(f64::INFINITY, f64::min),
            );
            if barrier_weight / t < final_gap {
                break;
            }
            t *= 10.0;
        }
        if let Some(v) = self.steerable(asm, cfg, iterations) {
            return v;
        }
        if let Some(v) = self.unsteerable(asm, cfg, t, iterations) {
            return v;
        }
        let upper = self.dual_value() / self.strategies as f64;
        let t_star = if best_primal.is_finite() {
            0.5 * (upper + best_primal)
        } else {
            upper
        };
        LhsVerdict {
            kind: VerdictKind::Indeterminate,
            t_star,
            model: None,
            witness: None,
            witness_value: None,
            iterations,
        }
    }
}

#[inline]
fn lorentz(m: &Bloch) -> f64 {
    m[0] * m[0] - m[1] * m[1] - m[2] * m[2] - m[3] * m[3]
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower Cholesky factor stored in place (row-major). Returns false if not PD.
fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let (row_j, below) = a[j * n..].split_at_mut(n);
        let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        row_j[j] = d;
        for row_i in below.chunks_exact_mut(n) {
            row_i[j] = (row_i[j] - dot(&row_i[..j], &row_j[..j])) / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for (i, row) in l.chunks_exact(n).enumerate() {
        b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
    }
    for (i, row) in l.chunks_exact(n).enumerate().rev() {
        let xi = b[i] / row[i];
        b[i] = xi;
        for (bk, lk) in b[..i].iter_mut().zip(&row[..i]) {
            *bk -= lk * xi;
        }
    }
}
