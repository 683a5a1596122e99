//! Closed-form baseline criteria.

use nalgebra::{Matrix3, Vector3};

use crate::error::Result;
use crate::linalg::eigenvalues3;
use crate::state::{pauli_decompose, slocc_canonicalize, DensityMatrix, Party};

/// Slack required below the unsteerability bound before the criterion fires.
pub const BHQB_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionVerdict {
    Unsteerable,
    SteerableByN,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionResult {
    pub verdict: CriterionVerdict,
    pub value: f64,
    pub n: Option<usize>,
}

/// Maximal steering-inequality violation with `n ∈ {2, 3}` settings:
/// `sqrt` of the sum of the `n` largest eigenvalues of Alice's ellipsoid matrix.
pub fn cjwr_value(rho: &DensityMatrix, n: usize) -> Result<CriterionResult> {
    assert!(n == 2 || n == 3, "criterion defined for 2 or 3 settings");
    let rep = pauli_decompose(&slocc_canonicalize(rho, Party::Bob)?);
    let t = rep.t();
    let ev = eigenvalues3(&(t * t.transpose()));
    let value = ev[3 - n..].iter().map(|v| v.max(0.0)).sum::<f64>().sqrt();
    let verdict = if value > 1.0 + 1e-10 {
        CriterionVerdict::SteerableByN
    } else {
        CriterionVerdict::Unknown
    };
    Ok(CriterionResult {
        verdict,
        value,
        n: Some(n),
    })
}

/// Sufficient unsteerability test for projective measurements by Alice.
///
/// With Bob's marginal made maximally mixed, the state is unsteerable when
/// `max_{|x|=1} (ã·x)² + 2‖T̃ᵀx‖ ≤ 1`. The reported value is that maximum.
pub fn bhqb_unsteerable(rho: &DensityMatrix) -> Result<CriterionResult> {
    let rep = pauli_decompose(&slocc_canonicalize(rho, Party::Bob)?);
    let value = bhqb_max(&rep.a(), &rep.t());
    let verdict = if value <= 1.0 - BHQB_MARGIN {
        CriterionVerdict::Unsteerable
    } else {
        CriterionVerdict::Unknown
    };
    Ok(CriterionResult {
        verdict,
        value,
        n: None,
    })
}

fn bhqb_objective(a: &Vector3<f64>, m: &Matrix3<f64>, x: &Vector3<f64>) -> f64 {
    let ax = a.dot(x);
    ax * ax + 2.0 * (m * x).norm()
}

/// Global maximum over the unit sphere: a Fibonacci grid followed by
/// projected gradient ascent from the best starts.
fn bhqb_max(a: &Vector3<f64>, t: &Matrix3<f64>) -> f64 {
    const GRID: usize = 1500;
    const STARTS: usize = 6;
    let m = t.transpose();
    let mtm = m.transpose() * m;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut candidates: Vec<(f64, Vector3<f64>)> = (0..GRID)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / GRID as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let x = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            (bhqb_objective(a, &m, &x), x)
        })
        .collect();
    candidates.sort_by(|p, q| q.0.total_cmp(&p.0));
    let mut best = candidates[0].0;
    for (mut f, mut x) in candidates.into_iter().take(STARTS) {
        let mut step = 0.1;
        for _ in 0..200 {
            let mx = (m * x).norm();
            let mut g = a * (2.0 * a.dot(&x));
            if mx > 1e-300 {
                g += mtm * x * (2.0 / mx);
            }
            let g_tan = g - x * g.dot(&x);
            if g_tan.norm() < 1e-13 {
                break;
            }
            let mut improved = false;
            while step > 1e-14 {
                let cand = (x + g_tan * step).normalize();
                let fc = bhqb_objective(a, &m, &cand);
                if fc > f {
                    x = cand;
                    f = fc;
                    step *= 2.0;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.max(f);
    }
    best
}
