//! Steering ellipsoids and the five feature encodings of a two-qubit state.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::protocol::Label;
use crate::textio::fmt17;
use crate::state::{pauli_decompose, slocc_canonicalize, DensityMatrix, LocalState, Party};

/// Feature encoding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureScheme {
    /// All of Θ except Θ00.
    General15,
    /// `(ã, T̃)` after canonicalizing Bob's marginal.
    Slocc12,
    /// Alice's steering ellipsoid: upper triangle of `Q_A` and its center.
    EllA9,
    /// Bob's steering ellipsoid.
    EllB9,
    /// Alice's ellipsoid rotated to its principal axes: diagonal of `T′` and `a′`.
    LutA6,
}

impl FeatureScheme {
    pub const ALL: [FeatureScheme; 5] = [
        FeatureScheme::General15,
        FeatureScheme::Slocc12,
        FeatureScheme::EllA9,
        FeatureScheme::EllB9,
        FeatureScheme::LutA6,
    ];

    pub fn len(self) -> usize {
        match self {
            FeatureScheme::General15 => 15,
            FeatureScheme::Slocc12 => 12,
            FeatureScheme::EllA9 | FeatureScheme::EllB9 => 9,
            FeatureScheme::LutA6 => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureScheme::General15 => "General15",
            FeatureScheme::Slocc12 => "Slocc12",
            FeatureScheme::EllA9 => "EllA9",
            FeatureScheme::EllB9 => "EllB9",
            FeatureScheme::LutA6 => "LutA6",
        }
    }
}

impl fmt::Display for FeatureScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "general15" => Ok(FeatureScheme::General15),
            "slocc12" => Ok(FeatureScheme::Slocc12),
            "ella9" => Ok(FeatureScheme::EllA9),
            "ellb9" => Ok(FeatureScheme::EllB9),
            "luta6" => Ok(FeatureScheme::LutA6),
            _ => Err(Error::UnknownScheme(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub scheme: FeatureScheme,
    pub values: Vec<f64>,
}

/// Steering ellipsoid `{c + Q^{1/2} v : |v| ≤ 1}` in the Bloch ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub q: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl Ellipsoid {
    /// `(r − c)ᵀ Q⁻¹ (r − c)`; at most 1 inside the ellipsoid. `None` if `Q` is singular.
    pub fn quadric(&self, r: &Vector3<f64>) -> Option<f64> {
        let inv = self.q.try_inverse()?;
        let d = r - self.center;
        Some((d.transpose() * inv * d)[(0, 0)])
    }

    fn upper_triangle(&self) -> [f64; 6] {
        let q = &self.q;
        [q[(0, 0)], q[(0, 1)], q[(0, 2)], q[(1, 1)], q[(1, 2)], q[(2, 2)]]
    }
}

/// Steering ellipsoid of `side`: the set of that party's states reachable by
/// measurements on the opposite party.
pub fn ellipsoid(rho: &DensityMatrix, side: Party) -> Result<Ellipsoid> {
    let canonical = slocc_canonicalize(rho, side.other())?;
    let rep = pauli_decompose(&canonical);
    let t = rep.t();
    Ok(match side {
        Party::Alice => Ellipsoid {
            q: symmetrize(&(t * t.transpose())),
            center: rep.a(),
        },
        Party::Bob => Ellipsoid {
            q: symmetrize(&(t.transpose() * t)),
            center: rep.b(),
        },
    })
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Canonical principal-axis form of Alice's ellipsoid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedEllipsoid {
    /// Diagonal of `T′`, ordered `|s1| ≥ |s2| ≥ |s3|`, `s1, s2 ≥ 0`, `sign(s3) = sign(det T̃)`.
    pub singular: Vector3<f64>,
    /// Center in the rotated frame, `a′ = Uᵀ ã`.
    pub center: Vector3<f64>,
    /// Proper rotations with `T̃ = U diag(s) Vᵀ`.
    pub u: Matrix3<f64>,
    pub v: Matrix3<f64>,
}

/// Diagonalizes `T̃` with proper rotations on both sides.
///
/// The residual freedom of flipping two column pairs of `(U, V)` at once is
/// fixed by requiring `a′₁ ≥ 0` and `a′₂ ≥ 0`; the frame is unique when the
/// singular values are distinct and those two components are nonzero.
pub fn align(t: &Matrix3<f64>, a: &Vector3<f64>) -> AlignedEllipsoid {
    let svd = t.svd(true, true);
    let u0 = svd.u.expect("requested U");
    let v0 = svd.v_t.expect("requested Vᵀ").transpose();
    let s0 = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| s0[j].total_cmp(&s0[i]));
    let mut u = Matrix3::zeros();
    let mut v = Matrix3::zeros();
    let mut s = Vector3::zeros();
    for (k, &src) in order.iter().enumerate() {
        u.set_column(k, &u0.column(src));
        v.set_column(k, &v0.column(src));
        s[k] = s0[src];
    }
    if u.determinant() < 0.0 {
        let c = -u.column(2);
        u.set_column(2, &c);
        s[2] = -s[2];
    }
    if v.determinant() < 0.0 {
        let c = -v.column(2);
        v.set_column(2, &c);
        s[2] = -s[2];
    }
    let mut center = u.transpose() * a;
    let flip = |u: &mut Matrix3<f64>, v: &mut Matrix3<f64>, c: &mut Vector3<f64>, i: usize, j: usize| {
        for k in [i, j] {
            let cu = -u.column(k);
            u.set_column(k, &cu);
            let cv = -v.column(k);
            v.set_column(k, &cv);
            c[k] = -c[k];
        }
    };
    match (center[0] < 0.0, center[1] < 0.0) {
        (true, true) => flip(&mut u, &mut v, &mut center, 0, 1),
        (true, false) => flip(&mut u, &mut v, &mut center, 0, 2),
        (false, true) => flip(&mut u, &mut v, &mut center, 1, 2),
        (false, false) => {}
    }
    AlignedEllipsoid {
        singular: s,
        center,
        u,
        v,
    }
}

/// Encodes `rho` under `scheme`.
pub fn encode(rho: &DensityMatrix, scheme: FeatureScheme) -> Result<FeatureVector> {
    let values = match scheme {
        FeatureScheme::General15 => pauli_decompose(rho).general15().to_vec(),
        FeatureScheme::Slocc12 => {
            let rep = pauli_decompose(&slocc_canonicalize(rho, Party::Bob)?);
            let (a, t) = (rep.a(), rep.t());
            let mut v = a.iter().copied().collect::<Vec<_>>();
            for i in 0..3 {
                for j in 0..3 {
                    v.push(t[(i, j)]);
                }
            }
            v
        }
        FeatureScheme::EllA9 | FeatureScheme::EllB9 => {
            let side = if scheme == FeatureScheme::EllA9 {
                Party::Alice
            } else {
                Party::Bob
            };
            let e = ellipsoid(rho, side)?;
            let mut v = e.upper_triangle().to_vec();
            v.extend(e.center.iter());
            v
        }
        FeatureScheme::LutA6 => {
            let rep = pauli_decompose(&slocc_canonicalize(rho, Party::Bob)?);
            let aligned = align(&rep.t(), &rep.a());
            aligned
                .singular
                .iter()
                .chain(aligned.center.iter())
                .copied()
                .collect()
        }
    };
    Ok(FeatureVector { scheme, values })
}

/// Alice's normalized state when Bob applies the effect `E = ½ Σ_j X_j σ_j`,
/// together with its probability `p_E = ½(1 + b·X)`.
pub fn bob_measurement_image(rho: &DensityMatrix, x: &Vector4<f64>) -> Result<(LocalState, f64)> {
    if x[0] != 1.0 {
        return Err(Error::InvalidMeasurement(format!("X0 = {} (must be 1)", x[0])));
    }
    let dir = Vector3::new(x[1], x[2], x[3]);
    if dir.norm() > 1.0 + 1e-12 {
        return Err(Error::InvalidMeasurement(format!(
            "|X| = {} exceeds 1",
            dir.norm()
        )));
    }
    let rep = pauli_decompose(rho);
    let image = rep.theta() * x * 0.5;
    let p = image[0];
    if p < 1e-12 {
        return Err(Error::DegenerateMeasurement { probability: p });
    }
    let r = Vector3::new(image[1], image[2], image[3]) / p;
    Ok((LocalState::from_bloch_vector(r)?, p))
}

/// Writes a feature cache: a header line then `label,v1,…,vk` per record.
pub fn write_feature_cache<W: Write>(
    mut out: W,
    scheme: FeatureScheme,
    records: &[(Label, FeatureVector)],
) -> Result<()> {
    writeln!(out, "#steerhier-features v1 scheme={}", scheme.name())?;
    for (label, fv) in records {
        if fv.scheme != scheme {
            return Err(Error::SchemeMismatch {
                expected: scheme.name().into(),
                found: fv.scheme.name().into(),
            });
        }
        let mut line = label.token().to_string();
        for v in &fv.values {
            line.push(',');
            line.push_str(&fmt17(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_feature_cache<R: BufRead>(
    input: R,
    path: &Path,
) -> Result<(FeatureScheme, Vec<(Label, FeatureVector)>)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))??;
    let scheme = header
        .strip_prefix("#steerhier-features v1 scheme=")
        .ok_or_else(|| Error::Version(header.clone()))?
        .parse::<FeatureScheme>()?;
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 2;
        let mut parts = line.split(',');
        let label: Label = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|e: Error| parse_err(lineno, e.to_string()))?;
        let values = parts
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        if values.len() != scheme.len() {
            return Err(parse_err(
                lineno,
                format!("expected {} values, found {}", scheme.len(), values.len()),
            ));
        }
        records.push((label, FeatureVector { scheme, values }));
    }
    Ok((scheme, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{make_state, Family, FamilyPoint};
    use crate::linalg::eigenvalues3;
    use crate::state::{one_way_slocc, random_state};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_4;

    fn werner(q: f64) -> DensityMatrix {
        make_state(&FamilyPoint::new(Family::Type1, q, FRAC_PI_4).unwrap())
    }

    #[test]
    fn werner_ellipsoid_is_isotropic() {
        let e = ellipsoid(&werner(0.7), Party::Alice).unwrap();
        assert!((e.q - Matrix3::identity() * 0.49).abs().max() < 1e-12);
        assert!(e.center.norm() < 1e-12);
    }

    #[test]
    fn maximally_mixed_encodes_to_zero() {
        let rho = DensityMatrix::maximally_mixed();
        for scheme in FeatureScheme::ALL {
            let f = encode(&rho, scheme).unwrap();
            assert_eq!(f.values.len(), scheme.len());
            assert!(f.values.iter().all(|v| v.abs() < 1e-15), "{scheme}");
        }
        let e = ellipsoid(&rho, Party::Bob).unwrap();
        assert!(e.q.abs().max() < 1e-15 && e.center.norm() < 1e-15);
    }

    #[test]
    fn werner_lut_and_ell_features() {
        let q = 0.63;
        let lut = encode(&werner(q), FeatureScheme::LutA6).unwrap().values;
        let expect = [q, q, -q, 0.0, 0.0, 0.0];
        for (a, b) in lut.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{lut:?}");
        }
        let ell = encode(&werner(q), FeatureScheme::EllA9).unwrap().values;
        let q2 = q * q;
        let expect = [q2, 0.0, 0.0, q2, 0.0, q2, 0.0, 0.0, 0.0];
        for (a, b) in ell.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{ell:?}");
        }
    }

    #[test]
    fn type2_shares_bob_ellipsoid_with_werner() {
        for &(q, xi) in &[(0.3, 0.2), (0.6, 0.5), (0.9, 1.2), (0.45, 0.05)] {
            let rho2 = make_state(&FamilyPoint::new(Family::Type2, q, xi).unwrap());
            let a = encode(&rho2, FeatureScheme::EllB9).unwrap().values;
            let b = encode(&werner(q), FeatureScheme::EllB9).unwrap().values;
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn singular_marginal_propagates() {
        let rho = make_state(&FamilyPoint::new(Family::Type1, 1.0, 0.0).unwrap());
        assert!(matches!(
            encode(&rho, FeatureScheme::LutA6),
            Err(Error::SingularMarginal { .. })
        ));
        assert!(encode(&rho, FeatureScheme::General15).is_ok());
    }

    #[test]
    fn bell_image_along_z() {
        let bell = werner(1.0);
        let (state, p) = bob_measurement_image(&bell, &Vector4::new(1.0, 0.0, 0.0, 1.0)).unwrap();
        assert!((p - 0.5).abs() < 1e-14);
        assert!((state.bloch_vector() - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn trivial_measurement_returns_marginal() {
        let rho = random_state(&mut ChaCha8Rng::seed_from_u64(3));
        let (state, p) = bob_measurement_image(&rho, &Vector4::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert!((p - 0.5).abs() < 1e-14);
        let alice = crate::state::marginal(&rho, Party::Alice);
        assert!((state.bloch_vector() - alice.bloch_vector()).norm() < 1e-12);
        assert!(bob_measurement_image(&rho, &Vector4::new(0.5, 0.0, 0.0, 0.0)).is_err());
        assert!(bob_measurement_image(&rho, &Vector4::new(1.0, 1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn measurement_images_lie_in_alice_ellipsoid() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rho = random_state(&mut rng);
        let e = ellipsoid(&rho, Party::Alice).unwrap();
        for _ in 0..1000 {
            let dir = crate::sdp::sample_measurement(&mut rng).axis().clone();
            let r = rng.random::<f64>();
            let x = Vector4::new(1.0, r * dir[0], r * dir[1], r * dir[2]);
            let (state, _) = bob_measurement_image(&rho, &x).unwrap();
            let quad = e.quadric(&state.bloch_vector()).unwrap();
            assert!(quad <= 1.0 + 1e-8, "{quad}");
            // Extremal effects land on the surface.
            let x = Vector4::new(1.0, dir[0], dir[1], dir[2]);
            let (state, _) = bob_measurement_image(&rho, &x).unwrap();
            assert!((e.quadric(&state.bloch_vector()).unwrap() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn ellipsoid_spectrum_matches_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let rho = random_state(&mut rng);
            let e = ellipsoid(&rho, Party::Alice).unwrap();
            let ev = eigenvalues3(&e.q);
            assert!(ev[0] >= -1e-10 && ev[2] <= 1.0 + 1e-8);
            let rep = pauli_decompose(&slocc_canonicalize(&rho, Party::Bob).unwrap());
            let al = align(&rep.t(), &rep.a());
            let mut sq: Vec<f64> = al.singular.iter().map(|s| s * s).collect();
            sq.sort_by(f64::total_cmp);
            for k in 0..3 {
                assert!((sq[k] - ev[k]).abs() < 1e-10);
            }
            let prod = al.singular.iter().product::<f64>();
            assert!((prod - rep.t().determinant()).abs() < 1e-10);
            assert!(al.singular[0] >= al.singular[1].abs() && al.singular[1] >= al.singular[2].abs());
            let back = al.u * Matrix3::from_diagonal(&al.singular) * al.v.transpose();
            assert!((back - rep.t()).abs().max() < 1e-12);
            assert!(al.center[0] >= 0.0 && al.center[1] >= 0.0);
        }
    }

    #[test]
    fn feature_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let rho = random_state(&mut rng);
            for scheme in FeatureScheme::ALL {
                let f = encode(&rho, scheme).unwrap();
                assert!(f.values.iter().all(|v| v.abs() <= 1.0 + 1e-8));
            }
        }
    }

    #[test]
    fn bob_kraus_preserves_alice_ellipsoid() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..100 {
            let rho = random_state(&mut rng);
            let k = crate::linalg::Mat2::from_fn(|_, _| {
                crate::linalg::C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            let moved = one_way_slocc(&rho, Party::Bob, &k).unwrap();
            let (e0, e1) = (ellipsoid(&rho, Party::Alice).unwrap(), ellipsoid(&moved, Party::Alice).unwrap());
            assert!((e0.q - e1.q).abs().max() < 1e-8);
            assert!((e0.center - e1.center).norm() < 1e-8);
        }
    }

    #[test]
    fn general15_round_trip() {
        let rho = random_state(&mut ChaCha8Rng::seed_from_u64(25));
        let f = encode(&rho, FeatureScheme::General15).unwrap();
        let rep = crate::state::PauliRep::from_general15(&f.values).unwrap();
        let back = crate::state::pauli_compose(&rep).unwrap();
        assert!(back.max_abs_diff(&rho) < 1e-12);
    }

    #[test]
    fn scheme_tokens() {
        for s in FeatureScheme::ALL {
            assert_eq!(s.name().parse::<FeatureScheme>().unwrap(), s);
        }
        assert_eq!("LUTA-6".parse::<FeatureScheme>().unwrap(), FeatureScheme::LutA6);
        assert!("Lut7".parse::<FeatureScheme>().is_err());
    }

    #[test]
    fn cache_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let recs: Vec<_> = (0..5)
            .map(|_| (Label::Ms2, encode(&random_state(&mut rng), FeatureScheme::EllA9).unwrap()))
            .collect();
        let mut buf = Vec::new();
        write_feature_cache(&mut buf, FeatureScheme::EllA9, &recs).unwrap();
        let (scheme, back) = read_feature_cache(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(scheme, FeatureScheme::EllA9);
        assert_eq!(back, recs);
    }
}
