//! The two Werner-like families, hierarchy maps over `(ξ, q)`, borders, MAD,
//! and the hidden-steerability demonstration.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{encode, FeatureScheme};
use crate::linalg::{Mat4, C64};
use crate::mlp::{predict_label, MlpModel};
use crate::protocol::{derive_seed, label_state, Label, ProtocolConfig};
use crate::state::{ppt_is_separable, slocc_canonicalize, DensityMatrix, Party};
use crate::textio::{fmt17, parse_err, parse_floats};

const RANGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `q|Ψ_ξ⟩⟨Ψ_ξ| + (1−q) I/4`.
    Type1,
    /// `q|Ψ_ξ⟩⟨Ψ_ξ| + (1−q) ρ^A ⊗ I/2`.
    Type2,
}

impl Family {
    pub fn index(self) -> u8 {
        match self {
            Family::Type1 => 1,
            Family::Type2 => 2,
        }
    }

    pub fn from_index(i: u8) -> Result<Family> {
        match i {
            1 => Ok(Family::Type1),
            2 => Ok(Family::Type2),
            _ => Err(Error::Config(format!("unknown family {i} (valid: 1, 2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyPoint {
    family: Family,
    q: f64,
    xi: f64,
}

impl FamilyPoint {
    /// Requires `q ∈ [0, 1]` and `ξ ∈ [0, π/2]`.
    pub fn new(family: Family, q: f64, xi: f64) -> Result<Self> {
        if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&q) {
            return Err(Error::Config(format!("q = {q} outside [0, 1]")));
        }
        if !(-RANGE_TOL..=FRAC_PI_2 + RANGE_TOL).contains(&xi) {
            return Err(Error::Config(format!("xi = {xi} outside [0, pi/2]")));
        }
        Ok(FamilyPoint {
            family,
            q: q.clamp(0.0, 1.0),
            xi: xi.clamp(0.0, FRAC_PI_2),
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }
}

/// `cos ξ |00⟩ + sin ξ |11⟩`.
pub fn psi_xi(xi: f64) -> Vector4<C64> {
    Vector4::new(
        C64::new(xi.cos(), 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(xi.sin(), 0.0),
    )
}

pub fn make_state(p: &FamilyPoint) -> DensityMatrix {
    let (q, c, s) = (p.q, p.xi.cos(), p.xi.sin());
    let mut m = Mat4::zeros();
    m[(0, 0)] += q * c * c;
    m[(0, 3)] += q * c * s;
    m[(3, 0)] += q * c * s;
    m[(3, 3)] += q * s * s;
    match p.family {
        Family::Type1 => {
            for k in 0..4 {
                m[(k, k)] += (1.0 - q) / 4.0;
            }
        }
        Family::Type2 => {
            // ρ^A ⊗ I/2 with ρ^A = diag(cos²ξ, sin²ξ).
            for k in 0..2 {
                m[(k, k)] += (1.0 - q) * c * c / 2.0;
                m[(k + 2, k + 2)] += (1.0 - q) * s * s / 2.0;
            }
        }
    }
    let m = m.map(|v| C64::new(v.re, 0.0));
    DensityMatrix::new(m).expect("family states are valid")
}

/// The standard Werner state `ρ₁(q, π/4)`.
pub fn werner(q: f64) -> DensityMatrix {
    make_state(&FamilyPoint::new(Family::Type1, q, std::f64::consts::FRAC_PI_4).expect("q in range"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapSource {
    Protocol,
    Model(FeatureScheme),
}

impl MapSource {
    pub fn token(&self) -> String {
        match self {
            MapSource::Protocol => "protocol".into(),
            MapSource::Model(s) => format!("model:{}", s.name()),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "protocol" => Ok(MapSource::Protocol),
            other => match other.strip_prefix("model:") {
                Some(scheme) => Ok(MapSource::Model(scheme.parse()?)),
                None => Err(Error::Config(format!("unknown map source `{s}`"))),
            },
        }
    }
}

pub enum Labeler<'a> {
    Protocol(&'a ProtocolConfig),
    Model(&'a MlpModel),
}

/// Labels on a regular grid covering `[0, π/2] × [0, 1]` with both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyGrid {
    pub family: Family,
    pub n_xi: usize,
    pub n_q: usize,
    /// Column-major in ξ: `labels[i_xi * n_q + i_q]`.
    pub labels: Vec<Label>,
    pub source: MapSource,
    /// Cells whose labeler failed and were recorded as `DROPPED`.
    pub failures: Vec<(usize, usize, String)>,
}

impl HierarchyGrid {
    pub fn xi(&self, i: usize) -> f64 {
        grid_coord(i, self.n_xi) * FRAC_PI_2
    }

    pub fn q(&self, j: usize) -> f64 {
        grid_coord(j, self.n_q)
    }

    pub fn label(&self, i_xi: usize, i_q: usize) -> Label {
        self.labels[i_xi * self.n_q + i_q]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

fn grid_coord(i: usize, n: usize) -> f64 {
    if i + 1 == n {
        1.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Labels every grid cell. Protocol cells use the seed derived from the cell
/// index; model cells take `SEP` from the PPT test and the network otherwise.
pub fn compute_map(family: Family, n_xi: usize, n_q: usize, labeler: &Labeler<'_>) -> Result<HierarchyGrid> {
    if n_xi < 2 || n_q < 2 {
        return Err(Error::Config(format!("grid {n_xi}x{n_q} must be at least 2x2")));
    }
    if let Labeler::Protocol(cfg) = labeler {
        cfg.validate()?;
    }
    let source = match labeler {
        Labeler::Protocol(_) => MapSource::Protocol,
        Labeler::Model(m) => MapSource::Model(m.scheme),
    };
    let cells: Vec<std::result::Result<Label, String>> = (0..n_xi * n_q)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / n_q, cell % n_q);
            let xi = grid_coord(i, n_xi) * FRAC_PI_2;
            let q = grid_coord(j, n_q);
            let rho = make_state(&FamilyPoint::new(family, q, xi).map_err(|e| e.to_string())?);
            match labeler {
                Labeler::Protocol(cfg) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, cell as u64));
                    Ok(label_state(&rho, cfg, &mut rng))
                }
                Labeler::Model(model) => {
                    if ppt_is_separable(&rho) {
                        return Ok(Label::Sep);
                    }
                    let f = encode(&rho, model.scheme).map_err(|e| e.to_string())?;
                    predict_label(model, &f).map_err(|e| e.to_string())
                }
            }
        })
        .collect();
    let mut failures = Vec::new();
    let labels = cells
        .into_iter()
        .enumerate()
        .map(|(cell, r)| {
            r.unwrap_or_else(|msg| {
                failures.push((cell / n_q, cell % n_q, msg));
                Label::Dropped
            })
        })
        .collect();
    Ok(HierarchyGrid {
        family,
        n_xi,
        n_q,
        labels,
        source,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Border {
    pub level: Label,
    /// Smallest `q` per ξ-column whose label reaches `level`, if any.
    pub q_of_xi: Vec<Option<f64>>,
}

pub fn extract_border(grid: &HierarchyGrid, level: Label) -> Border {
    let target = level.rank().expect("border level must be rankable");
    let q_of_xi = (0..grid.n_xi)
        .map(|i| {
            (0..grid.n_q)
                .find(|&j| grid.label(i, j).rank().is_some_and(|r| r >= target))
                .map(|j| grid.q(j))
        })
        .collect();
    Border { level, q_of_xi }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MadReport {
    pub value: f64,
    pub included: usize,
    pub excluded: usize,
}

/// Mean absolute displacement over columns where both borders exist.
pub fn mad(a: &Border, b: &Border) -> Result<MadReport> {
    if a.q_of_xi.len() != b.q_of_xi.len() {
        return Err(Error::ShapeMismatch {
            expected: a.q_of_xi.len(),
            found: b.q_of_xi.len(),
        });
    }
    let diffs: Vec<f64> = a
        .q_of_xi
        .iter()
        .zip(&b.q_of_xi)
        .filter_map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).abs()))
        .collect();
    if diffs.is_empty() {
        return Err(Error::UndefinedMad);
    }
    Ok(MadReport {
        value: diffs.iter().sum::<f64>() / diffs.len() as f64,
        included: diffs.len(),
        excluded: a.q_of_xi.len() - diffs.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenSteerReport {
    pub q: f64,
    pub xi: f64,
    /// Max elementwise distance between the canonicalized `ρ₂(q, ξ)` and `ρ_W(q)`.
    pub canonical_deviation: f64,
    /// Max distance between the two EllB9 encodings.
    pub ellb9_deviation: f64,
    pub label_type2: Label,
    pub label_werner: Label,
}

impl HiddenSteerReport {
    pub fn activated(&self) -> bool {
        self.label_type2 != self.label_werner
    }
}

/// Filters `ρ₂(q, ξ)` on Alice's side back to the Werner state and labels both.
pub fn hidden_steer_demo(q: f64, xi: f64, cfg: &ProtocolConfig) -> Result<HiddenSteerReport> {
    let rho2 = make_state(&FamilyPoint::new(Family::Type2, q, xi)?);
    let rho_w = werner(q);
    let canonical = slocc_canonicalize(&rho2, Party::Alice)?;
    let e2 = encode(&rho2, FeatureScheme::EllB9)?;
    let ew = encode(&rho_w, FeatureScheme::EllB9)?;
    let ellb9_deviation = e2
        .values
        .iter()
        .zip(&ew.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let seed = derive_seed(cfg.master_seed, 0);
    let label_type2 = label_state(&rho2, cfg, &mut ChaCha8Rng::seed_from_u64(seed));
    let label_werner = label_state(&rho_w, cfg, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(HiddenSteerReport {
        q,
        xi,
        canonical_deviation: canonical.max_abs_diff(&rho_w),
        ellb9_deviation,
        label_type2,
        label_werner,
    })
}

const MAP_HEADER: &str = "#steerhier-map v1 ";

pub fn write_map<W: Write>(mut out: W, grid: &HierarchyGrid) -> Result<()> {
    writeln!(
        out,
        "{MAP_HEADER}family={} source={}",
        grid.family.index(),
        grid.source.token()
    )?;
    for i in 0..grid.n_xi {
        for j in 0..grid.n_q {
            writeln!(out, "{},{},{}", fmt17(grid.xi(i)), fmt17(grid.q(j)), grid.label(i, j))?;
        }
    }
    Ok(())
}

pub fn read_map<R: BufRead>(input: R, path: &Path) -> Result<HierarchyGrid> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))??;
    let rest = header
        .strip_prefix(MAP_HEADER)
        .ok_or_else(|| Error::Version(format!("{}: header `{header}`", path.display())))?;
    let mut family = None;
    let mut source = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("family", v)) => {
                let idx: u8 = v.parse().map_err(|_| parse_err(path, 1, "bad family"))?;
                family = Some(Family::from_index(idx)?);
            }
            Some(("source", v)) => source = Some(MapSource::parse(v)?),
            _ => return Err(parse_err(path, 1, format!("unexpected header field `{kv}`"))),
        }
    }
    let family = family.ok_or_else(|| parse_err(path, 1, "missing family"))?;
    let source = source.ok_or_else(|| parse_err(path, 1, "missing source"))?;
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, idx + 2, "expected `xi,q,label`"));
        }
        let v = parse_floats(path, idx + 2, &fields[..2])?;
        let label: Label = fields[2].parse().map_err(|e: Error| parse_err(path, idx + 2, e.to_string()))?;
        rows.push((v[0], v[1], label));
    }
    let n_q = rows.iter().take_while(|r| r.0 == rows[0].0).count();
    if n_q < 2 || rows.len() % n_q != 0 || rows.len() / n_q < 2 {
        return Err(parse_err(path, 2, "rows do not form a rectangular grid"));
    }
    Ok(HierarchyGrid {
        family,
        n_xi: rows.len() / n_q,
        n_q,
        labels: rows.into_iter().map(|r| r.2).collect(),
        source,
        failures: Vec::new(),
    })
}

pub fn label_color(label: Label) -> &'static str {
    match label {
        Label::Sep => "#f4a259",
        Label::Uns => "#e8e8e8",
        Label::Ms2 => "#3a6ea5",
        Label::Ms3 => "#5fa8d3",
        Label::Ms4 => "#6bbf59",
        Label::Ste => "#9b5de5",
        Label::Dropped => "#ffffff",
    }
}

/// Self-contained SVG: one rectangle per cell (ξ right, q up) plus border polylines.
pub fn render_svg(grid: &HierarchyGrid) -> String {
    const SIZE: f64 = 512.0;
    const PAD: f64 = 40.0;
    let cw = SIZE / grid.n_xi as f64;
    let ch = SIZE / grid.n_q as f64;
    let mut s = String::new();
    let total = SIZE + 2.0 * PAD;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    for i in 0..grid.n_xi {
        for j in 0..grid.n_q {
            let x = PAD + i as f64 * cw;
            let y = PAD + SIZE - (j + 1) as f64 * ch;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                cw + 0.01,
                ch + 0.01,
                label_color(grid.label(i, j))
            );
        }
    }
    for level in [Label::Ms2, Label::Ms3, Label::Ms4, Label::Ste] {
        let border = extract_border(grid, level);
        let pts: Vec<String> = border
            .q_of_xi
            .iter()
            .enumerate()
            .filter_map(|(i, q)| {
                let q = (*q)?;
                Some(format!("{:.3},{:.3}", PAD + (i as f64 + 0.5) * cw, PAD + SIZE * (1.0 - q)))
            })
            .collect();
        if pts.len() >= 2 {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2" stroke-opacity="0.9" data-level="{}"/>"#,
                pts.join(" "),
                if level == Label::Ste { "#4a148c" } else { "#111111" },
                level
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">xi in [0, pi/2]</text>"#,
        PAD + SIZE / 2.0,
        total - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="14" text-anchor="middle" transform="rotate(-90 14 {})">q in [0, 1]</text>"#,
        PAD + SIZE / 2.0,
        PAD + SIZE / 2.0
    );
    s.push_str("</svg>\n");
    s
}
