//! The labeling pipeline: pre-filter, the SDP iteration ladder, the coarse
//! stage, and dataset production.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::criteria::{bhqb_unsteerable, CriterionVerdict};
use crate::error::{Error, Result};
use crate::linalg::{from_bloch, to_bloch, Bloch};
use crate::sdp::{
    build_assemblage, sample_measurements, solve_lhs, validate_witness, Measurement,
    SolverConfig, VerdictKind, Witness,
};
use crate::state::{pauli_compose, pauli_decompose, ppt_is_separable, random_state, DensityMatrix, PauliRep};
use crate::textio::{fmt17, parse_err, parse_floats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Sep,
    Uns,
    Ms2,
    Ms3,
    Ms4,
    Ste,
    Dropped,
}

impl Label {
    pub const ALL: [Label; 7] = [
        Label::Sep,
        Label::Uns,
        Label::Ms2,
        Label::Ms3,
        Label::Ms4,
        Label::Ste,
        Label::Dropped,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Label::Sep => "SEP",
            Label::Uns => "UNS",
            Label::Ms2 => "MS2",
            Label::Ms3 => "MS3",
            Label::Ms4 => "MS4",
            Label::Ste => "STE",
            Label::Dropped => "DROPPED",
        }
    }

    /// Steerability rank used for borders: `SEP < UNS < STE < MS4 < MS3 < MS2`.
    /// `DROPPED` carries no rank.
    pub fn rank(self) -> Option<u8> {
        match self {
            Label::Sep => Some(0),
            Label::Uns => Some(1),
            Label::Ste => Some(2),
            Label::Ms4 => Some(3),
            Label::Ms3 => Some(4),
            Label::Ms2 => Some(5),
            Label::Dropped => None,
        }
    }

    /// Label earned by a steering certificate with `n` settings.
    pub fn for_settings(n: usize) -> Label {
        match n {
            2 => Label::Ms2,
            3 => Label::Ms3,
            4 => Label::Ms4,
            _ => Label::Ste,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Label::ALL
            .into_iter()
            .find(|l| l.token().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::Config(format!("unknown preset `{s}` (valid: paper, desk)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Rounds per fine level, keyed by settings count.
    pub budgets: BTreeMap<usize, u64>,
    pub coarse_n: usize,
    pub coarse_budget: u64,
    pub master_seed: u64,
    pub solver: SolverConfig,
    pub preset: Preset,
}

impl ProtocolConfig {
    pub fn paper(master_seed: u64) -> Self {
        ProtocolConfig {
            budgets: BTreeMap::from([(2, 900), (3, 27_000), (4, 810_000)]),
            coarse_n: 12,
            coarse_budget: 100,
            master_seed,
            solver: SolverConfig::default(),
            preset: Preset::Paper,
        }
    }

    pub fn desk(master_seed: u64) -> Self {
        ProtocolConfig {
            budgets: BTreeMap::from([(2, 200), (3, 2_000), (4, 20_000)]),
            coarse_n: 8,
            coarse_budget: 50,
            master_seed,
            solver: SolverConfig::default(),
            preset: Preset::Desk,
        }
    }

    pub fn from_preset(preset: Preset, master_seed: u64) -> Self {
        match preset {
            Preset::Paper => Self::paper(master_seed),
            Preset::Desk => Self::desk(master_seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budgets.is_empty() {
            return Err(Error::Config("no ladder levels configured".into()));
        }
        for (&n, &b) in &self.budgets {
            if !(1..=5).contains(&n) {
                return Err(Error::Config(format!("ladder level {n} outside 1..=5")));
            }
            if b == 0 {
                return Err(Error::Config(format!("budget for level {n} must be positive")));
            }
        }
        if self.coarse_n == 0 || self.coarse_n > 20 {
            return Err(Error::Config(format!("coarse_n = {} outside 1..=20", self.coarse_n)));
        }
        if self.coarse_budget == 0 {
            return Err(Error::Config("coarse budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prefilter {
    Sep,
    Uns,
    Ind,
}

pub fn prefilter(rho: &DensityMatrix) -> Prefilter {
    if ppt_is_separable(rho) {
        return Prefilter::Sep;
    }
    match bhqb_unsteerable(rho) {
        Ok(r) if r.verdict == CriterionVerdict::Unsteerable => Prefilter::Uns,
        _ => Prefilter::Ind,
    }
}

/// Steering certificate found by the ladder: Alice's axes and the witness.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub axes: Vec<Vector3<f64>>,
    pub witness: Witness,
}

impl Certificate {
    pub fn settings(&self) -> usize {
        self.axes.len()
    }

    /// Rebuilds the assemblage from `rho` and rechecks the witness.
    pub fn revalidate(&self, rho: &DensityMatrix, solver: &SolverConfig) -> bool {
        let ms: Result<Vec<_>> = self.axes.iter().map(|a| Measurement::along(*a)).collect();
        let Ok(ms) = ms else { return false };
        match build_assemblage(rho, &ms) {
            Ok(asm) => self.witness.settings() == ms.len() && validate_witness(&asm, &self.witness, solver),
            Err(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutcome {
    pub label: Label,
    /// `(settings, rounds consumed)` for every stage entered, in order.
    pub level_trace: Vec<(usize, u64)>,
    pub certificate: Option<Certificate>,
}

/// Runs `budget` rounds of `n` fresh random settings; returns the rounds
/// consumed and the first certificate found.
fn run_stage(
    rho: &DensityMatrix,
    n: usize,
    budget: u64,
    solver: &SolverConfig,
    rng: &mut ChaCha8Rng,
) -> (u64, Option<Certificate>) {
    for round in 1..=budget {
        let ms = sample_measurements(rng, n);
        let Ok(asm) = build_assemblage(rho, &ms) else { continue };
        let Ok(verdict) = solve_lhs(&asm, solver) else { continue };
        if verdict.kind == VerdictKind::Steerable {
            if let Some(witness) = verdict.witness {
                let axes = ms.iter().map(|m| *m.axis()).collect();
                return (round, Some(Certificate { axes, witness }));
            }
        }
    }
    (budget, None)
}

/// Fine-grained levels in increasing order, then the coarse stage.
pub fn sdp_ladder_detailed(rho: &DensityMatrix, cfg: &ProtocolConfig, rng: &mut ChaCha8Rng) -> LabelOutcome {
    let mut level_trace = Vec::new();
    for (&n, &budget) in &cfg.budgets {
        let (used, cert) = run_stage(rho, n, budget, &cfg.solver, rng);
        level_trace.push((n, used));
        if let Some(certificate) = cert {
            return LabelOutcome {
                label: Label::for_settings(n),
                level_trace,
                certificate: Some(certificate),
            };
        }
    }
    let (used, cert) = run_stage(rho, cfg.coarse_n, cfg.coarse_budget, &cfg.solver, rng);
    level_trace.push((cfg.coarse_n, used));
    LabelOutcome {
        label: if cert.is_some() { Label::Ste } else { Label::Dropped },
        level_trace,
        certificate: cert,
    }
}

pub fn sdp_ladder(rho: &DensityMatrix, cfg: &ProtocolConfig, rng: &mut ChaCha8Rng) -> Label {
    sdp_ladder_detailed(rho, cfg, rng).label
}

pub fn label_state_detailed(rho: &DensityMatrix, cfg: &ProtocolConfig, rng: &mut ChaCha8Rng) -> LabelOutcome {
    let short = |label| LabelOutcome {
        label,
        level_trace: Vec::new(),
        certificate: None,
    };
    match prefilter(rho) {
        Prefilter::Sep => short(Label::Sep),
        Prefilter::Uns => short(Label::Uns),
        Prefilter::Ind => sdp_ladder_detailed(rho, cfg, rng),
    }
}

pub fn label_state(rho: &DensityMatrix, cfg: &ProtocolConfig, rng: &mut ChaCha8Rng) -> Label {
    label_state_detailed(rho, cfg, rng).label
}

/// Element `index` of the splitmix64 stream started at `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub seed: u64,
    pub theta: [f64; 15],
    pub label: Label,
    pub level_trace: Vec<(usize, u64)>,
    pub certificate: Option<Certificate>,
}

impl LabeledRecord {
    pub fn state(&self) -> Result<DensityMatrix> {
        pauli_compose(&PauliRep::from_general15(&self.theta)?)
    }
}

/// Draws the state for `seed` and labels it with the same stream.
pub fn label_seed(seed: u64, cfg: &ProtocolConfig) -> LabeledRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = random_state(&mut rng);
    let outcome = label_state_detailed(&rho, cfg, &mut rng);
    LabeledRecord {
        seed,
        theta: pauli_decompose(&rho).general15(),
        label: outcome.label,
        level_trace: outcome.level_trace,
        certificate: outcome.certificate,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRun {
    /// Non-dropped records in index order.
    pub records: Vec<LabeledRecord>,
    /// Counts per label, including `DROPPED`.
    pub histogram: BTreeMap<Label, usize>,
}

/// Labels states `0..count` on the current rayon pool; the result does not
/// depend on the number of workers.
pub fn generate_dataset(count: usize, cfg: &ProtocolConfig) -> Result<DatasetRun> {
    generate_range(0..count as u64, cfg)
}

pub fn generate_range(range: std::ops::Range<u64>, cfg: &ProtocolConfig) -> Result<DatasetRun> {
    cfg.validate()?;
    let all: Vec<LabeledRecord> = range
        .into_par_iter()
        .map(|i| label_seed(derive_seed(cfg.master_seed, i), cfg))
        .collect();
    let mut histogram = BTreeMap::new();
    for r in &all {
        *histogram.entry(r.label).or_insert(0) += 1;
    }
    let records = all.into_iter().filter(|r| r.label != Label::Dropped).collect();
    Ok(DatasetRun { records, histogram })
}

/// A dataset as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub preset: Preset,
    pub records: Vec<DatasetRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub seed: u64,
    pub label: Label,
    pub theta: [f64; 15],
}

impl DatasetRecord {
    pub fn state(&self) -> Result<DensityMatrix> {
        pauli_compose(&PauliRep::from_general15(&self.theta)?)
    }
}

impl From<&LabeledRecord> for DatasetRecord {
    fn from(r: &LabeledRecord) -> Self {
        DatasetRecord {
            seed: r.seed,
            label: r.label,
            theta: r.theta,
        }
    }
}

const DATASET_HEADER: &str = "#steerhier-dataset v1 preset=";

pub fn write_dataset<'a, W: Write>(
    mut out: W,
    preset: Preset,
    records: impl IntoIterator<Item = &'a DatasetRecord>,
) -> Result<()> {
    writeln!(out, "{DATASET_HEADER}{}", preset.name())?;
    for r in records {
        if r.label == Label::Dropped {
            continue;
        }
        let mut line = format!("{:016x},{}", r.seed, r.label.token());
        for v in &r.theta {
            line.push(',');
            line.push_str(&fmt17(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R, path: &Path) -> Result<Dataset> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))??;
    let preset = header
        .strip_prefix(DATASET_HEADER)
        .ok_or_else(|| Error::Version(format!("{}: header `{header}`", path.display())))?
        .parse::<Preset>()
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 17 {
            return Err(parse_err(path, lineno, format!("expected 17 fields, found {}", fields.len())));
        }
        let seed = u64::from_str_radix(fields[0].trim(), 16)
            .map_err(|e| parse_err(path, lineno, format!("bad seed: {e}")))?;
        let label: Label = fields[1].parse().map_err(|e: Error| parse_err(path, lineno, e.to_string()))?;
        if label == Label::Dropped {
            return Err(parse_err(path, lineno, "DROPPED records are not allowed in datasets"));
        }
        let values = parse_floats(path, lineno, &fields[2..])?;
        let mut theta = [0.0; 15];
        theta.copy_from_slice(&values);
        records.push(DatasetRecord { seed, label, theta });
    }
    Ok(Dataset { preset, records })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(file), path)
}

/// Labels seeds `0, 1, 2, ...` of `cfg` in chunks until at least `min_labeled`
/// records survive. The dataset at `path` is rewritten after every chunk and a
/// `<path>.scanned` sidecar holds the number of seeds consumed, so an
/// interrupted run resumes where it stopped.
pub fn grow_dataset(path: &Path, cfg: &ProtocolConfig, min_labeled: usize, chunk: u64) -> Result<Dataset> {
    cfg.validate()?;
    if chunk == 0 {
        return Err(Error::Config("chunk must be positive".into()));
    }
    let sidecar = path.with_extension("scanned");
    let mut scanned = 0u64;
    let mut records = Vec::new();
    if path.exists() && sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar)?;
        let mut parts = text.split_whitespace();
        let master = parts.next().and_then(|t| u64::from_str_radix(t, 16).ok());
        let count = parts.next().and_then(|t| t.parse::<u64>().ok());
        let data = load_dataset(path)?;
        if let (Some(master), Some(count)) = (master, count) {
            if master == cfg.master_seed && data.preset == cfg.preset {
                let valid: std::collections::HashSet<u64> =
                    (0..count).map(|i| derive_seed(master, i)).collect();
                records = data.records.into_iter().filter(|r| valid.contains(&r.seed)).collect();
                scanned = count;
            }
        }
    }
    while records.len() < min_labeled {
        let run = generate_range(scanned..scanned + chunk, cfg)?;
        records.extend(run.records.iter().map(DatasetRecord::from));
        scanned += chunk;
        let tmp = path.with_extension("tmp");
        let mut out = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        write_dataset(&mut out, cfg.preset, &records)?;
        out.flush()?;
        drop(out);
        std::fs::rename(&tmp, path)?;
        std::fs::write(&sidecar, format!("{:016x} {scanned}\n", cfg.master_seed))?;
    }
    Ok(Dataset { preset: cfg.preset, records })
}

const CERTS_HEADER: &str = "#steerhier-certs v1";

/// Witness sidecar. Per certified record a line `seed,LABEL,n`, followed by
/// `n` lines `ux,uy,uz,F0(4 Bloch coordinates),F1(4 Bloch coordinates)`.
pub fn write_certificates<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a LabeledRecord>,
) -> Result<()> {
    writeln!(out, "{CERTS_HEADER}")?;
    for r in records {
        let Some(cert) = &r.certificate else { continue };
        writeln!(out, "{:016x},{},{}", r.seed, r.label.token(), cert.settings())?;
        for (axis, f) in cert.axes.iter().zip(&cert.witness.elements) {
            let mut vals: Vec<f64> = axis.iter().copied().collect();
            vals.extend(to_bloch(&f[0]));
            vals.extend(to_bloch(&f[1]));
            let line: Vec<String> = vals.into_iter().map(fmt17).collect();
            writeln!(out, "{}", line.join(","))?;
        }
    }
    Ok(())
}

pub fn read_certificates<R: BufRead>(input: R, path: &Path) -> Result<Vec<(u64, Label, Certificate)>> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h == CERTS_HEADER => {}
        Some((_, Ok(h))) => return Err(Error::Version(format!("{}: header `{h}`", path.display()))),
        Some((_, Err(e))) => return Err(e.into()),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut out = Vec::new();
    while let Some((idx, line)) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(path, idx + 1, "expected `seed,label,n`"));
        }
        let seed = u64::from_str_radix(fields[0], 16).map_err(|e| parse_err(path, idx + 1, e.to_string()))?;
        let label: Label = fields[1].parse()?;
        let n: usize = fields[2].parse().map_err(|_| parse_err(path, idx + 1, "bad settings count"))?;
        let mut axes = Vec::with_capacity(n);
        let mut elements = Vec::with_capacity(n);
        for _ in 0..n {
            let (j, l) = lines.next().ok_or_else(|| parse_err(path, idx + 1, "truncated certificate"))?;
            let l = l?;
            let fs: Vec<&str> = l.split(',').collect();
            if fs.len() != 11 {
                return Err(parse_err(path, j + 1, "expected 11 values"));
            }
            let v = parse_floats(path, j + 1, &fs)?;
            axes.push(Vector3::new(v[0], v[1], v[2]));
            let f0: Bloch = [v[3], v[4], v[5], v[6]];
            let f1: Bloch = [v[7], v[8], v[9], v[10]];
            elements.push([from_bloch(&f0), from_bloch(&f1)]);
        }
        out.push((seed, label, Certificate { axes, witness: Witness { elements } }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{make_state, werner, Family, FamilyPoint};
    use std::f64::consts::FRAC_PI_4;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn presets() {
        let p = ProtocolConfig::paper(1);
        assert_eq!(p.budgets, BTreeMap::from([(2, 900), (3, 27_000), (4, 810_000)]));
        assert_eq!((p.coarse_n, p.coarse_budget), (12, 100));
        let d = ProtocolConfig::desk(1);
        assert_eq!(d.budgets, BTreeMap::from([(2, 200), (3, 2_000), (4, 20_000)]));
        assert_eq!((d.coarse_n, d.coarse_budget), (8, 50));
        assert!(p.validate().is_ok() && d.validate().is_ok());
        let mut bad = d.clone();
        bad.budgets.insert(3, 0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn label_tokens_and_ranks() {
        for l in Label::ALL {
            assert_eq!(l.token().parse::<Label>().unwrap(), l);
        }
        assert!("MS9".parse::<Label>().is_err());
        assert!(Label::Ms2.rank() > Label::Ms3.rank());
        assert!(Label::Ms4.rank() > Label::Ste.rank());
        assert!(Label::Ste.rank() > Label::Uns.rank());
        assert_eq!(Label::Dropped.rank(), None);
    }

    #[test]
    fn prefilter_examples() {
        let p = |q, xi| make_state(&FamilyPoint::new(Family::Type1, q, xi).unwrap());
        assert_eq!(prefilter(&p(0.2, FRAC_PI_4)), Prefilter::Sep);
        assert_eq!(prefilter(&werner(0.45)), Prefilter::Uns);
        assert_eq!(prefilter(&werner(0.9)), Prefilter::Ind);
    }

    #[test]
    fn werner_ladder_levels() {
        let cfg = ProtocolConfig::desk(0);
        let mut r = rng(5);
        let out = label_state_detailed(&werner(0.9), &cfg, &mut r);
        assert_eq!(out.label, Label::Ms2);
        let out = label_state_detailed(&werner(0.75), &cfg, &mut r);
        assert_eq!(out.label, Label::Ms2);
        assert!(out.certificate.unwrap().revalidate(&werner(0.75), &cfg.solver));
        let out = label_state_detailed(&werner(0.65), &cfg, &mut r);
        assert_eq!(out.label, Label::Ms3);
        assert_eq!(out.level_trace[0], (2, 200));
        assert_eq!(out.level_trace.len(), 2);
        assert!(out.certificate.unwrap().revalidate(&werner(0.65), &cfg.solver));
    }

    #[test]
    fn type1_sep_region() {
        let cfg = ProtocolConfig::desk(0);
        for q in [0.1, 0.5, 0.9, 1.0] {
            let rho = make_state(&FamilyPoint::new(Family::Type1, q, 0.0).unwrap());
            assert_eq!(label_state(&rho, &cfg, &mut rng(1)), Label::Sep);
        }
        let rho = make_state(&FamilyPoint::new(Family::Type1, 0.3, FRAC_PI_4).unwrap());
        assert_eq!(label_state(&rho, &cfg, &mut rng(1)), Label::Sep);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(7, 0), derive_seed(7, 0));
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }

    #[test]
    fn grow_dataset_resumes() {
        let mut cfg = ProtocolConfig::desk(11);
        cfg.budgets = BTreeMap::from([(2, 5), (3, 5)]);
        cfg.coarse_n = 4;
        cfg.coarse_budget = 3;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.csv");
        let first = grow_dataset(&path, &cfg, 4, 3).unwrap();
        assert!(first.records.len() >= 4);
        let second = grow_dataset(&path, &cfg, first.records.len() + 3, 3).unwrap();
        assert_eq!(&second.records[..first.records.len()], &first.records[..]);
        let scanned: u64 = std::fs::read_to_string(path.with_extension("scanned"))
            .unwrap()
            .split_whitespace()
            .nth(1)
            .unwrap()
            .parse()
            .unwrap();
        let fresh: Vec<DatasetRecord> =
            generate_range(0..scanned, &cfg).unwrap().records.iter().map(DatasetRecord::from).collect();
        assert_eq!(second.records, fresh);
        assert_eq!(load_dataset(&path).unwrap().records, fresh);
    }

    #[test]
    fn small_dataset_round_trip() {
        let mut cfg = ProtocolConfig::desk(11);
        cfg.budgets = BTreeMap::from([(2, 20), (3, 20)]);
        cfg.coarse_budget = 2;
        let run = generate_dataset(40, &cfg).unwrap();
        assert_eq!(run.histogram.values().sum::<usize>(), 40);
        let recs: Vec<DatasetRecord> = run.records.iter().map(DatasetRecord::from).collect();
        let mut buf = Vec::new();
        write_dataset(&mut buf, cfg.preset, &recs).unwrap();
        let back = read_dataset(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back.records, recs);
        for r in &back.records {
            assert!(r.state().is_ok());
        }
        let mut certs = Vec::new();
        write_certificates(&mut certs, &run.records).unwrap();
        let parsed = read_certificates(&certs[..], Path::new("mem")).unwrap();
        assert_eq!(parsed.len(), run.records.iter().filter(|r| r.certificate.is_some()).count());
        for (seed, label, cert) in parsed {
            let rec = back.records.iter().find(|r| r.seed == seed).unwrap();
            assert_eq!(rec.label, label);
            assert!(cert.revalidate(&rec.state().unwrap(), &cfg.solver));
        }
    }

    #[test]
    fn corrupted_dataset_header() {
        let err = read_dataset(&b"#steerhier-dataset v9 preset=desk\n"[..], Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Version(_)));
        let err = read_dataset(
            &b"#steerhier-dataset v1 preset=desk\n0000000000000001,MS2,1,2\n"[..],
            Path::new("x"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
