use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use steerhier::atlas::{
    compute_map, hidden_steer_demo, make_state, render_svg, write_map, Family, FamilyPoint, Labeler, MapSource,
};
use steerhier::features::{encode, FeatureScheme};
use steerhier::mlp::{build_samples, evaluate, load_model, partition, predict, save_model, train, TrainConfig, CLASSES};
use steerhier::protocol::{
    derive_seed, generate_range, label_state_detailed, load_dataset, write_certificates, write_dataset, DatasetRecord,
    Preset, ProtocolConfig,
};
use steerhier::state::{pauli_compose, PauliRep};
use steerhier::{Error, Result};

use crate::config::{parse_count, parse_grid, parse_hidden, CliConfig};
use crate::{Command, ProtocolArgs};

/// States per run above which the paper preset warns about runtime.
const PAPER_WARN_COUNT: u64 = 1_000;

pub fn init_threads(flag: Option<usize>, conf: &CliConfig) -> Result<()> {
    let env = match std::env::var("STEERHIER_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("STEERHIER_THREADS=`{v}` is not a thread count")))?,
        ),
        Err(_) => None,
    };
    let threads = conf.pick_opt("threads", flag.or(env))?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    }
    Ok(())
}

pub fn run(command: Command, conf: &CliConfig) -> Result<()> {
    match command {
        Command::Gen {
            count,
            protocol,
            out,
            certs,
            dry_run,
        } => {
            let count = match conf.raw("count") {
                Some(v) => parse_count(v).map_err(Error::Config)?,
                None => count,
            };
            cmd_gen(count, &protocol, conf, &path_key(conf, "out", out), certs, dry_run)
        }
        Command::Label {
            theta,
            family,
            q,
            xi,
            protocol,
        } => cmd_label(theta, family, q, xi, &protocol_config(&protocol, conf)?),
        Command::Train {
            data,
            scheme,
            out,
            epochs,
            batch_size,
            learning_rate,
            momentum,
            hidden,
            train_seed,
            validation_fraction,
            patience,
            eval_after,
        } => {
            let hidden = parse_hidden(conf.raw("hidden").unwrap_or(&hidden)).map_err(Error::Config)?;
            let cfg = TrainConfig {
                epochs: conf.pick("epochs", epochs)?,
                batch_size: conf.pick("batch_size", batch_size)?,
                learning_rate: conf.pick("learning_rate", learning_rate)?,
                momentum: conf.pick("momentum", momentum)?,
                seed: conf.pick("train_seed", train_seed)?,
                validation_fraction: conf.pick("validation_fraction", validation_fraction)?,
                early_stop_patience: conf.pick("patience", patience)?,
                hidden,
                class_weighting: conf.pick("class_weighting", true)?,
            };
            let scheme: FeatureScheme = conf.pick("scheme", scheme)?.parse()?;
            cmd_train(
                &path_key(conf, "data", data),
                scheme,
                &path_key(conf, "out", out),
                &cfg,
                eval_after,
            )
        }
        Command::Evaluate {
            model,
            data,
            split,
            validation_fraction,
        } => cmd_evaluate(
            &path_key(conf, "model", model),
            &path_key(conf, "data", data),
            &split,
            conf.pick("validation_fraction", validation_fraction)?,
        ),
        Command::Map {
            family,
            source,
            grid,
            model,
            protocol,
            out,
            svg,
        } => {
            let grid = match conf.raw("grid") {
                Some(v) => parse_grid(v).map_err(Error::Config)?,
                None => grid,
            };
            let family = Family::from_index(conf.pick("family", family)?)?;
            let source = MapSource::parse(&conf.pick("source", source)?)?;
            let model = conf.pick_opt("model", model)?;
            let svg = conf.pick_opt("svg", svg)?;
            let cfg = protocol_config(&protocol, conf)?;
            cmd_map(family, source, grid, model.as_deref(), &cfg, &path_key(conf, "out", out), svg.as_deref())
        }
        Command::Predict { model, theta } => cmd_predict(&path_key(conf, "model", model), &theta),
        Command::DemoHidden { q, xi, protocol } => cmd_demo_hidden(q, xi, &protocol_config(&protocol, conf)?),
    }
}

fn path_key(conf: &CliConfig, key: &str, flag: PathBuf) -> PathBuf {
    conf.raw(key).map(PathBuf::from).unwrap_or(flag)
}

/// Fails early when `path` cannot be created, before any long computation.
fn check_writable(path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        return Err(io_error(format!("output directory {} does not exist", dir.display())));
    }
    if path.is_dir() {
        return Err(io_error(format!("output path {} is a directory", path.display())));
    }
    Ok(())
}

fn check_readable(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(io_error(format!("input file {} does not exist", path.display())));
    }
    Ok(())
}

fn io_error(msg: String) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, msg))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn protocol_config(args: &ProtocolArgs, conf: &CliConfig) -> Result<ProtocolConfig> {
    let preset: Preset = conf.pick("preset", args.preset.clone())?.parse()?;
    let mut cfg = ProtocolConfig::from_preset(preset, conf.pick("seed", args.seed)?);
    for level in 2..=5usize {
        if let Some(b) = conf.get::<u64>(&format!("budget.{level}"))? {
            cfg.budgets.insert(level, b);
        }
    }
    cfg.coarse_n = conf.pick("coarse_n", cfg.coarse_n)?;
    cfg.coarse_budget = conf.pick("coarse_budget", cfg.coarse_budget)?;
    cfg.solver.eps_psd = conf.pick("eps_psd", cfg.solver.eps_psd)?;
    cfg.solver.eps_eq = conf.pick("eps_eq", cfg.solver.eps_eq)?;
    cfg.solver.eps_feas = conf.pick("eps_feas", cfg.solver.eps_feas)?;
    cfg.solver.margin = conf.pick("margin", cfg.solver.margin)?;
    cfg.solver.max_iterations = conf.pick("max_iterations", cfg.solver.max_iterations)?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_gen(
    count: u64,
    protocol: &ProtocolArgs,
    conf: &CliConfig,
    out: &Path,
    certs: Option<PathBuf>,
    dry_run: bool,
) -> Result<()> {
    let cfg = protocol_config(protocol, conf)?;
    let certs = conf.pick_opt("certs", certs)?;
    check_writable(out)?;
    if let Some(c) = &certs {
        check_writable(c)?;
    }
    if cfg.preset == Preset::Paper && count > PAPER_WARN_COUNT {
        eprintln!(
            "warning: paper budgets on {count} states may take days; the desk preset is the default for large runs"
        );
    }
    if dry_run {
        println!(
            "would label {count} states with the {} preset (seed {}) -> {}",
            cfg.preset.name(),
            cfg.master_seed,
            out.display()
        );
        return Ok(());
    }
    let start = Instant::now();
    let run = generate_range(0..count, &cfg)?;
    let records: Vec<DatasetRecord> = run.records.iter().map(DatasetRecord::from).collect();
    let mut w = create(out)?;
    write_dataset(&mut w, cfg.preset, &records)?;
    w.flush()?;
    if let Some(c) = &certs {
        let mut w = create(c)?;
        write_certificates(&mut w, &run.records)?;
        w.flush()?;
    }
    println!(
        "{} of {count} states labeled in {:.1} s -> {}",
        records.len(),
        start.elapsed().as_secs_f64(),
        out.display()
    );
    for (label, n) in &run.histogram {
        println!("  {label:<8} {n}");
    }
    Ok(())
}

fn cmd_label(
    theta: Option<Vec<f64>>,
    family: Option<u8>,
    q: Option<f64>,
    xi: Option<f64>,
    cfg: &ProtocolConfig,
) -> Result<()> {
    let rho = match (theta, family, q, xi) {
        (Some(t), _, _, _) => pauli_compose(&PauliRep::from_general15(&t)?)?,
        (None, Some(f), Some(q), Some(xi)) => make_state(&FamilyPoint::new(Family::from_index(f)?, q, xi)?),
        _ => return Err(Error::Config("give either --theta or --family with --q and --xi".into())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, 0));
    let outcome = label_state_detailed(&rho, cfg, &mut rng);
    let trace: Vec<String> = outcome.level_trace.iter().map(|(n, k)| format!("{n}:{k}")).collect();
    print!("{}", outcome.label);
    if !trace.is_empty() {
        print!(" rounds={}", trace.join(","));
    }
    if let Some(c) = &outcome.certificate {
        print!(" witness_settings={}", c.settings());
    }
    println!();
    Ok(())
}

fn cmd_train(data: &Path, scheme: FeatureScheme, out: &Path, cfg: &TrainConfig, eval_after: bool) -> Result<()> {
    cfg.validate()?;
    check_readable(data)?;
    check_writable(out)?;
    let dataset = load_dataset(data)?;
    let (samples, skipped) = build_samples(&dataset.records, scheme);
    if skipped > 0 {
        eprintln!("warning: {skipped} records could not be encoded under {scheme} and were skipped");
    }
    let outcome = train(&samples, scheme, cfg)?;
    save_model(&outcome.model, out)?;
    println!(
        "scheme {scheme}: {} samples, best epoch {}, validation accuracy {:.4} -> {}",
        samples.len(),
        outcome.best_epoch,
        outcome.validation_accuracy,
        out.display()
    );
    if eval_after {
        let (_, _, test) = partition(&samples, cfg.validation_fraction);
        print!("{}", evaluate(&outcome.model, &test).render());
    }
    Ok(())
}

fn cmd_evaluate(model: &Path, data: &Path, split: &str, vf: f64) -> Result<()> {
    check_readable(model)?;
    check_readable(data)?;
    if !(vf > 0.0 && vf <= 0.5) {
        return Err(Error::Config("validation fraction must lie in (0, 0.5]".into()));
    }
    let model = load_model(model)?;
    let dataset = load_dataset(data)?;
    let (samples, skipped) = build_samples(&dataset.records, model.scheme);
    if skipped > 0 {
        eprintln!("warning: {skipped} records could not be encoded and were skipped");
    }
    let (tr, va, te) = partition(&samples, vf);
    let chosen = match split {
        "test" => te,
        "validation" => va,
        "train" => tr,
        "all" => samples,
        other => return Err(Error::Config(format!("unknown split `{other}` (valid: test, validation, train, all)"))),
    };
    print!("{}", evaluate(&model, &chosen).render());
    Ok(())
}

fn cmd_map(
    family: Family,
    source: MapSource,
    (n_xi, n_q): (usize, usize),
    model_path: Option<&Path>,
    cfg: &ProtocolConfig,
    out: &Path,
    svg: Option<&Path>,
) -> Result<()> {
    check_writable(out)?;
    if let Some(s) = svg {
        check_writable(s)?;
    }
    let model = match &source {
        MapSource::Protocol => None,
        MapSource::Model(scheme) => {
            let path = model_path.ok_or_else(|| Error::Config("model sources need --model".into()))?;
            check_readable(path)?;
            let m = load_model(path)?;
            if m.scheme != *scheme {
                return Err(Error::SchemeMismatch {
                    expected: m.scheme.to_string(),
                    found: scheme.to_string(),
                });
            }
            Some(m)
        }
    };
    let labeler = match &model {
        Some(m) => Labeler::Model(m),
        None => Labeler::Protocol(cfg),
    };
    let grid = compute_map(family, n_xi, n_q, &labeler)?;
    let mut w = create(out)?;
    write_map(&mut w, &grid)?;
    w.flush()?;
    if let Some(s) = svg {
        std::fs::write(s, render_svg(&grid))?;
    }
    for (i, j, msg) in &grid.failures {
        eprintln!("warning: cell (xi {i}, q {j}) dropped: {msg}");
    }
    println!("{n_xi}x{n_q} map of family {} -> {}", family.index(), out.display());
    Ok(())
}

fn cmd_predict(model: &Path, theta: &[f64]) -> Result<()> {
    check_readable(model)?;
    let model = load_model(model)?;
    let rho = pauli_compose(&PauliRep::from_general15(theta)?)?;
    let probs = predict(&model, &encode(&rho, model.scheme)?)?;
    let best = (0..probs.len()).fold(0, |b, k| if probs[k] > probs[b] { k } else { b });
    let parts: Vec<String> = CLASSES
        .iter()
        .zip(&probs)
        .map(|(l, p)| format!("{}={p:.6}", l.token()))
        .collect();
    println!("{} {}", CLASSES[best], parts.join(" "));
    Ok(())
}

fn cmd_demo_hidden(q: f64, xi: f64, cfg: &ProtocolConfig) -> Result<()> {
    let r = hidden_steer_demo(q, xi, cfg)?;
    println!("type-2 state q={q} xi={xi}");
    println!(
        "  1. Alice-side filtering maps it to the Werner state: max deviation {:.3e}, EllB9 deviation {:.3e}",
        r.canonical_deviation, r.ellb9_deviation
    );
    println!("  2. labels: type-2 {}, filtered (Werner) {}", r.label_type2, r.label_werner);
    println!(
        "  3. hidden steering {}",
        if r.activated() { "activated by the filter" } else { "not activated" }
    );
    Ok(())
}
