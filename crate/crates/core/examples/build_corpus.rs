//! Grows a desk-preset corpus on disk; rerunning resumes an interrupted build.
//!
//! Usage: `build_corpus <path> [min_labeled] [master_seed]`

use std::path::PathBuf;
use std::time::Instant;

use steerhier::protocol::{grow_dataset, ProtocolConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(args.next().expect("usage: build_corpus <path> [min_labeled] [master_seed]"));
    let min: usize = args.next().map(|s| s.parse().expect("min_labeled")).unwrap_or(5_000);
    let seed: u64 = args.next().map(|s| s.parse().expect("master_seed")).unwrap_or(2024);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).expect("create directory");
    }
    let start = Instant::now();
    let data = grow_dataset(&path, &ProtocolConfig::desk(seed), min, 250).expect("corpus");
    println!("{} records in {:.0} s", data.records.len(), start.elapsed().as_secs_f64());
}
