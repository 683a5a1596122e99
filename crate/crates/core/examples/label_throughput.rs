//! Desk-preset labeling rate and label histogram on random states.

use std::time::Instant;

use steerhier::protocol::{generate_range, ProtocolConfig};

fn main() {
    let count: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let cfg = ProtocolConfig::desk(2024);
    let start = Instant::now();
    let run = generate_range(0..count, &cfg).expect("valid config");
    let secs = start.elapsed().as_secs_f64();
    println!("{count} states in {secs:.1} s ({:.1} ms/state)", 1e3 * secs / count as f64);
    for (label, n) in &run.histogram {
        println!("  {label:<8} {n}");
    }
}
