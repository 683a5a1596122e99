//! Times `solve_lhs` on random states for a range of setting counts.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use steerhier::sdp::{build_assemblage, sample_measurements, solve_lhs, SolverConfig, VerdictKind};
use steerhier::state::random_state;

fn main() {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [2usize, 3, 4, 8, 12] {
        let reps = if n >= 12 { 20 } else if n >= 8 { 200 } else { 2000 };
        let mut counts = [0usize; 3];
        let mut iters = 0;
        let start = Instant::now();
        for _ in 0..reps {
            let rho = random_state(&mut rng);
            let asm = build_assemblage(&rho, &sample_measurements(&mut rng, n)).unwrap();
            let v = solve_lhs(&asm, &cfg).unwrap();
            iters += v.iterations;
            counts[match v.kind {
                VerdictKind::Steerable => 0,
                VerdictKind::Unsteerable => 1,
                VerdictKind::Indeterminate => 2,
            }] += 1;
        }
        let per = start.elapsed().as_secs_f64() / reps as f64;
        println!(
            "n={n:2} {:8.1} us/solve  mean newton {:5.1}  steer/uns/ind {:?}",
            per * 1e6,
            iters as f64 / reps as f64,
            counts
        );
    }
}
