//! Runs experiment suites over consecutive seeds and prints the table.
//!
//! Usage: `sweep [seeds] [first_seed] [suite ...]`

use rwsearch::orchestrator::{run_experiment, RunConfig, Suite};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: u32 = args.first().and_then(|a| a.parse().ok()).unwrap_or(5);
    let first: u64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let suites: Vec<Suite> = if args.len() > 2 {
        args[2..].iter().map(|s| s.parse().expect("suite name")).collect()
    } else {
        Suite::ALL.to_vec()
    };
    let base = RunConfig {
        seed: first,
        ..RunConfig::default()
    };
    for suite in suites {
        let start = std::time::Instant::now();
        let row = run_experiment(&base, suite, n).expect("experiment runs");
        println!("{}  ({:.1}s)", row.table_line(), start.elapsed().as_secs_f64());
        for (seed, s) in row.seeds.iter().zip(&row.summaries) {
            let traj: Vec<String> = s.ratio_trajectory.iter().map(|r| format!("{r:.2}")).collect();
            let monotone = s.ratio_trajectory.windows(2).all(|w| w[1] >= w[0]);
            println!(
                "  seed {seed}: it {:?} archive {} monotone {monotone} ratios [{}]",
                s.iterations_to_success,
                s.archive_size,
                traj.join(" ")
            );
        }
    }
}
