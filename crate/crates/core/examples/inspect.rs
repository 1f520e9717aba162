//! Runs one persisted search and prints its report and directives.
//!
//! Usage: `inspect <out_dir> <seed> [suite]`

use rwsearch::orchestrator::{search_to_dir, write_report, RunConfig, RunDirectory, Suite};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = std::path::PathBuf::from(&args[0]);
    let seed: u64 = args[1].parse().unwrap();
    let suite: Suite = args.get(2).map_or(Suite::Off500, |s| s.parse().unwrap());
    let cfg = suite.apply(&RunConfig { seed, ..RunConfig::default() });
    let _ = std::fs::remove_dir_all(&out);
    search_to_dir(&cfg, &out, None).unwrap();
    let dir = RunDirectory::new(&out, rwsearch::analyzer::RenderMode::Full);
    println!("{}", write_report(&dir).unwrap());
    for meta in dir.metas().unwrap() {
        println!("--- generation {} suggestions:\n{}", meta.generation, meta.suggestions);
        let text = std::fs::read_to_string(dir.iteration_dir(meta.generation).join("summary.txt")).unwrap();
        for line in text.lines().filter(|l| l.starts_with("group") || l.starts_with("eval") || l.starts_with("dominant")) {
            println!("{line}");
        }
    }
}
