//! Runs every canned experiment and prints one line per criterion. Uses its
//! own harness so the lines show up in plain `cargo test` output.

use persist_walk::experiments::{criterion_experiments, run};
use persist_walk::parallel::Workers;
use std::time::Instant;

fn main() {
    let workers = Workers::available();
    let mut lines = Vec::new();
    let mut all = true;
    for criterion in 1..=9u8 {
        let start = Instant::now();
        let mut passed = true;
        let mut ids = Vec::new();
        for e in criterion_experiments(criterion) {
            let out = run(e.id, workers).expect("listed experiment");
            for d in &out.details {
                println!("  {}: {d}", e.id);
            }
            passed &= out.passed;
            ids.push(format!("{}={}", e.id, if out.passed { "pass" } else { "fail" }));
        }
        let line = format!(
            "criterion {criterion}: {} ({}) [{:.1?}]",
            if passed { "PASS" } else { "FAIL" },
            ids.join(", "),
            start.elapsed()
        );
        println!("{line}");
        lines.push(line);
        all &= passed;
    }
    println!("---");
    for l in &lines {
        println!("{l}");
    }
    if !all {
        eprintln!("acceptance failures:\n{}", lines.join("\n"));
        std::process::exit(1);
    }
}
