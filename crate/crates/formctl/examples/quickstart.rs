//! Minimal library usage: run a shortened pentagon scenario and print the
//! cost indices.

use std::time::Instant;

fn main() {
    let mut cfg = formctl::pentagon_scenario();
    cfg.duration = 2.0;

    let started = Instant::now();
    let run = formctl::sim::run(cfg).expect("scenario runs");
    let wall = started.elapsed().as_secs_f64();

    for warning in &run.warnings {
        eprintln!("warning: {warning}");
    }
    let (nu, vartheta) = formctl::sim::metrics(&run.log);
    println!(
        "simulated 2 s in {wall:.2} s wall time; {} rows logged",
        run.log.rows.len()
    );
    println!(
        "formation-error index: {:.4} at start, {:.6} at the end",
        vartheta.first().unwrap(),
        vartheta.last().unwrap()
    );
    println!("peak control index: {:.1}", nu.iter().copied().fold(0.0f64, f64::max));
}
