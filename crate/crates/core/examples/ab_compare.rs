// Paired comparison of PM and QA-PM over several seeds, printed as the CSV
// the `compare` subcommand writes.
//
// `cargo run --release --example ab_compare -- [seeds] [steps]`

use qapm::evalbench::{ab_compare, Experiment};
use qapm::protogen::Estimator;
use qapm::trainer::LrSchedule;

pub fn run(num_seeds: u64, steps: u64) -> qapm::Result<()> {
    let mut base = Experiment::default();
    base.train.estimator = Estimator::Plain;
    base.train.total_steps = steps;
    base.train.lr_schedule = LrSchedule::step_decay(0.1, steps);
    let mut variant = base.clone();
    variant.train.estimator = Estimator::RecogSoft;

    let seeds: Vec<u64> = (0..num_seeds).collect();
    let report = ab_compare(&base, &variant, &seeds)?;
    report.write_csv(std::io::stdout().lock())?;
    println!();
    for (metric, s) in &report.summary {
        println!(
            "{metric:<26} {:+.5}  wins {:>2}  ties {:>2}  losses {:>2}",
            s.mean_delta, s.wins, s.ties, s.losses
        );
    }
    Ok(())
}

pub fn run_example() -> qapm::Result<()> {
    run(2, 60)
}

#[allow(dead_code)]
fn main() -> qapm::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    run(args.first().copied().unwrap_or(10), args.get(1).copied().unwrap_or(2000))
}
