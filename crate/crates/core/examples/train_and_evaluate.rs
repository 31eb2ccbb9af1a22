// Trains plain PM and quality-aware PM on the same data and evaluates both.
//
// `cargo run --release --example train_and_evaluate -- [steps] [seed]`

use qapm::evalbench::Experiment;
use qapm::protogen::Estimator;
use qapm::trainer::LrSchedule;

pub fn run(steps: u64, seed: u64) -> qapm::Result<()> {
    let mut base = Experiment::default().with_seed(seed);
    base.train.total_steps = steps;
    base.train.lr_schedule = LrSchedule::step_decay(0.1, steps);
    println!("{:<12} {:>8} {:>8} {:>10} {:>8} {:>8}", "estimator", "verif", "top1", "angle", "auc", "norm-auc");
    for est in [Estimator::Plain, Estimator::FeatureNorm, Estimator::RecogSoft, Estimator::RecogHard] {
        let mut e = base.clone();
        e.train.estimator = est;
        let r = e.run()?;
        println!(
            "{:<12} {:8.4} {:8.4} {:8.3}deg {:8.4} {:8.4}",
            est.name(),
            r.verification_accuracy,
            r.identification_top1,
            r.mean_prototype_angle_deg,
            r.estimator_auc,
            r.feature_norm_auc
        );
    }
    Ok(())
}

pub fn run_example() -> qapm::Result<()> {
    run(100, 0)
}

#[allow(dead_code)]
fn main() -> qapm::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    run(args.first().copied().unwrap_or(2000), args.get(1).copied().unwrap_or(0))
}
