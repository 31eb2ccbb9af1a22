// Target-logit transforms and batch losses of the four margin losses.

use qapm::losses::{loss_and_grad, target_logit, LossSpec, LossVariant};
use qapm::vecmath::UnitEmbedding;
use qapm::ClassId;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> qapm::Result<()> {
    println!("{:<18} {:>8} {:>8} {:>8}", "cos(theta)", "0.9", "0.5", "0.0");
    for variant in LossVariant::ALL {
        let spec = LossSpec::standard(variant);
        let t: Vec<String> = [0.9, 0.5, 0.0]
            .iter()
            .map(|c| format!("{:8.4}", target_logit(variant, *c, spec.margin)))
            .collect();
        println!("{:<18} {}", variant.name(), t.join(" "));
    }

    let protos = vec![
        (ClassId(0), UnitEmbedding::axis(3, 0)),
        (ClassId(1), UnitEmbedding::axis(3, 1)),
        (ClassId(2), UnitEmbedding::axis(3, 2)),
    ];
    let embeddings = vec![
        UnitEmbedding::normalized(&[0.9, 0.3, 0.1])?,
        UnitEmbedding::normalized(&[0.2, 0.8, 0.4])?,
    ];
    let labels = [ClassId(0), ClassId(1)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!();
    for variant in LossVariant::ALL {
        let spec = LossSpec::standard(variant);
        let out = loss_and_grad(&spec, &embeddings, &labels, &protos, &mut rng)?;
        let gnorm: f64 = out.grad_embeddings.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        println!("{:<18} loss {:8.4}  |grad| {:8.4}", variant.name(), out.loss, gnorm);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> qapm::Result<()> {
    run_example()
}
