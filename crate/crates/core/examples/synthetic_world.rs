// Builds the synthetic identity world and a dataset, and reports how
// corruption moves latent embeddings.

use qapm::synthdata::{make_dataset, make_world, DatasetSpec, WorldConfig};
use qapm::vecmath::cosine_similarity;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> qapm::Result<()> {
    let world = make_world(&WorldConfig { num_identities: 50, ..WorldConfig::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let id = qapm::ClassId(0);
    let center = world.center(id)?;
    let u = world.unrecognizable_direction();
    println!("strength  cos(center)  cos(unrecognizable)");
    for strength in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (mut to_c, mut to_u) = (0.0, 0.0);
        for _ in 0..200 {
            let z = world.latent(id, strength, &mut rng)?;
            to_c += cosine_similarity(&z, center) / 200.0;
            to_u += cosine_similarity(&z, u) / 200.0;
        }
        println!("{strength:8.2}  {to_c:11.3}  {to_u:19.3}");
    }

    let spec = DatasetSpec {
        images_per_identity: 10,
        policy: world.config().corruption_policy(),
        unrecognizable_pool: 64,
        seed: 1,
    };
    let (dataset, manifest) = make_dataset(&world, &spec)?;
    println!(
        "\n{} samples: {} corrupted, {} unrecognizable",
        manifest.num_samples, manifest.num_corrupted, manifest.num_unrecognizable
    );
    let mut text = Vec::new();
    dataset.write_to(&mut text)?;
    let header = String::from_utf8_lossy(&text[..text.iter().position(|b| *b == b'\n').unwrap_or(0)]).into_owned();
    println!("file header: {header}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> qapm::Result<()> {
    run_example()
}
