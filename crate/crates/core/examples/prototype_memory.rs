// FIFO eviction, refresh blending and the periodic unrecognizable-identity
// prototype.

use qapm::memory::{EnqueueOutcome, PrototypeMemory};
use qapm::protogen::PrototypeCandidate;
use qapm::vecmath::UnitEmbedding;
use qapm::ClassId;

pub fn run_example() -> qapm::Result<()> {
    let mut mem = PrototypeMemory::new(3, 2, 0.2, 4)?;
    let axis = |i| UnitEmbedding::axis(2, i);

    for id in [1u64, 2, 3, 4] {
        let outcome = mem.enqueue(PrototypeCandidate { class_id: ClassId(id), embedding: axis(0) })?;
        if let EnqueueOutcome::Inserted { evicted } = outcome {
            println!("insert class {id}: evicted {evicted:?}");
        }
    }
    mem.enqueue(PrototypeCandidate { class_id: ClassId(2), embedding: axis(1) })?;
    let p2 = mem.slot(ClassId(2)).expect("class 2 is stored");
    println!("class 2 after refresh: {:?} (stamp {})", p2.embedding.as_slice(), p2.stamp);
    println!(
        "oldest to newest: {:?}",
        mem.slots_by_age().map(|s| s.class_id.0).collect::<Vec<_>>()
    );

    let batch = [UnitEmbedding::normalized(&[0.3, -1.0])?];
    for step in 0..9 {
        if mem.maybe_refresh_ui(&batch)? {
            println!("step {step}: p_ui refreshed -> {:?}", mem.ui_prototype().map(|p| p.as_slice().to_vec()));
        }
        mem.advance_step();
    }

    let bytes = mem.to_bytes();
    let restored = PrototypeMemory::read_from(bytes.as_slice())?;
    println!("checkpoint {} bytes, restored identically: {}", bytes.len(), restored.to_bytes() == bytes);
    Ok(())
}

#[allow(dead_code)]
fn main() -> qapm::Result<()> {
    run_example()
}
