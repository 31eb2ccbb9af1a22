// Plain, quality-weighted and hard prototypes for one class whose batch
// contains a corrupted exemplar.

use qapm::protogen::{
    generate_prototype_basic, generate_prototype_qa, quality_feature_norm, quality_recognizability,
    select_hard_prototype,
};
use qapm::vecmath::{angle_degrees, l2_normalize, RawEmbedding, UnitEmbedding};

pub fn run_example() -> qapm::Result<()> {
    let center = UnitEmbedding::normalized(&[1.0, 0.2, 0.0, 0.0])?;
    let p_ui = UnitEmbedding::normalized(&[0.0, 0.0, 0.0, 1.0])?;

    // three clean exemplars and one dragged toward p_ui with a smaller norm
    let raw = vec![
        RawEmbedding::new(vec![3.0, 0.7, 0.2, 0.0])?,
        RawEmbedding::new(vec![2.9, 0.5, -0.2, 0.1])?,
        RawEmbedding::new(vec![3.1, 0.6, 0.0, -0.1])?,
        RawEmbedding::new(vec![0.6, 0.1, 0.1, 1.2])?,
    ];
    let unit = raw.iter().map(l2_normalize).collect::<qapm::Result<Vec<_>>>()?;

    let norm_q = quality_feature_norm(&raw)?;
    let recog_q = quality_recognizability(&unit, &p_ui);
    println!("exemplar  norm-q  recog-q");
    for (i, (n, r)) in norm_q.iter().zip(&recog_q).enumerate() {
        println!("{i:>8}  {:.3}   {:.3}", n.value(), r.value());
    }

    let candidates = [
        ("plain mean", generate_prototype_basic(&unit)?),
        ("feature norm", generate_prototype_qa(&unit, &norm_q)?),
        ("recognizability", generate_prototype_qa(&unit, &recog_q)?),
        ("hard", select_hard_prototype(&unit, &recog_q)?),
    ];
    println!("\nangle to the true center:");
    for (name, proto) in &candidates {
        println!("  {name:<16} {:6.2} deg", angle_degrees(proto, &center));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> qapm::Result<()> {
    run_example()
}
