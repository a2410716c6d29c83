//! Builds a knowledge vector by average-pooling word vectors, then fuses it
//! with a meme vector through the two sigmoid gates.
//!
//! Usage: `cargo run --example knowledge_fusion`

use mime_evidence::dataio::pseudo_encode;
use mime_evidence::kme::{knowledge_repr, GmfParams, KnowledgeTable};
use mime_evidence::INIT_STD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mime_evidence::Result<()> {
    let d = 8;
    let words: Vec<String> = ["dog", "fire", "coffee", "meme"]
        .iter()
        .map(|w| w.to_string())
        .collect();
    let rows: Vec<f32> = words
        .iter()
        .flat_map(|w| pseudo_encode(w, d).data().to_vec())
        .collect();
    let table = KnowledgeTable::new(&words, mime_evidence::gradcore::Tensor::matrix(4, d, rows))?;

    // "unicorn" is unknown: it adds zero but still counts toward the mean.
    let h_k = knowledge_repr(&["Dog", "fire", "unicorn"], &table);
    let h_m = pseudo_encode("this is fine", d);
    println!("H_k = {:?}", h_k.data());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (label, std) in [("training init", INIT_STD), ("wider init", 1.0)] {
        let gmf = GmfParams::<f32>::init(d, std, &mut rng);
        let (fused, g_m, g_k) = gmf.fuse(&h_m, &h_k)?;
        println!("\n{label} (std {std})");
        println!("  g_m   = {:.3?}", g_m.data());
        println!("  g_k   = {:.3?}", g_k.data());
        println!("  Ĥ_m   = {:.3?}", fused.data());
    }
    Ok(())
}
