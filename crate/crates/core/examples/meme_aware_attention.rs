//! Runs one meme-aware transformer block over a few sentences and compares
//! it to plain attention with the meme gates switched off.
//!
//! Usage: `cargo run --example meme_aware_attention`

use mime_evidence::gradcore::{Tape, Tensor};
use mime_evidence::mat::{mat_encode, GateMode, MatParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mime_evidence::Result<()> {
    let (d, heads, n) = (8, 2, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = MatParams::<f64>::init(d, heads, 0.3, &mut rng)?;
    let h_c = Tensor::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let meme = Tensor::from_fn(1, d, |_, _| rng.random_range(-1.0..1.0));

    for mode in [GateMode::Learned, GateMode::Off] {
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let h = tape.constant(h_c.clone());
        let m = tape.constant(meme.clone());
        let out = mat_encode(&mut tape, h, m, &vars, mode)?;
        println!("gates {mode:?}");
        if let Some(g) = out.attention.gates {
            println!("  λ_k rows:");
            for r in 0..n {
                println!("    {:.3?}", tape.value(g.lambda_k).row_slice(r));
            }
        }
        let w = tape.value(out.attention.weights[0]);
        println!("  head 0 attention:");
        for r in 0..n {
            println!("    {:.3?}", w.row_slice(r));
        }
        println!(
            "  output row 0: {:.3?}",
            tape.value(out.output).row_slice(0)
        );
    }
    Ok(())
}
