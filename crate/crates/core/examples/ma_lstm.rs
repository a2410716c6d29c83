//! Scans the meme-aware LSTM over a sequence and prints the per-step meme
//! gate next to the hidden state, then repeats with the meme path disabled.
//!
//! Usage: `cargo run --example ma_lstm`

use mime_evidence::gradcore::{Tape, Tensor};
use mime_evidence::malstm::{malstm_forward, MaLstmParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mime_evidence::Result<()> {
    let (d, n) = (6, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut params = MaLstmParams::<f64>::init(d, 0.4, &mut rng);
    let xs = Tensor::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let meme = Tensor::from_fn(1, d, |_, _| rng.random_range(-1.0..1.0));

    for scale in [1.0, 0.0] {
        params.meme_scale = scale;
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let x = tape.constant(xs.clone());
        let m = tape.constant(meme.clone());
        let (hs, steps) = malstm_forward(&mut tape, x, m, &vars)?;
        println!("meme_scale {scale}");
        for (t, step) in steps.iter().enumerate() {
            let p = tape.value(step.meme_gate).data();
            let mean_p = p.iter().sum::<f64>() / p.len() as f64;
            println!(
                "  t={t}  mean p_t {mean_p:.3}  h_t {:.3?}",
                tape.value(hs).row_slice(t)
            );
        }
    }
    Ok(())
}
