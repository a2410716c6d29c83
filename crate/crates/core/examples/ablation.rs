//! Trains the component ablation variants on a knowledge-mode corpus, where
//! the evidence signal is only reachable through the knowledge channel, and
//! prints the mean ± std table.
//!
//! Usage: `cargo run --release --example ablation -- [epochs] [seeds]`

use mime_evidence::harness::{ablation_sweep, presets, TrainConfig};
use mime_evidence::syngen::{generate_splits, SynthConfig, SynthMode};

fn main() -> mime_evidence::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = args.first().map_or(10, |s| s.parse().expect("epochs"));
    let n_seeds: u64 = args.get(1).map_or(3, |s| s.parse().expect("seeds"));

    let synth = SynthConfig {
        mode: SynthMode::Knowledge,
        d: 16,
        ..SynthConfig::default()
    };
    let s = generate_splits(&synth, 400, 50, 100)?;
    let cfg = TrainConfig {
        d: 16,
        heads: 2,
        epochs,
        lr: 1e-2,
        ..TrainConfig::default()
    };
    let variants = presets(&[
        "base",
        "+kme",
        "+mat",
        "+ma-lstm",
        "-mat+t",
        "-ma-lstm+bilstm",
        "-ma-lstm",
        "-kme",
        "mime",
    ])?;
    let seeds: Vec<u64> = (1..=n_seeds).collect();
    let table = ablation_sweep(&cfg, &variants, &seeds, &s.train, &s.val, &s.test)?;
    println!("{}", table.to_text());
    Ok(())
}
