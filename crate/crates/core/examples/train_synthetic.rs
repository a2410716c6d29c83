//! Trains MIME on a generated fusion-mode corpus and prints the run report.
//!
//! Usage: `cargo run --release --example train_synthetic -- [lr] [epochs] [variant] [mode] [seed]`

use mime_evidence::harness::{train_on, TrainConfig};
use mime_evidence::model::VariantSpec;
use mime_evidence::syngen::{generate_splits, SynthConfig, SynthMode};

fn main() -> mime_evidence::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let lr = args.first().map_or(1e-2, |s| s.parse().expect("lr"));
    let epochs = args.get(1).map_or(20, |s| s.parse().expect("epochs"));
    let variant = args
        .get(2)
        .map_or(Ok(VariantSpec::mime()), |s| VariantSpec::preset(s))?;
    let mode: SynthMode = args.get(3).map_or(Ok(SynthMode::Fusion), |s| s.parse())?;
    let seed = args.get(4).map_or(42, |s| s.parse().expect("seed"));

    let synth = SynthConfig {
        mode,
        ..SynthConfig::default()
    };
    let splits = generate_splits(&synth, 1000, 100, 100)?;
    let cfg = TrainConfig {
        seed,
        lr,
        epochs,
        variant,
        ..TrainConfig::default()
    };
    let out = train_on(&cfg, &splits.train, &splits.val, &splits.test)?;
    println!("{}", out.report.to_text());
    Ok(())
}
