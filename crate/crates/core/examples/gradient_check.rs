//! Compares reverse-mode gradients of the full model's loss against central
//! finite differences, for every named preset.
//!
//! Usage: `cargo run --release --example gradient_check`

use mime_evidence::gradcore::gradcheck::{
    check_gradients, DEFAULT_FLOOR, DEFAULT_STEP, DEFAULT_TOLERANCE,
};
use mime_evidence::model::{labels_as, ForwardHooks, MimeParams, PRESETS};
use mime_evidence::syngen::{generate, SynthConfig};

fn main() -> mime_evidence::Result<()> {
    let synth = SynthConfig {
        num_samples: 1,
        d: 8,
        n_range: (4, 4),
        ..SynthConfig::default()
    };
    let sample = generate(&synth)?.remove(0);
    let y = labels_as::<f64>(&sample.labels);

    println!("{:<18} {:>8} {:>12}", "variant", "entries", "max rel err");
    let mut all_pass = true;
    for (name, variant) in PRESETS {
        let mut p = MimeParams::<f64>::init_with_std(8, 2, *variant, 1, 0.3)?;
        let r = check_gradients(&mut p, DEFAULT_STEP, DEFAULT_FLOOR, |tape, p| {
            let b = p.bind(tape);
            let trace = b.forward(tape, &sample, ForwardHooks::default())?;
            tape.bce_with_logits(trace.logits, &y)
        })?;
        all_pass &= r.passes(DEFAULT_TOLERANCE);
        println!("{name:<18} {:>8} {:>12.2e}", r.checked, r.max_rel_error);
    }
    println!("all below {DEFAULT_TOLERANCE:e}: {all_pass}");
    Ok(())
}
