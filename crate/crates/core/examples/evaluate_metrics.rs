//! Case-level metrics on hand-made predictions, then a non-learned cosine
//! baseline scored on a generated corpus.
//!
//! Usage: `cargo run --example evaluate_metrics`

use mime_evidence::dataio::Channel;
use mime_evidence::harness::evaluate_with;
use mime_evidence::metrics::evaluate_labels;
use mime_evidence::syngen::{cosine_rule, generate, SynthConfig};

fn main() -> mime_evidence::Result<()> {
    let t = true;
    let f = false;
    let pairs = vec![
        (vec![t, f, f], vec![t, f, f]), // exact
        (vec![t, t, f], vec![t, f, f]), // one false positive
        (vec![f, f, f], vec![f, t, f]), // nothing predicted
    ];
    let r = evaluate_labels(&pairs)?;
    println!("three hand cases:\n{r}");
    for (i, c) in r.per_case.iter().enumerate() {
        println!(
            "  case {i}: p {:.2} r {:.2} f1 {:.2} em {}",
            c.precision, c.recall, c.f1, c.exact_match
        );
    }

    let corpus = generate(&SynthConfig {
        num_samples: 300,
        ..SynthConfig::default()
    })?;
    for thr in [0.3, 0.5, 0.7] {
        let r = evaluate_with(&corpus, |s| cosine_rule(s, &[Channel::MmMeme], thr))?;
        println!(
            "cosine rule @ {thr}: f1 {:.4}  em {:.4}  acc {:.4}",
            r.f1, r.exact_match, r.accuracy
        );
    }
    Ok(())
}
