mod common;

use common::{random_sample, randomize};
use mime_evidence::gradcore::Tape;
use mime_evidence::model::{ForwardHooks, MimeParams, VariantSpec};
use proptest::prelude::*;

fn in_open_unit(tape: &Tape<f64>, v: mime_evidence::gradcore::Var) -> bool {
    tape.value(v).data().iter().all(|&x| x > 0.0 && x < 1.0)
}

fn config() -> impl Strategy<Value = (usize, usize, usize, f64, u64)> {
    (1usize..=4, 1usize..=6, 0.01f64..1.0, any::<u64>()).prop_flat_map(|(half, n, std, seed)| {
        let d = 2 * half;
        let heads: Vec<usize> = (1..=d).filter(|h| d % h == 0).collect();
        (
            Just(d),
            prop::sample::select(heads),
            Just(n),
            Just(std),
            Just(seed),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gates_attention_and_hidden_states_stay_in_range((d, heads, n, std, seed) in config()) {
        let mut p = MimeParams::<f64>::zeros(d, heads, VariantSpec::mime()).unwrap();
        randomize(&mut p, seed, std);
        let s = random_sample(d, n, seed / 2);
        let mut tape = Tape::new();
        let b = p.bind(&mut tape);
        let t = b.forward(&mut tape, &s, ForwardHooks::default()).unwrap();

        let gmf = t.gmf.unwrap();
        prop_assert!(in_open_unit(&tape, gmf.g_m));
        prop_assert!(in_open_unit(&tape, gmf.g_k));

        let att = t.mat.unwrap().attention;
        prop_assert_eq!(att.weights.len(), heads);
        for w in &att.weights {
            let w = tape.value(*w);
            prop_assert_eq!(w.shape(), &[n, n]);
            for r in 0..n {
                let sum: f64 = w.row_slice(r).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-5, "row sum {}", sum);
            }
        }
        let g = att.gates.unwrap();
        prop_assert!(in_open_unit(&tape, g.lambda_k));
        prop_assert!(in_open_unit(&tape, g.lambda_v));

        prop_assert_eq!(t.malstm_steps.len(), n);
        for step in &t.malstm_steps {
            prop_assert!(in_open_unit(&tape, step.meme_gate));
            prop_assert!(tape.value(step.state.h).data().iter().all(|h| h.abs() < 1.0));
        }
        prop_assert!(tape.value(t.logits).is_finite());
    }

    #[test]
    fn f32_forward_tracks_f64((d, heads, n, std, seed) in config()) {
        let mut p = MimeParams::<f64>::zeros(d, heads, VariantSpec::mime()).unwrap();
        randomize(&mut p, seed, std);
        let s = random_sample(d, n, seed / 3);
        let a = p.logits(&s).unwrap();
        let b = p.cast::<f32>().logits(&s).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - *y as f64).abs() < 1e-3 * (1.0 + x.abs()));
        }
    }
}
