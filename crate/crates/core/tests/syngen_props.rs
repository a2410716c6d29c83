use std::fs;

use mime_evidence::dataio::{load_corpus, Channel, MemeSample};
use mime_evidence::harness::evaluate_with;
use mime_evidence::syngen::{cosine_rule, generate, generate_to_dir, SynthConfig, SynthMode};

fn base_rate(corpus: &[MemeSample]) -> f64 {
    let pos: usize = corpus.iter().map(|s| s.positives()).sum();
    let all: usize = corpus.iter().map(|s| s.n()).sum();
    pos as f64 / all as f64
}

fn cfg(mode: SynthMode) -> SynthConfig {
    SynthConfig {
        mode,
        ..SynthConfig::default()
    }
}

#[test]
fn base_rate_matches_config() {
    for mode in [SynthMode::Fusion, SynthMode::Knowledge, SynthMode::TextOnly] {
        let c = cfg(mode);
        let corpus = generate(&c).unwrap();
        assert_eq!(corpus.len(), 1000);
        assert!((base_rate(&corpus) - c.expected_base_rate()).abs() < 0.02);
    }
}

#[test]
fn cosine_rule_finds_planted_evidence() {
    let corpus = generate(&cfg(SynthMode::Fusion)).unwrap();
    let r = evaluate_with(&corpus, |s| cosine_rule(s, &[Channel::MmMeme], 0.5)).unwrap();
    assert!((0.7..=1.0).contains(&r.f1), "cosine-rule f1 {}", r.f1);

    let corpus = generate(&cfg(SynthMode::TextOnly)).unwrap();
    let r = evaluate_with(&corpus, |s| cosine_rule(s, &[Channel::TextMeme], 0.5)).unwrap();
    assert!((0.7..=1.0).contains(&r.f1), "text-only f1 {}", r.f1);
}

#[test]
fn knowledge_signal_lives_only_in_knowledge_channel() {
    let mut corpus = generate(&cfg(SynthMode::Knowledge)).unwrap();
    let probe = [Channel::MmMeme, Channel::Knowledge];
    let with = evaluate_with(&corpus, |s| cosine_rule(s, &probe, 0.45)).unwrap();
    assert!(with.f1 >= 0.7, "with knowledge {}", with.f1);

    let rate = base_rate(&corpus);
    for s in &mut corpus {
        let k = s.channels.get_mut(&Channel::Knowledge).unwrap();
        k.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let without = evaluate_with(&corpus, |s| cosine_rule(s, &probe, 0.45)).unwrap();
    assert!(
        without.f1 <= rate + 0.1,
        "without knowledge {} vs base rate {rate}",
        without.f1
    );
}

#[test]
fn files_are_byte_identical_across_runs_and_load_back() {
    let c = SynthConfig {
        num_samples: 60,
        d: 8,
        ..SynthConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_to_dir(&c, a.path()).unwrap();
    generate_to_dir(&c, b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 3);
    for n in &names {
        assert_eq!(
            fs::read(a.path().join(n)).unwrap(),
            fs::read(b.path().join(n)).unwrap(),
            "{n:?}"
        );
    }

    let direct = generate(&c).unwrap();
    let mut loaded = Vec::new();
    for split in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        loaded.extend(load_corpus(a.path().join(split)).unwrap());
    }
    assert_eq!(loaded.len(), 60);
    for (x, y) in loaded.iter().zip(&direct) {
        assert_eq!(x.id, y.id);
        assert_eq!(x.sentences, y.sentences);
        assert_eq!(x.labels, y.labels);
        assert_eq!(x.channels, y.channels);
    }
}

#[test]
fn thousand_sample_manifest_keeps_sentence_counts() {
    let c = SynthConfig {
        num_samples: 1000,
        d: 4,
        ..SynthConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    generate_to_dir(&c, dir.path()).unwrap();
    let mut counts = [0usize; 11];
    for split in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        for s in load_corpus(dir.path().join(split)).unwrap() {
            counts[s.n()] += 1;
        }
    }
    assert_eq!(counts.iter().sum::<usize>(), 1000);
    assert_eq!(counts[..3].iter().sum::<usize>(), 0);
    // Uniform over 3..=10: 125 expected per bucket.
    for &k in &counts[3..] {
        assert!((80..=170).contains(&k), "{counts:?}");
    }
}
