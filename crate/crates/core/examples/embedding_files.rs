//! Writes a tiny corpus to disk in the interchange formats and reads it back:
//! `MEMX1` embedding files plus a JSON-lines manifest.
//!
//! Usage: `cargo run --example embedding_files -- [out_dir]`

use std::path::PathBuf;

use mime_evidence::dataio::{
    encode_embedding, load_corpus, pseudo_encode, read_embedding, write_corpus, Channel, MemeSample,
};
use mime_evidence::gradcore::Tensor;

fn main() -> mime_evidence::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("mime-embedding-files"),
        PathBuf::from,
    );
    let d = 16;

    // The pseudo-encoder hashes tokens into a fixed vector, a stand-in for
    // a real sentence encoder.
    let meme = "when the deadline is tomorrow and you have not started";
    let sentences = [
        "Procrastination is a common topic in internet humour.",
        "The image shows a cartoon dog in a burning room.",
        "The comic was drawn by KC Green in 2013.",
    ];
    let rows: Vec<f32> = sentences
        .iter()
        .flat_map(|s| pseudo_encode(s, d).data().to_vec())
        .collect();
    let sample = MemeSample {
        id: "meme-0001".into(),
        channels: [
            (Channel::MmMeme, pseudo_encode(meme, d)),
            (Channel::TextMeme, pseudo_encode(meme, d)),
        ]
        .into_iter()
        .collect(),
        sentences: Tensor::matrix(sentences.len(), d, rows),
        labels: vec![true, true, false],
        text: Some(meme.into()),
    };

    let manifest = write_corpus(&out, "corpus.jsonl", std::slice::from_ref(&sample))?;
    println!("manifest: {}", manifest.display());
    println!(
        "{}",
        std::fs::read_to_string(&manifest)
            .unwrap_or_default()
            .trim()
    );

    let back = load_corpus(&manifest)?;
    assert_eq!(back[0].sentences, sample.sentences);
    println!(
        "reloaded {} sample(s), n = {}, d = {}",
        back.len(),
        back[0].n(),
        back[0].dim()
    );

    let mut bytes = Vec::new();
    encode_embedding(&Tensor::row(&[1.0f32, -2.0]), &mut bytes)?;
    let hex: Vec<String> = bytes.iter().map(|b| format!("{b:02X}")).collect();
    println!("1x2 matrix [1, -2] as MEMX1: {}", hex.join(" "));

    let first = std::fs::read_dir(&out)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .find(|p| p.extension().is_some_and(|x| x == "memx"));
    if let Some(p) = first {
        let m = read_embedding(&p)?;
        println!("{}: {} x {}", p.display(), m.rows(), m.cols());
    }
    Ok(())
}
