use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mime_evidence::dataio::{load_corpus_with, LoadOptions};
use mime_evidence::gradcore::gradcheck::{
    check_gradients, DEFAULT_FLOOR, DEFAULT_STEP, DEFAULT_TOLERANCE,
};
use mime_evidence::harness::{ablation_sweep, evaluate, presets, train, Precision, TrainConfig};
use mime_evidence::model::{
    labels_as, load_checkpoint_for_dim, predict, ForwardHooks, MimeParams, VariantSpec,
};
use mime_evidence::syngen::{generate, generate_to_dir, split_80_10_10, SynthConfig, SynthMode};

#[derive(Parser)]
#[command(
    name = "mime",
    version,
    about = "Meme-aware evidence sentence detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a run report plus checkpoint.
    Train {
        #[command(flatten)]
        train: TrainArgs,
        /// Directory for report.txt and report.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Score a checkpoint on a labelled corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Directory for metrics.txt and metrics.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write per-sentence probabilities and labels as JSON lines.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value = "predictions.jsonl")]
        output: PathBuf,
    },
    /// Generate a synthetic corpus split 80:10:10.
    GenSynth(SynthArgs),
    /// Finite-difference check of the full model's gradients.
    Gradcheck {
        #[arg(long, default_value = "mime", allow_hyphen_values = true)]
        variant: String,
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        /// Context sentences in the probe sample.
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Parameter scale; larger than the training init so gates are not flat.
        #[arg(long, default_value_t = 0.3)]
        std: f64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Train each variant under each seed and tabulate test metrics.
    Ablate {
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated preset names.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "base,+kme,+mat,+ma-lstm,-mat+t,-ma-lstm+bilstm,-ma-lstm,mime"
        )]
        variants: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        /// Directory for ablation.txt and ablation.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Flags override values read from `--config`.
#[derive(Args)]
struct TrainArgs {
    /// TOML file with any TrainConfig keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Preset name, e.g. mime, base, +kme, -mat+t.
    #[arg(long, allow_hyphen_values = true)]
    variant: Option<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    /// f32 or f64.
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    init_std: Option<f64>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl TrainArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(p) => TrainConfig::from_toml_file(p)?,
            None => TrainConfig::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone().into(); } )* };
        }
        over!(
            seed, d, heads, batch_size, epochs, lr, threshold, init_std, train, val, test,
            checkpoint
        );
        if let Some(v) = &self.variant {
            c.variant = VariantSpec::preset(v)?;
        }
        if let Some(p) = &self.precision {
            c.precision = match p.as_str() {
                "f32" => Precision::F32,
                "f64" => Precision::F64,
                other => bail!("unknown precision {other:?}, expected f32 or f64"),
            };
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    num_samples: usize,
    #[arg(long, default_value_t = 32)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    n_min: usize,
    #[arg(long, default_value_t = 10)]
    n_max: usize,
    #[arg(long, default_value_t = 1)]
    evidence_min: usize,
    #[arg(long, default_value_t = 3)]
    evidence_max: usize,
    /// fusion, knowledge or text_only.
    #[arg(long, default_value = "fusion")]
    mode: SynthMode,
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl From<&SynthArgs> for SynthConfig {
    fn from(a: &SynthArgs) -> Self {
        SynthConfig {
            num_samples: a.num_samples,
            d: a.d,
            n_range: (a.n_min, a.n_max),
            evidence_range: (a.evidence_min, a.evidence_max),
            mode: a.mode,
            alpha: a.alpha,
            noise: a.noise,
            seed: a.seed,
        }
    }
}

fn write_pair(dir: &Path, stem: &str, text: &str, json: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (ext, body) in [("txt", text), ("json", json)] {
        let p = dir.join(format!("{stem}.{ext}"));
        fs::write(&p, format!("{body}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn load_model(
    checkpoint: &Path,
    corpus: &Path,
) -> Result<(MimeParams<f32>, Vec<mime_evidence::dataio::MemeSample>)> {
    let corpus = load_corpus_with(
        corpus,
        LoadOptions {
            require_positive: false,
        },
    )?;
    let Some(first) = corpus.first() else {
        bail!("corpus is empty");
    };
    let params = load_checkpoint_for_dim(checkpoint, first.dim())?;
    for s in &corpus {
        params.check_sample(s)?;
    }
    Ok((params, corpus))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { train: args, out } => {
            let cfg = args.resolve()?;
            let outcome = train(&cfg)?;
            let r = &outcome.report;
            println!("{}", r.to_text());
            write_pair(&out, "report", &r.to_text(), &r.to_json())?;
        }
        Command::Eval {
            checkpoint,
            corpus,
            threshold,
            out,
        } => {
            let (params, corpus) = load_model(&checkpoint, &corpus)?;
            let m = evaluate(&params, &corpus, threshold)?;
            println!("{m}");
            write_pair(
                &out,
                "metrics",
                &m.to_string(),
                &serde_json::to_string_pretty(&m)?,
            )?;
        }
        Command::Predict {
            checkpoint,
            corpus,
            threshold,
            output,
        } => {
            let (params, corpus) = load_model(&checkpoint, &corpus)?;
            let mut lines = String::new();
            for s in &corpus {
                let z = params.logits(s)?;
                let prob: Vec<f64> = z
                    .iter()
                    .map(|&v| 1.0 / (1.0 + (-(v as f64)).exp()))
                    .collect();
                let rec = serde_json::json!({
                    "id": s.id,
                    "probabilities": prob,
                    "labels": predict(&z, threshold),
                });
                lines.push_str(&rec.to_string());
                lines.push('\n');
            }
            fs::write(&output, lines).with_context(|| format!("writing {}", output.display()))?;
            println!("wrote {} predictions to {}", corpus.len(), output.display());
        }
        Command::GenSynth(args) => {
            let cfg = SynthConfig::from(&args);
            let paths = generate_to_dir(&cfg, &args.out)?;
            for p in paths {
                println!("{}", p.display());
            }
        }
        Command::Gradcheck {
            variant,
            d,
            heads,
            n,
            seed,
            std,
            tolerance,
        } => {
            let spec = VariantSpec::preset(&variant)?;
            let mut params = MimeParams::<f64>::init_with_std(d, heads, spec, seed, std)?;
            let synth = SynthConfig {
                num_samples: 10,
                d,
                n_range: (n, n),
                evidence_range: (1, n.min(3)),
                seed,
                ..SynthConfig::default()
            };
            let sample = split_80_10_10(generate(&synth)?).train.swap_remove(0);
            let y = labels_as::<f64>(&sample.labels);
            let r = check_gradients(&mut params, DEFAULT_STEP, DEFAULT_FLOOR, |tape, p| {
                let b = p.bind(tape);
                let trace = b.forward(tape, &sample, ForwardHooks::default())?;
                tape.bce_with_logits(trace.logits, &y)
            })?;
            println!("variant {variant}, d {d}, heads {heads}, n {n}");
            println!("checked {} parameter entries", r.checked);
            println!("max relative error {:.3e}", r.max_rel_error);
            if let Some((name, i)) = &r.worst {
                println!(
                    "worst at {name}[{i}]: analytic {:.6e}, numeric {:.6e}",
                    r.worst_analytic, r.worst_numeric
                );
            }
            if !r.passes(tolerance) {
                bail!(
                    "gradient check failed: {:.3e} >= {tolerance:e}",
                    r.max_rel_error
                );
            }
            println!("PASS (tolerance {tolerance:e})");
        }
        Command::Ablate {
            train: args,
            variants,
            seeds,
            out,
        } => {
            let cfg = args.resolve()?;
            let load = |p: &Option<PathBuf>, what: &str| -> Result<_> {
                let p = p
                    .as_ref()
                    .with_context(|| format!("ablation needs --{what}"))?;
                Ok(mime_evidence::dataio::load_corpus(p)?)
            };
            let (tr, va, te) = (
                load(&cfg.train, "train")?,
                load(&cfg.val, "val")?,
                load(&cfg.test, "test")?,
            );
            let names: Vec<&str> = variants.iter().map(String::as_str).collect();
            let table = ablation_sweep(&cfg, &presets(&names)?, &seeds, &tr, &va, &te)?;
            println!("{}", table.to_text());
            write_pair(&out, "ablation", &table.to_text(), &table.to_json())?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    run(Cli::parse())
}
