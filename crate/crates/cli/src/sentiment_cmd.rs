use std::path::{Path, PathBuf};

use clap::Args;
use hardmax::sentiment::{
    build_vocabulary, dataset_tsv, encode_dataset, encode_review, evaluate as evaluate_model, forward, leader_steps,
    model_from_bytes, model_to_bytes, parse_dataset, planted_corpus, predicted_label, train as train_model,
    ForwardMode, LabeledText, PlantedConfig, SentimentModel, TrainConfig, Vocabulary, PAD_TOKEN,
};
use serde_json::json;

use crate::error::{read_text, write_file, CliError, CliResult};

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset with one `label<TAB>text` line per review.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Vocabulary file; built from the data when absent. Written next to the model either way.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 8)]
    pub depth: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Review length in tokens; longer texts are truncated, shorter ones padded.
    #[arg(long, default_value_t = 128)]
    pub len: usize,
    /// Train on the first N reviews only.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Per-epoch loss and accuracy as CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub text: String,
    #[arg(long, default_value = "hardmax")]
    pub mode: ForwardMode,
    /// Also report, per token, the layer at which it became a leader.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "hardmax")]
    pub mode: ForwardMode,
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = PlantedConfig::default().reviews)]
    pub reviews: usize,
    #[arg(long, default_value_t = PlantedConfig::default().seed)]
    pub seed: u64,
}

/// `<model>.vocab`, where the vocabulary of a saved model lives.
pub fn vocab_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

fn load_dataset(path: &Path, limit: Option<usize>) -> CliResult<Vec<LabeledText>> {
    let mut data = parse_dataset(&read_text(path)?).map_err(|e| CliError::input(path.display(), e))?;
    if let Some(n) = limit {
        data.truncate(n);
    }
    Ok(data)
}

fn load_model(path: &Path) -> CliResult<(SentimentModel, Vocabulary)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(path.display(), e))?;
    let model = model_from_bytes(&bytes).map_err(|e| CliError::input(path.display(), e))?;
    let vpath = vocab_path(path);
    let vocab = Vocabulary::from_text(&read_text(&vpath)?).map_err(|e| CliError::input(vpath.display(), e))?;
    if vocab.len() != model.vocab_size() {
        return Err(CliError::Input(format!(
            "{}: {} words but the model expects {}",
            vpath.display(),
            vocab.len(),
            model.vocab_size()
        )));
    }
    Ok((model, vocab))
}

pub fn train(args: &TrainArgs) -> CliResult {
    let data = load_dataset(&args.data, args.limit)?;
    let vocab = match &args.vocab {
        Some(p) => Vocabulary::from_text(&read_text(p)?).map_err(|e| CliError::input(p.display(), e))?,
        None => build_vocabulary(&data)?,
    };
    let reviews = encode_dataset(&data, &vocab, args.len);
    let init = SentimentModel::new(vocab.len(), args.dim, args.len, args.depth, args.tau, args.seed)?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let (model, history) = train_model(&init, &reviews, &cfg)?;

    write_file(&args.model, model_to_bytes(&model)?)?;
    write_file(&vocab_path(&args.model), vocab.to_text())?;
    if let Some(path) = &args.history {
        let mut csv = String::from("epoch,loss,accuracy\n");
        for h in &history {
            csv.push_str(&format!("{},{},{}\n", h.epoch, h.loss, h.accuracy));
        }
        write_file(path, csv)?;
    }
    if let Some(last) = history.last() {
        println!("epoch {}: loss {:.6}, accuracy {:.4}", last.epoch, last.loss, last.accuracy);
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> CliResult {
    let (model, vocab) = load_model(&args.model)?;
    let review = encode_review(&args.text, &vocab, model.review_len());
    let (yhat, traj) = forward(&model, &review, args.mode)?;
    let mut out = json!({ "yhat": yhat, "label": predicted_label(yhat) });
    if args.trace {
        let words = review.word_indices.iter().map(|&i| vocab.word(i).unwrap_or(PAD_TOKEN));
        let steps = if args.mode == ForwardMode::Hardmax {
            leader_steps(&traj)
        } else {
            let (_, hard) = forward(&model, &review, ForwardMode::Hardmax)?;
            leader_steps(&hard)
        };
        out["tokens"] = words.zip(steps).map(|(w, s)| json!({ "word": w, "leaderAt": s })).collect();
    }
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| CliError::input("output", e))?);
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult {
    let (model, vocab) = load_model(&args.model)?;
    let data = load_dataset(&args.data, args.limit)?;
    let reviews = encode_dataset(&data, &vocab, model.review_len());
    let eval = evaluate_model(&model, &reviews, args.mode)?;
    println!("{}", serde_json::to_string_pretty(&eval).map_err(|e| CliError::input("output", e))?);
    Ok(())
}

pub fn corpus(args: &CorpusArgs) -> CliResult {
    let cfg = PlantedConfig { reviews: args.reviews, seed: args.seed, ..PlantedConfig::default() };
    write_file(&args.out, dataset_tsv(&planted_corpus(&cfg)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_sits_next_to_model() {
        assert_eq!(vocab_path(Path::new("out/m.bin")), PathBuf::from("out/m.bin.vocab"));
    }
}
