use std::fs;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use taptype::classifier::dataset::{synthesize_participants, LabeledWindow};
use taptype::classifier::{Classifier, ClassifierConfig, ConfusionClassifier, ConfusionMatrix, OutputMode, Placement};
use taptype::decoder::{Decoder, DecoderConfig};
use taptype::eval::{compare_classifiers, evaluate_classifier, simulate_recall, SimulationConfig, TapSource, WindowSource};
use taptype::lm::{select_corpus, CharLm, Corpus, SelectionConfig, WordLm, WordLmConfig};
use taptype::session::{read_event_log, replay};
use taptype::signal::synth::GeneratorSpec;
use taptype::signal::DetectorConfig;
use taptype::{KeyFingerMap, PhraseSet, DESK_CORPUS, DESK_PHRASES};
use taptype_service::{AppState, NoiseConfig, NoiseMode};

#[derive(Parser)]
#[command(name = "taptype", version, about = "Surface typing from wrist accelerometer taps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the character and word models and write them as ARPA files.
    TrainLm(TrainLmArgs),
    /// Pick the sentences of a general corpus that look most in-domain.
    SelectCorpus(SelectArgs),
    /// Train a finger classifier on synthetic taps.
    TrainClassifier(TrainClassifierArgs),
    /// Offline recall@k, CER and WPM simulation over a phrase set.
    Simulate(SimulateArgs),
    /// Decode typed words with simulated classifier noise.
    Decode(DecodeArgs),
    /// Compare classifier variants on held-out synthetic participants.
    Eval(EvalArgs),
    /// Run the WebSocket demo backend.
    Serve(ServeArgs),
}

/// Models behind the decoder; missing ones are trained on the bundled
/// desk corpus.
#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    char_lm: Option<PathBuf>,
    #[arg(long)]
    word_lm: Option<PathBuf>,
    /// Key-finger map, one `key hand finger` line per key.
    #[arg(long)]
    map: Option<PathBuf>,
}

impl ModelArgs {
    fn decoder(&self) -> Result<Decoder> {
        let corpus = || Corpus::from_text(DESK_CORPUS);
        let char_lm = match &self.char_lm {
            Some(p) => CharLm::read_arpa(p).with_context(|| format!("reading {}", p.display()))?,
            None => {
                info!("training the character model on the desk corpus");
                CharLm::train(&corpus(), CharLm::DEFAULT_ORDER)?
            }
        };
        let word_lm = match &self.word_lm {
            Some(p) => WordLm::read_arpa(p).with_context(|| format!("reading {}", p.display()))?,
            None => {
                info!("training the word model on the desk corpus");
                WordLm::train(&corpus(), &WordLmConfig::default())?
            }
        };
        let map = match &self.map {
            Some(p) => KeyFingerMap::parse(&read(p)?)?,
            None => KeyFingerMap::qwerty(),
        };
        Ok(Decoder::new(map, Arc::new(char_lm), Arc::new(word_lm), DecoderConfig::default())?)
    }
}

#[derive(Args)]
struct TrainLmArgs {
    /// One sentence per line; the desk corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = CharLm::DEFAULT_ORDER)]
    char_order: usize,
    #[arg(long, default_value_t = 4)]
    word_order: usize,
    #[arg(long, default_value_t = 100_000)]
    vocab_cap: usize,
    #[arg(long)]
    char_out: PathBuf,
    #[arg(long)]
    word_out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// General corpus to select from.
    #[arg(long)]
    query: PathBuf,
    /// In-domain corpora (repeatable).
    #[arg(long = "in-domain", required = true)]
    in_domain: Vec<PathBuf>,
    /// Number of log-spaced subset sizes to evaluate.
    #[arg(long, default_value_t = 8)]
    subsets: usize,
    /// Keep every sentence above this score instead of ranking subsets.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Synthetic training data: simulated participants of the tap generator.
#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, default_value_t = 5)]
    participants: usize,
    #[arg(long, default_value_t = 100)]
    taps_per_class: usize,
    /// Per-participant template variation.
    #[arg(long, default_value_t = 0.1)]
    spread: f64,
    /// Generator settings as JSON; defaults when omitted.
    #[arg(long)]
    generator: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DataArgs {
    fn spec(&self) -> Result<GeneratorSpec> {
        match &self.generator {
            Some(p) => Ok(serde_json::from_str(&read(p)?)?),
            None => Ok(GeneratorSpec::default()),
        }
    }

    /// All participants but the last for training, the last for testing.
    fn train_test(&self) -> Result<(Vec<LabeledWindow>, Vec<LabeledWindow>)> {
        if self.participants < 2 {
            bail!("need at least two participants to hold one out");
        }
        let mut people = synthesize_participants(&self.spec()?, &DetectorConfig::default(), self.participants, self.taps_per_class, self.spread, self.seed)?;
        let test = people.pop().expect("at least two");
        Ok((people.concat(), test))
    }
}

#[derive(Args)]
struct TrainClassifierArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Which layers are Bayesian: none, first, first_and_last, all.
    #[arg(long, default_value = "first_and_last")]
    placement: Placement,
    /// Use the five-block architecture instead of the compact one.
    #[arg(long)]
    deep: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    kl_weight: Option<f64>,
    /// Continue training this checkpoint on the held-out participant.
    #[arg(long)]
    fine_tune: Option<PathBuf>,
    /// Iteration budget when fine-tuning.
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss table.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    models: ModelArgs,
    /// One phrase per line; the bundled phrases when omitted.
    #[arg(long)]
    phrases: Option<PathBuf>,
    /// `identity`, `confusion:ACCURACY:calibrated|overconfident` or a
    /// classifier checkpoint fed with held-out synthetic windows.
    #[arg(long, default_value = "confusion:0.9:calibrated")]
    classifier: String,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,10,20")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON; printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    models: ModelArgs,
    /// Words to type, space separated.
    #[arg(long, conflicts_with = "events")]
    text: Option<String>,
    /// Replay a JSON-lines event log through the session instead.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    accuracy: f64,
    #[arg(long, default_value = "calibrated")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    models: ModelArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Placements to compare.
    #[arg(long, value_delimiter = ',', default_value = "none,first_and_last")]
    variants: Vec<Placement>,
    /// Evaluate this checkpoint instead of training variants.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    phrases: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    models: ModelArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Initial classifier accuracy of every connection.
    #[arg(long, default_value_t = 1.0)]
    accuracy: f64,
    #[arg(long, default_value = "calibrated")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn phrases(path: Option<&Path>) -> Result<PhraseSet> {
    Ok(match path {
        Some(p) => PhraseSet::parse(&read(p)?)?,
        None => PhraseSet::parse(DESK_PHRASES)?,
    })
}

fn output_mode(name: &str) -> Result<OutputMode> {
    match name {
        "calibrated" => Ok(OutputMode::Calibrated),
        "overconfident" => Ok(OutputMode::Overconfident),
        other => bail!("unknown output mode {other:?}; expected calibrated or overconfident"),
    }
}

fn confusion_source(accuracy: f64, mode: &str, seed: u64) -> Result<ConfusionClassifier> {
    Ok(ConfusionClassifier::new(ConfusionMatrix::finger_confusion(accuracy)?, output_mode(mode)?, seed))
}

fn train_lm(args: TrainLmArgs) -> Result<()> {
    let corpus = match &args.corpus {
        Some(p) => Corpus::load(p)?,
        None => Corpus::from_text(DESK_CORPUS),
    };
    info!("{} sentences, {} tokens", corpus.len(), corpus.token_count());
    let char_lm = CharLm::train(&corpus, args.char_order)?;
    char_lm.write_arpa(&args.char_out)?;
    let word_lm = WordLm::train(
        &corpus,
        &WordLmConfig {
            order: args.word_order,
            vocab_cap: Some(args.vocab_cap),
            ..WordLmConfig::default()
        },
    )?;
    word_lm.write_arpa(&args.word_out)?;
    println!("wrote {} and {} ({} words)", args.char_out.display(), args.word_out.display(), word_lm.words().count());
    Ok(())
}

fn select(args: SelectArgs) -> Result<()> {
    let query = Corpus::load(&args.query)?;
    let in_domain: Vec<Corpus> = args.in_domain.iter().map(Corpus::load).collect::<taptype::Result<_>>()?;
    let config = SelectionConfig {
        seed: args.seed,
        rank_subsets: args.threshold.is_none(),
        ..SelectionConfig::default()
    };
    let thresholds = match args.threshold {
        Some(t) => vec![t],
        None => {
            // a first pass only to learn the score distribution
            let probe = select_corpus(&query, &in_domain, &[f64::INFINITY], &SelectionConfig { rank_subsets: false, ..config.clone() })?;
            taptype::lm::select::log_spaced_thresholds(&probe.scores, args.subsets, 100)
        }
    };
    let selection = select_corpus(&query, &in_domain, &thresholds, &config)?;
    println!("mixture weights {:?}", selection.weights);
    for s in &selection.subsets {
        match s.heldout_perplexity {
            Some(ppl) => println!("threshold {:>8.4}: {:>7} sentences, held-out perplexity {ppl:.1}", s.threshold, s.indices.len()),
            None => println!("threshold {:>8.4}: {:>7} sentences", s.threshold, s.indices.len()),
        }
    }
    let chosen = selection.best_subset().or(selection.subsets.first()).context("no subset selected")?;
    fs::write(&args.out, query.subset(&chosen.indices).to_text())?;
    println!("wrote {} sentences to {}", chosen.indices.len(), args.out.display());
    Ok(())
}

fn classifier_config(placement: Placement, deep: bool, epochs: Option<usize>, kl_weight: Option<f64>) -> ClassifierConfig {
    let mut config = ClassifierConfig::with_placement(placement);
    if deep {
        config.layers = ClassifierConfig::deep(placement);
    }
    if let Some(e) = epochs {
        config.epochs = e;
    }
    if kl_weight.is_some() {
        config.kl_weight = kl_weight;
    }
    config
}

fn train_classifier(args: TrainClassifierArgs) -> Result<()> {
    let (train, test) = args.data.train_test()?;
    let (model, stats) = match &args.fine_tune {
        Some(path) => {
            let mut model = Classifier::load(path)?;
            let epochs = args.epochs.unwrap_or(model.config().epochs);
            let stats = model.fine_tune(&test, epochs, Some(args.iterations), args.data.seed)?;
            (model, stats)
        }
        None => {
            let config = classifier_config(args.placement, args.deep, args.epochs, args.kl_weight);
            info!("training on {} windows", train.len());
            Classifier::train(&train, config, args.data.seed)?
        }
    };
    model.save(&args.out)?;
    if let Some(p) = &args.stats {
        stats.save_csv(p)?;
    }
    if let Some(last) = stats.epochs.last() {
        println!("epoch {}: total {:.4} (kl {:.4}, data {:.4})", last.epoch, last.total, last.kl, last.data);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let decoder = args.models.decoder()?;
    let phrases = phrases(args.phrases.as_deref())?;
    let config = SimulationConfig {
        ks: args.k.clone(),
        repetitions: args.repetitions,
        seed: args.seed,
        ..SimulationConfig::default()
    };
    let parts: Vec<&str> = args.classifier.split(':').collect();
    let report = match parts.as_slice() {
        ["identity"] => simulate_recall(&phrases, &decoder, &mut confusion_source(1.0, "calibrated", args.seed)?, &config)?,
        ["confusion", acc, mode] => {
            let mut source = confusion_source(acc.parse().context("confusion accuracy")?, mode, args.seed)?;
            simulate_recall(&phrases, &decoder, &mut source, &config)?
        }
        [path] if Path::new(path).exists() => {
            let model = Classifier::load(path)?;
            let data = DataArgs {
                participants: 2,
                taps_per_class: 100,
                spread: 0.1,
                generator: None,
                seed: args.seed,
            };
            let (_, windows) = data.train_test()?;
            let mut source = WindowSource::new(&model, &windows, model.config().ensemble_infer, args.seed)?;
            simulate_recall(&phrases, &decoder, &mut source as &mut dyn TapSource, &config)?
        }
        _ => bail!("unknown classifier {:?}", args.classifier),
    };
    for (k, r) in &report.recall {
        eprintln!("recall@{k:<2} {r:.3}");
    }
    eprintln!("CER {:.4} ± {:.4}, WPM {:.1} ± {:.1} over {} words", report.mean_cer, report.se_cer, report.mean_wpm, report.se_wpm, report.words);
    write_json(&report, args.out.as_deref())
}

fn decode(args: DecodeArgs) -> Result<()> {
    let decoder = args.models.decoder()?;
    if let Some(path) = &args.events {
        let events = read_event_log(BufReader::new(fs::File::open(path)?))?;
        let (state, _) = replay(&decoder, &events)?;
        for p in &state.submitted {
            println!("submitted: {p}");
        }
        println!("committed: {}", state.committed_text());
        return Ok(());
    }
    let text = args.text.context("give --text or --events")?;
    let mut source = confusion_source(args.accuracy, &args.mode, args.seed)?;
    let mut committed: Vec<String> = Vec::new();
    for word in text.split_whitespace() {
        let obs = word
            .chars()
            .map(|c| {
                let (hand, finger) = decoder.map().finger_for(c).with_context(|| format!("unmapped key {c:?}"))?;
                Ok(source.observe(hand, finger, 0))
            })
            .collect::<Result<Vec<_>>>()?;
        let decoded = decoder.decode(&obs, &committed)?;
        let listed: Vec<String> = decoded.suggestions.iter().map(|s| format!("{} ({:.2})", s.word, s.logp)).collect();
        println!("{word}: {}", if listed.is_empty() { "-".to_owned() } else { listed.join(", ") });
        if let Some(raw) = &decoded.best_raw {
            println!("  raw: {raw}");
        }
        committed.push(decoded.suggestions.first().map(|s| s.word.clone()).or(decoded.best_raw).unwrap_or_default());
    }
    println!("{}", committed.join(" "));
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let decoder = args.models.decoder()?;
    let phrases = phrases(args.phrases.as_deref())?;
    let (train, test) = args.data.train_test()?;
    let simulation = SimulationConfig {
        seed: args.data.seed,
        ..SimulationConfig::default()
    };
    let rows = match &args.checkpoint {
        Some(path) => vec![evaluate_classifier(&path.display().to_string(), &Classifier::load(path)?, &test, &phrases, &decoder, &simulation)?],
        None => {
            let variants: Vec<(String, ClassifierConfig)> = args
                .variants
                .iter()
                .map(|&p| (p.name().to_owned(), classifier_config(p, false, args.epochs, None)))
                .collect();
            compare_classifiers(&variants, &train, &test, &phrases, &decoder, &simulation)?
        }
    };
    eprintln!("{:<16} {:>8} {:>8} {:>8} {:>8} {:>10}", "variant", "F1", "ECE", "NLL", "OOD rej", "recall@10");
    for r in &rows {
        let r10 = r.recall.iter().find(|(k, _)| *k == 10).map_or(f64::NAN, |(_, v)| *v);
        eprintln!(
            "{:<16} {:>8.3} {:>8.4} {:>8.4} {:>8.3} {:>10.3}",
            r.name, r.metrics.macro_f1, r.metrics.ece, r.metrics.nll, r.ood_rejection, r10
        );
    }
    write_json(&rows, args.out.as_deref())
}

async fn serve(args: ServeArgs) -> Result<()> {
    let decoder = args.models.decoder()?;
    let mode = match args.mode.as_str() {
        "calibrated" => NoiseMode::Calibrated,
        "overconfident" => NoiseMode::Overconfident,
        other => bail!("unknown output mode {other:?}"),
    };
    let noise = NoiseConfig { accuracy: args.accuracy, mode };
    noise.classifier(args.seed)?;
    let state = Arc::new(AppState::new(decoder, noise, args.seed));
    taptype_service::serve(args.bind, state).await
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::TrainLm(a) => train_lm(a),
        Command::SelectCorpus(a) => select(a),
        Command::TrainClassifier(a) => train_classifier(a),
        Command::Simulate(a) => simulate(a),
        Command::Decode(a) => decode(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(serve(a)),
    }
}
