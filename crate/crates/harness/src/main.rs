use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use embinv_core::defense::{DefenseKind, DefenseSpec};
use embinv_core::embed::{EmbedderPort, HashEmbedder};
use embinv_core::lm::train_ngram;
use embinv_core::metrics::text_metrics;
use embinv_core::{Rounding, RunReport};
use embinv_harness::experiment::{load_generator, read_lines, run_targets, World};
use embinv_harness::remote::RemoteConfig;
use embinv_harness::{run_experiment, service, toy, ExperimentSpec, TargetOutcome, VictimSpec};

#[derive(Parser)]
#[command(name = "embinv", version, about = "Black-box embedding inversion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Invert one text or a sampled dataset.
    Attack(AttackArgs),
    /// Run the embedding service (a live victim).
    Serve(ServeArgs),
    /// Score reconstructions against references.
    Eval(EvalArgs),
    /// Train and save the n-gram generator.
    TrainLm(TrainArgs),
    /// Write the synthetic toy corpus.
    ToyCorpus(ToyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VictimKind {
    Hash,
    Linear,
    Remote,
}

#[derive(Args)]
struct DefenseArgs {
    #[arg(long, value_parser = parse_defense)]
    defense: Option<DefenseKind>,
    #[arg(long)]
    eps_per_dim: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    defense_seed: Option<u64>,
}

fn parse_defense(s: &str) -> Result<DefenseKind, String> {
    s.parse().map_err(|e: embinv_core::Error| e.to_string())
}

impl DefenseArgs {
    fn apply(&self, spec: &mut DefenseSpec) {
        if let Some(kind) = self.defense {
            spec.kind = kind;
        }
        if self.eps_per_dim.is_some() {
            spec.eps_per_dim = self.eps_per_dim;
        }
        if self.noise_scale.is_some() {
            spec.noise_scale = self.noise_scale;
        }
        if let Some(seed) = self.defense_seed {
            spec.seed = seed;
        }
    }
}

#[derive(Args)]
struct AttackArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Invert this single text instead of a dataset.
    #[arg(long)]
    text: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    /// Directory for report.jsonl and summary.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    victim: Option<VictimKind>,
    #[arg(long)]
    victim_url: Option<String>,
    #[arg(long)]
    k_s: Option<usize>,
    #[arg(long)]
    k_a: Option<usize>,
    #[arg(long)]
    k_b: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    th_w: Option<f64>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    first_step_penalty: Option<f64>,
    #[arg(long)]
    final_rerank: Option<usize>,
    #[arg(long, value_parser = parse_rounding)]
    rounding: Option<Rounding>,
    /// Force the confidence weight (0 gives the logit-only ablation).
    #[arg(long, allow_hyphen_values = true)]
    conf_override: Option<f64>,
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    defense: DefenseArgs,
}

fn parse_rounding(s: &str) -> Result<Rounding, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown rounding {s:?}"))
}

impl AttackArgs {
    fn spec(&self) -> anyhow::Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(p) => ExperimentSpec::from_json_file(p)?,
            None => ExperimentSpec::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { spec.$($field).+ = v; })*
            };
        }
        set!(
            samples => samples, seed => seed,
            k_s => attack.k_s, k_a => attack.k_a, k_b => attack.k_b, gamma => attack.gamma,
            th_w => attack.th_w, t_max => attack.t_max, lambda => attack.lambda,
            first_step_penalty => attack.first_step_penalty, final_rerank => attack.final_rerank,
            rounding => attack.rounding,
        );
        if self.dataset.is_some() {
            spec.dataset = self.dataset.clone();
        }
        if self.corpus.is_some() {
            spec.corpus = self.corpus.clone();
        }
        if self.conf_override.is_some() {
            spec.attack.conf_override = self.conf_override;
        }
        if self.sequential {
            spec.parallel = false;
        }
        if let Some(seed) = self.seed {
            spec.attack.seed = seed;
        }
        match (self.victim, &self.victim_url) {
            (Some(VictimKind::Hash), _) => {
                spec.victim = VictimSpec::Hash { embedder: HashEmbedder::new(256, 3, 0xb1c7) }
            }
            (Some(VictimKind::Linear), _) => spec.victim = VictimSpec::default(),
            (Some(VictimKind::Remote), None) => bail!("--victim remote needs --victim-url"),
            (Some(VictimKind::Remote), Some(url)) | (None, Some(url)) => {
                spec.victim = VictimSpec::Remote(RemoteConfig {
                    url: url.clone(),
                    timeout_secs: 30.0,
                    retries: 2,
                    dim: None,
                })
            }
            (None, None) => {}
        }
        self.defense.apply(&mut spec.defense);
        if let Some(dir) = &self.out_dir {
            std::fs::create_dir_all(dir)?;
            spec.report_path = Some(dir.join("report.jsonl"));
            spec.summary_path = Some(dir.join("summary.csv"));
        }
        Ok(spec)
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, value_enum, default_value = "hash")]
    victim: VictimKind,
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long, default_value_t = 0xb1c7)]
    seed: u64,
    #[command(flatten)]
    defense: DefenseArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// A report.jsonl with references, or TSV lines `reference<TAB>reconstruction`.
    input: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value_t = 0.1)]
    k: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, default_value_t = toy::TOY_CORPUS_SIZE)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Attack(args) => attack(&args),
        Command::Serve(args) => serve(&args),
        Command::Eval(args) => eval(&args.input),
        Command::TrainLm(args) => {
            let lines = read_lines(&args.corpus)?;
            let lm = train_ngram(&lines, args.order, args.k)?;
            lm.save(&args.out)?;
            eprintln!("wrote {} ({} tokens)", args.out.display(), embinv_core::lm::TokenGenerator::vocab(&lm).len());
            Ok(())
        }
        Command::ToyCorpus(args) => {
            let mut text = toy::synthetic_corpus(args.n, args.seed).join("\n");
            text.push('\n');
            std::fs::write(&args.out, text)?;
            Ok(())
        }
    }
}

fn attack(args: &AttackArgs) -> anyhow::Result<()> {
    let spec = args.spec()?;
    spec.attack.clone().validate()?;
    spec.defense.validate()?;
    if let Some(text) = &args.text {
        let corpus = spec.corpus.as_deref().context("--corpus is required")?;
        let lm = load_generator(corpus, spec.lm_order, spec.lm_k)?;
        let world = World { lm: &lm, local: Arc::new(spec.local), victim: spec.victim.build()? };
        let out = run_targets(&spec, &world, &[(0, text.clone())])?;
        match &out.outcomes[0] {
            TargetOutcome::Ok(report) => println!("{}", serde_json::to_string_pretty(report)?),
            TargetOutcome::Failed { error, .. } => bail!("attack failed: {error}"),
        }
        return Ok(());
    }
    let out = run_experiment(&spec)?;
    out.write(&spec)?;
    print!("{}", out.summary.to_csv());
    eprintln!(
        "{} succeeded, {} failed; setup queries {}, metric queries {}",
        out.summary.succeeded,
        out.summary.failed,
        out.summary.setup_ledger.online_sentences,
        out.summary.eval_ledger.online_sentences
    );
    Ok(())
}

fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    let base = HashEmbedder::new(args.dim, 3, args.seed);
    let embedder: Arc<dyn EmbedderPort> = match args.victim {
        VictimKind::Hash => Arc::new(base),
        VictimKind::Linear => VictimSpec::Linear { base, dim: args.dim * 3 / 4, seed: args.seed, normalize: true }.build()?,
        VictimKind::Remote => bail!("the service cannot proxy a remote victim"),
    };
    let mut defense = DefenseSpec::none();
    args.defense.apply(&mut defense);
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        service::serve_embed(embedder, defense, listener).await
    })
}

fn eval(input: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        if input.extension().is_some_and(|e| e == "jsonl") {
            if let Ok(report) = serde_json::from_str::<RunReport>(line) {
                let reference = report.reference.with_context(|| format!("line {}: no reference", n + 1))?;
                pairs.push((reference, report.reconstruction));
            }
        } else {
            let (reference, recon) = line.split_once('\t').with_context(|| format!("line {}: expected a tab", n + 1))?;
            pairs.push((reference.to_string(), recon.to_string()));
        }
    }
    let mut sums = [0.0; 4];
    let mut names = [""; 4];
    for (reference, recon) in &pairs {
        for (i, (name, v)) in text_metrics(recon, reference).into_iter().enumerate() {
            names[i] = name;
            sums[i] += v;
        }
    }
    if pairs.is_empty() {
        bail!("no pairs in {}", input.display());
    }
    println!("pairs,{}", names.join(","));
    let means: Vec<String> = sums.iter().map(|s| format!("{:.4}", s / pairs.len() as f64)).collect();
    println!("{},{}", pairs.len(), means.join(","));
    Ok(())
}

