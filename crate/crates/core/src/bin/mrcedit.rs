use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use mrcedit::backend::{Backend, InFlightLimit, MockBackend, MockFixtures, MockRule, WireBackend};
use mrcedit::config::Config;
use mrcedit::dataset::{
    append_journal, corpus_stats, load_samples, read_journal, read_records, review_pass, write_records, Decision, EditRecord, MrcSample,
    Review, ReviewDecision,
};
use mrcedit::eval::{compare, controllability, evaluate, EvalItem, EvalRun, Report};
use mrcedit::pipeline::{run_baseline, AblationVariant, EditTrace, Pipeline};
use mrcedit::{PipelineError, Variant};

#[derive(Parser)]
#[command(name = "mrcedit", version, about = "Adversarial editing and evaluation of reading-comprehension samples")]
struct Cli {
    /// TOML file with endpoint settings per role and pipeline knobs.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scripted backend fixtures; replaces every remote endpoint.
    #[arg(long, global = true)]
    mock: Option<PathBuf>,
    /// Offset applied to scripted reply selection.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Candidates generated per guided step.
    #[arg(long, global = true)]
    candidates: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the five-step guided editor over a sample file.
    Edit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Non-targeted edits: free extension plus answer-sentence rephrase.
    Baseline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partial pipelines that isolate one family of triggers.
    Ablate {
        #[arg(long, value_enum)]
        variant: AblationVariant,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ask a reader every question of a dataset and score the answers.
    Evaluate {
        /// Reader name from the config or mock fixtures, or `echo-gold`.
        #[arg(long)]
        reader: String,
        /// Sample file (natural only) or edited record file.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "natural")]
        variant: VariantArg,
        #[arg(long)]
        dataset_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a natural and an edited run of the same reader.
    Compare {
        #[arg(long)]
        natural: PathBuf,
        #[arg(long)]
        edited: PathBuf,
        /// Edited records, for controllability and corpus statistics.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus statistics of an edited record file.
    Stats {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accept or discard edited records; decisions go to a resumable journal.
    Review {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        journal: PathBuf,
        /// Curated export containing accepted records only.
        #[arg(long)]
        out: PathBuf,
        /// Apply the journal without prompting.
        #[arg(long)]
        non_interactive: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VariantArg {
    Natural,
    Edited,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Natural => Variant::Natural,
            VariantArg::Edited => Variant::Edited,
        }
    }
}

struct Env {
    config: Config,
    mock: Option<MockFixtures>,
    seed: u64,
    limit: InFlightLimit,
}

impl Env {
    fn new(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(n) = cli.candidates {
            config.pipeline.candidates_per_step = n;
        }
        let mock = cli.mock.as_deref().map(MockFixtures::load).transpose()?;
        let limit = InFlightLimit::new(config.concurrency);
        Ok(Env { config, mock, seed: cli.seed, limit })
    }

    fn mock_backend(&self, id: &str, rules: Vec<MockRule>) -> Result<Box<dyn Backend>> {
        Ok(Box::new(MockBackend::new(id, rules)?.with_seed(self.seed)))
    }

    fn role(&self, role: &str) -> Result<Box<dyn Backend>> {
        if let Some(fx) = &self.mock {
            let rules = match role {
                "editor" => fx.editor.clone(),
                _ => fx.guide.clone(),
            };
            return self.mock_backend(role, rules);
        }
        let endpoint = match role {
            "editor" => self.config.editor.clone(),
            _ => self.config.guide.clone(),
        };
        let endpoint = endpoint.with_context(|| format!("no [{role}] endpoint configured and no --mock given"))?;
        Ok(Box::new(WireBackend::new(role, endpoint).with_limit(self.limit.clone())))
    }

    fn reader(&self, name: &str) -> Result<Box<dyn Backend>> {
        if let Some(rules) = self.mock.as_ref().and_then(|fx| fx.readers.get(name)) {
            return self.mock_backend(name, rules.clone());
        }
        match self.config.readers.get(name) {
            Some(endpoint) => Ok(Box::new(WireBackend::new(name, endpoint.clone()).with_limit(self.limit.clone()))),
            None => bail!("reader {name:?} is neither in the mock fixtures nor in the config"),
        }
    }
}

fn load_input(path: &Path) -> Result<Vec<MrcSample>> {
    let loaded = load_samples(path)?;
    if !loaded.warnings.is_empty() {
        eprintln!("{}: {} loader warning(s)", path.display(), loaded.warnings.len());
    }
    Ok(loaded.samples)
}

fn edit_all(samples: &[MrcSample], out: &Path, run: impl Fn(&MrcSample) -> Result<EditTrace, PipelineError> + Sync) -> Result<()> {
    let results: Vec<(MrcSample, Result<EditTrace, PipelineError>)> = samples.par_iter().map(|s| (s.clone(), run(s))).collect();
    let mut records = Vec::new();
    let mut discarded = 0usize;
    for (sample, result) in results {
        match result {
            Ok(trace) => records.push(EditRecord::new(sample, trace)),
            Err(e) => {
                discarded += 1;
                log::warn!("{e}");
            }
        }
    }
    records.sort_by(|a, b| a.sample.id.cmp(&b.sample.id));
    write_records(&records, out)?;
    eprintln!("{} edited, {} discarded -> {}", records.len(), discarded, out.display());
    Ok(())
}

fn dataset_items(path: &Path, variant: Variant) -> Result<Vec<EvalItem>> {
    if let Ok(records) = read_records(path) {
        if !records.is_empty() {
            return Ok(records.iter().map(|r| EvalItem::from_record(r, variant)).collect());
        }
    }
    if variant == Variant::Edited {
        bail!("{} holds no edited records", path.display());
    }
    Ok(load_input(path)?.iter().map(EvalItem::from_sample).collect())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    std::fs::write(path, body + "\n").with_context(|| format!("writing {}", path.display()))
}

fn render_record(r: &EditRecord) -> String {
    let mut s = format!("== {}  question: {}\n   answer: {:?}\n", r.sample.id, r.sample.question, r.trace.answer);
    if let Some(d) = &r.trace.distractor_text {
        s += &format!("   distractor ({:?}, {:?}): {}\n", r.trace.distractor_kind, r.trace.distractor_position, d);
    }
    s += &format!("--- natural\n{}\n+++ edited\n{}\n", r.sample.context, r.edited_context);
    s
}

fn review(records_path: &Path, journal: &Path, out: &Path, interactive: bool) -> Result<()> {
    let mut records = read_records(records_path)?;
    let mut decisions = read_journal(journal)?;
    if interactive {
        let decided: std::collections::HashSet<String> = decisions.iter().map(|d| d.id.clone()).collect();
        let stdin = io::stdin();
        let mut lines = stdin.lock().lines();
        for r in records.iter().filter(|r| r.review == Review::Pending && !decided.contains(&r.sample.id)) {
            print!("{}[a]ccept / [d]iscard / [s]kip / [q]uit, optional note after the letter: ", render_record(r));
            io::stdout().flush()?;
            let Some(line) = lines.next().transpose()? else { break };
            let line = line.trim();
            let (cmd, note) = line.split_once(' ').map_or((line, ""), |(c, n)| (c, n.trim()));
            let decision = match cmd {
                "a" | "accept" => Decision::Accept,
                "d" | "discard" => Decision::Discard,
                "q" | "quit" => break,
                _ => continue,
            };
            let d = ReviewDecision { id: r.sample.id.clone(), decision, note: (!note.is_empty()).then(|| note.to_string()) };
            append_journal(journal, &d)?;
            decisions.push(d);
        }
    }
    let (curated, summary) = review_pass(&mut records, decisions)?;
    write_records(&records, records_path)?;
    write_records(&curated, out)?;
    eprintln!(
        "{} accepted, {} discarded, {} pending (discard rate {:.1}%) -> {}",
        summary.accepted,
        summary.discarded,
        summary.pending,
        summary.discard_rate,
        out.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let env = Env::new(&cli)?;
    match &cli.command {
        Command::Edit { input, out } => {
            let samples = load_input(input)?;
            let (editor, guide) = (env.role("editor")?, env.role("guide")?);
            let pipeline = Pipeline::new(editor.as_ref(), guide.as_ref(), env.config.pipeline.clone());
            edit_all(&samples, out, |s| pipeline.run(s))
        }
        Command::Baseline { input, out } => {
            let samples = load_input(input)?;
            let editor = env.role("editor")?;
            edit_all(&samples, out, |s| run_baseline(s, editor.as_ref(), &env.config.pipeline))
        }
        Command::Ablate { variant, input, out } => {
            let samples = load_input(input)?;
            let (editor, guide) = (env.role("editor")?, env.role("guide")?);
            let pipeline = Pipeline::new(editor.as_ref(), guide.as_ref(), env.config.pipeline.clone());
            edit_all(&samples, out, |s| pipeline.run_ablation(s, *variant))
        }
        Command::Evaluate { reader, dataset, variant, dataset_id, out } => {
            let variant = Variant::from(*variant);
            let items = dataset_items(dataset, variant)?;
            let backend: Box<dyn Backend> = if reader == "echo-gold" {
                Box::new(MockBackend::echo_gold(
                    "echo-gold",
                    items.iter().map(|i| (i.context.as_str(), i.question.as_str(), i.golds[0].as_str())),
                ))
            } else {
                env.reader(reader)?
            };
            let id =
                dataset_id.clone().unwrap_or_else(|| dataset.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned()));
            let run = evaluate(backend.as_ref(), &id, variant, &items);
            write_json(out, &run)?;
            print!("{}", Report::new(std::slice::from_ref(&run), &[], None, &[]).render());
            Ok(())
        }
        Command::Compare { natural, edited, records, out } => {
            let natural: EvalRun = read_json(natural)?;
            let edited: EvalRun = read_json(edited)?;
            let comparison = compare(&natural, &edited)?;
            let (stats, control) = match records {
                Some(p) => {
                    let recs = read_records(p)?;
                    (Some(corpus_stats(&recs)), vec![controllability(&edited, &recs)])
                }
                None => (None, Vec::new()),
            };
            let report = Report::new(&[natural, edited], &[comparison], stats.as_ref(), &control);
            print!("{}", report.render());
            if let Some(out) = out {
                write_json(out, &report)?;
            }
            Ok(())
        }
        Command::Stats { records, out } => {
            let stats = corpus_stats(&read_records(records)?);
            let report = Report::new(&[], &[], Some(&stats), &[]);
            print!("{}", report.render());
            if let Some(out) = out {
                write_json(out, &stats)?;
            }
            Ok(())
        }
        Command::Review { records, journal, out, non_interactive } => review(records, journal, out, !non_interactive),
    }
}
