use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sieve_core::eval::{is_fully_tagged, AblationSetting, EvalOptions, SegmentProfiles};
use sieve_core::sources::{load_corpus, write_corpus};
use sieve_core::{
    ablate, load_dataset, load_registry, partition_corpus, run_eval, ChatModel, Endpoint, FrozenTimer, HttpGateway,
    Pipeline, PipelineConfig, PromptSet, Query, Script, ScriptedGateway, Segment, SystemTimer, Timer,
};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Parser)]
#[command(name = "sieve", version, about = "Multi-source question answering with planning, routing and reflexion")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Source registry (TOML).
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    /// Replay model replies from a JSON script instead of calling a provider.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Provider base URL (default: $LLM_BASE_URL, then the OpenAI endpoint).
    #[arg(long, global = true)]
    base_url: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    no_decompose: bool,
    #[arg(long, global = true)]
    no_routing: bool,
    #[arg(long, global = true)]
    no_reflexion: bool,
    #[arg(long, global = true)]
    max_attempts: Option<u32>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Directory of prompt template overrides (`<stage>.txt`).
    #[arg(long, global = true)]
    prompts: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question.
    Ask {
        question: String,
        /// Write the run trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score a JSON Lines dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Report path; a CSV with the same stem is written next to it.
        #[arg(long, default_value = "eval_report.json")]
        output: PathBuf,
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Tag corpus documents as local or global.
    Partition {
        #[arg(long)]
        corpus: PathBuf,
        /// TOML with `local` and `global` profile strings.
        #[arg(long)]
        profiles: PathBuf,
        /// Reclassify documents that already carry a tag.
        #[arg(long)]
        force: bool,
        /// Where to write the tagged corpus (default: in place).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the component ablation grid.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated subset, e.g. `full,naive`.
        #[arg(long, value_delimiter = ',')]
        settings: Vec<String>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "ablation.csv")]
        output: PathBuf,
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
}

impl Common {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if self.no_decompose {
            c.decompose = false;
        }
        if self.no_routing {
            c.use_routing = false;
        }
        if self.no_reflexion {
            c.use_reflexion = false;
        }
        if let Some(v) = self.max_attempts {
            c.max_reflexion_attempts = v;
        }
        if let Some(v) = self.top_k {
            c.top_k = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if let Some(v) = &self.model {
            c.model = v.clone();
        }
        c.validate()?;
        Ok(c)
    }

    fn prompt_set(&self) -> Result<PromptSet> {
        match &self.prompts {
            Some(dir) => PromptSet::with_overrides(dir).with_context(|| format!("reading prompts from {}", dir.display())),
            None => Ok(PromptSet::default()),
        }
    }

    fn gateway(&self, config: &PipelineConfig) -> Result<Box<dyn ChatModel>> {
        if let Some(path) = &self.script {
            let script = Script::load(path).map_err(anyhow::Error::msg)?;
            return Ok(Box::new(ScriptedGateway::new(script)));
        }
        let api_key = std::env::var("LLM_API_KEY")
            .ok()
            .filter(|k| !k.trim().is_empty())
            .context("LLM_API_KEY is not set; export it or pass --script for an offline run")?;
        let base_url = self
            .base_url
            .clone()
            .or_else(|| std::env::var("LLM_BASE_URL").ok())
            .unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
        Ok(Box::new(HttpGateway::new(
            Endpoint::new(base_url, api_key),
            config.max_retries,
            Duration::from_secs(config.request_timeout),
        )))
    }

    // scripted runs get a frozen clock so their traces are byte-stable
    fn timer(&self) -> Arc<dyn Timer> {
        if self.script.is_some() {
            Arc::new(FrozenTimer)
        } else {
            Arc::new(SystemTimer::default())
        }
    }

    fn registry_path(&self) -> Result<&Path> {
        match &self.registry {
            Some(p) if p.exists() => Ok(p),
            Some(p) => bail!("registry file {} does not exist", p.display()),
            None => bail!("--registry is required for this command"),
        }
    }

    fn jobs(&self, requested: usize) -> usize {
        if self.script.is_some() && requested > 1 {
            eprintln!("note: --jobs ignored with --script (replies are consumed in order)");
            1
        } else {
            requested.max(1)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn trace_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

fn write_traces(dir: &Path, ids: &[String], traces: &[Option<sieve_core::RunTrace>]) -> Result<()> {
    for (id, trace) in ids.iter().zip(traces) {
        if let Some(t) = trace {
            write_file(&dir.join(trace_file_name(id)), &t.to_json())?;
        }
    }
    Ok(())
}

fn cmd_ask(common: &Common, question: &str, trace_path: Option<&Path>) -> Result<()> {
    let config = common.pipeline_config()?;
    let gateway = common.gateway(&config)?;
    let registry = load_registry(common.registry_path()?)?;
    let query = Query::new("ask", question)?;
    let pipeline = Pipeline::new(&registry, config)?
        .with_prompts(common.prompt_set()?)
        .with_timer(common.timer());
    let trace = pipeline.run(&query, gateway.as_ref())?;
    if let Some(path) = trace_path {
        write_file(path, &trace.to_json())?;
    }
    println!("{}", trace.final_answer);
    Ok(())
}

fn cmd_eval(
    common: &Common,
    dataset: &Path,
    limit: Option<usize>,
    jobs: usize,
    output: &Path,
    trace_dir: Option<&Path>,
) -> Result<()> {
    let config = common.pipeline_config()?;
    let gateway = common.gateway(&config)?;
    let registry = load_registry(common.registry_path()?)?;
    let mut examples = load_dataset(dataset)?;
    if let Some(n) = limit {
        examples.truncate(n);
    }
    let timer = common.timer();
    let pipeline = Pipeline::new(&registry, config)?
        .with_prompts(common.prompt_set()?)
        .with_timer(timer.clone());
    let run = run_eval(&examples, &pipeline, gateway.as_ref(), common.jobs(jobs), timer.as_ref());
    write_file(output, &run.report.to_json())?;
    write_file(&output.with_extension("csv"), &run.report.to_csv())?;
    if let Some(dir) = trace_dir {
        let ids: Vec<String> = examples.iter().map(|e| e.id.clone()).collect();
        write_traces(dir, &ids, &run.traces)?;
    }
    println!("{}", run.report.summary_line());
    Ok(())
}

fn cmd_partition(common: &Common, corpus: &Path, profiles: &Path, force: bool, output: Option<&Path>) -> Result<()> {
    let profiles = SegmentProfiles::load(profiles).map_err(|e| anyhow::anyhow!("invalid profiles: {e}"))?;
    let mut docs = load_corpus(corpus)?;
    let out_path = output.unwrap_or(corpus);
    if is_fully_tagged(&docs) && !force {
        let local = docs.iter().filter(|d| d.segment == Segment::Local).count();
        eprintln!("corpus is already partitioned; pass --force to reclassify");
        if out_path != corpus {
            write_corpus(out_path, &docs)?;
        }
        println!("local={local} global={}", docs.len() - local);
        return Ok(());
    }
    if force {
        docs.iter_mut().for_each(|d| d.segment = Segment::Unassigned);
    }
    let config = common.pipeline_config()?;
    let gateway = common.gateway(&config)?;
    let summary = partition_corpus(&mut docs, &profiles, gateway.as_ref(), &config, &common.prompt_set()?)?;
    write_corpus(out_path, &docs).with_context(|| format!("writing {}", out_path.display()))?;
    if summary.fallbacks > 0 {
        eprintln!("{} documents defaulted to global", summary.fallbacks);
    }
    println!("local={} global={}", summary.local, summary.global);
    Ok(())
}

fn cmd_ablate(
    common: &Common,
    dataset: &Path,
    settings: &[String],
    limit: Option<usize>,
    jobs: usize,
    output: &Path,
    trace_dir: Option<&Path>,
) -> Result<()> {
    let grid: Vec<AblationSetting> = if settings.is_empty() {
        AblationSetting::ALL.to_vec()
    } else {
        settings
            .iter()
            .map(|s| s.parse().map_err(anyhow::Error::msg))
            .collect::<Result<_>>()?
    };
    let base = common.pipeline_config()?;
    let gateway = common.gateway(&base)?;
    let registry = load_registry(common.registry_path()?)?;
    let mut examples = load_dataset(dataset)?;
    if let Some(n) = limit {
        examples.truncate(n);
    }
    let options = EvalOptions {
        base,
        prompts: common.prompt_set()?,
        timer: common.timer(),
        jobs: common.jobs(jobs),
    };
    let outcome = ablate(&examples, &registry, gateway.as_ref(), &grid, &options)?;
    write_file(output, &outcome.table.to_csv())?;
    if let Some(dir) = trace_dir {
        let ids: Vec<String> = examples.iter().map(|e| e.id.clone()).collect();
        for (setting, run) in &outcome.runs {
            write_traces(&dir.join(setting.as_str()), &ids, &run.traces)?;
        }
    }
    for row in &outcome.table.rows {
        match &row.aggregate {
            Some(a) => println!(
                "{:<20} EM={:.4} F1={:.4} tokens={:.1}",
                row.setting.as_str(),
                a.em,
                a.f1,
                a.mean_total_tokens
            ),
            None => println!("{:<20} unsupported", row.setting.as_str()),
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let common = &cli.common;
    match &cli.command {
        Command::Ask { question, trace } => cmd_ask(common, question, trace.as_deref()),
        Command::Eval {
            dataset,
            limit,
            jobs,
            output,
            trace_dir,
        } => cmd_eval(common, dataset, *limit, *jobs, output, trace_dir.as_deref()),
        Command::Partition {
            corpus,
            profiles,
            force,
            output,
        } => cmd_partition(common, corpus, profiles, *force, output.as_deref()),
        Command::Ablate {
            dataset,
            settings,
            limit,
            jobs,
            output,
            trace_dir,
        } => cmd_ablate(common, dataset, settings, *limit, *jobs, output, trace_dir.as_deref()),
    }
}
