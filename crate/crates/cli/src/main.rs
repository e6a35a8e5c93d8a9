use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use divlens::config::Config;
use divlens::pipeline::{self, ArchiveSource, BaselineSource, Params, Pipeline, VocabMethod};
use divlens::stats::{RANK_SUM_EXACT_MAX, SIGNED_RANK_EXACT_MAX};
use divlens::synth::{BanResponse, SynthSpec};

#[derive(Parser)]
#[command(name = "divlens", version, about = "In-group vocabulary and ban-response analysis of community comment archives")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random step (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration (TOML)
    #[arg(long, global = true, default_value = "divlens.toml")]
    config: PathBuf,
    /// Directory receiving all outputs
    #[arg(long, global = true, default_value = "divlens-out")]
    out_dir: PathBuf,
    /// Size of each in-group vocabulary [default: 100]
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Most common baseline words removed before the divergence ranking [default: 10000]
    #[arg(long, global = true)]
    remove_top: Option<usize>,
    /// Days in each of the pre-ban and post-ban user windows [default: 60]
    #[arg(long, global = true)]
    window_days: Option<u32>,
    /// Days of pre-ban community text forming the corpus [default: 182]
    #[arg(long, global = true)]
    corpus_days: Option<u32>,
    /// Process a single community from the config
    #[arg(long, global = true)]
    community: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Jsd,
    Sage,
}

impl From<Method> for VocabMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Jsd => VocabMethod::Jsd,
            Method::Sage => VocabMethod::Sage,
        }
    }
}

#[derive(Args)]
struct MethodArg {
    /// Which vocabulary the stage reads
    #[arg(long, value_enum, default_value = "jsd")]
    method: Method,
}

#[derive(Subcommand)]
enum Command {
    /// Build frequency tables and user counts from the configured archives
    Ingest {
        /// Fetch community comments from the archive service in DIVLENS_ARCHIVE_URL
        #[arg(long)]
        fetch: bool,
    },
    /// Draw a uniform sample of comment IDs from each community's ID range
    SampleBaseline {
        #[arg(long)]
        count: usize,
        /// Platform archive shards to pull the sampled comments from
        #[arg(long, num_args = 1.., conflicts_with = "fetch")]
        from_archive: Vec<PathBuf>,
        /// Fetch the sampled comments from the archive service
        #[arg(long)]
        fetch: bool,
    },
    /// Extract the in-group vocabulary
    Vocab {
        #[arg(value_enum)]
        method: Method,
    },
    /// Select the top and random user cohorts
    Cohorts {
        #[arg(long)]
        top_users: Option<usize>,
        #[arg(long)]
        random_users: Option<usize>,
    },
    /// Compute per-user activity and vocabulary shifts
    Shifts(MethodArg),
    /// Run the signed-rank and rank-sum battery with FDR correction
    #[command(long_about = format!(
        "Run the signed-rank and rank-sum battery with Benjamini-Hochberg correction.\n\n\
         Signed-rank p-values are exact up to {SIGNED_RANK_EXACT_MAX} non-zero differences and \
         rank-sum p-values up to {RANK_SUM_EXACT_MAX} pooled observations; larger samples use a \
         tie-corrected normal approximation with continuity correction. All p-values are two-sided."
    ))]
    Stats(MethodArg),
    /// Write per-community median shifts, omission counts and q-values
    Summarize(MethodArg),
    /// Compare vocabularies across communities and between methods
    Overlap(MethodArg),
    /// Resolve obscured community names against a candidate list
    Deobfuscate {
        /// Text file of patterns such as "ge************"
        #[arg(long)]
        obscured: PathBuf,
        /// CSV with columns name,population
        #[arg(long)]
        candidates: PathBuf,
        /// Output CSV [default: <out-dir>/deobfuscated.csv]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic community, its baseline and a matching config
    Synth {
        /// TOML file with generator settings
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        top_activity: Option<f64>,
        #[arg(long)]
        top_vocab: Option<f64>,
        #[arg(long)]
        random_activity: Option<f64>,
        #[arg(long)]
        random_vocab: Option<f64>,
    },
    /// Run ingest through summarize in one go
    Run {
        #[arg(long, value_enum, num_args = 1.., default_values = ["jsd"])]
        methods: Vec<Method>,
    },
}

fn resolve_params(global: &Global, cfg: &Config) -> Params {
    let mut p = Params::from_config(cfg);
    if let Some(v) = global.seed {
        p.seed = v;
    }
    if let Some(v) = global.top_k {
        p.top_k = v;
    }
    if let Some(v) = global.remove_top {
        p.remove_top = v;
    }
    if let Some(v) = global.window_days {
        p.window_days = v;
    }
    if let Some(v) = global.corpus_days {
        p.corpus_days = v;
    }
    p
}

fn open_pipeline(global: &Global, tweak: impl FnOnce(&mut Params)) -> Result<Pipeline> {
    let cfg = Config::load(&global.config).with_context(|| format!("loading {}", global.config.display()))?;
    let mut params = resolve_params(global, &cfg);
    tweak(&mut params);
    Ok(Pipeline::new(cfg, params, &global.out_dir)?.only(global.community.clone())?)
}

fn synth_spec(global: &Global, command: &Command) -> Result<SynthSpec> {
    let Command::Synth { spec, users, top_activity, top_vocab, random_activity, random_vocab } = command else {
        unreachable!()
    };
    let mut s = match spec {
        Some(path) => SynthSpec::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => SynthSpec::default(),
    };
    if let Some(v) = global.seed {
        s.seed = v;
    }
    if let Some(v) = global.window_days {
        s.window_days = v;
    }
    if let Some(v) = global.corpus_days {
        s.corpus_days = v;
    }
    if let Some(v) = users {
        s.n_users = *v;
    }
    let adjust = |r: &mut BanResponse, a: &Option<f64>, v: &Option<f64>| {
        if let Some(a) = a {
            r.activity_multiplier = *a;
        }
        if let Some(v) = v {
            r.vocab_rate_multiplier = *v;
        }
    };
    adjust(&mut s.top_response, top_activity, top_vocab);
    adjust(&mut s.random_response, random_activity, random_vocab);
    Ok(s)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let g = &cli.global;

    match &cli.command {
        Command::Ingest { fetch } => {
            let p = open_pipeline(g, |_| {})?;
            let source = if *fetch { ArchiveSource::Remote } else { ArchiveSource::Local };
            for r in p.ingest(source)? {
                println!("{}: {} comments ({} malformed), {} baseline comments", r.community, r.comments, r.malformed, r.baseline_comments);
            }
        }
        Command::SampleBaseline { count, from_archive, fetch } => {
            let p = open_pipeline(g, |_| {})?;
            let source = if *fetch {
                BaselineSource::Remote
            } else if from_archive.is_empty() {
                BaselineSource::IdsOnly
            } else {
                BaselineSource::Archive(from_archive.clone())
            };
            for (name, n) in p.sample_baseline(*count, &source)? {
                println!("{name}: sampled {count} ids, retrieved {n} comments");
            }
        }
        Command::Vocab { method } => {
            let p = open_pipeline(g, |_| {})?;
            for list in p.vocab((*method).into())? {
                println!("{}: {} words", list.community, list.len());
            }
        }
        Command::Cohorts { top_users, random_users } => {
            let p = open_pipeline(g, |params| {
                if let Some(v) = top_users {
                    params.top_users = *v;
                }
                if let Some(v) = random_users {
                    params.random_users = *v;
                }
            })?;
            let names: Vec<String> = p.communities().iter().map(|c| c.name.clone()).collect();
            for (name, sel) in names.iter().zip(p.cohorts()?) {
                println!("{name}: {} top, {} random, {} excluded", sel.top.len(), sel.random.len(), sel.omitted.len());
            }
        }
        Command::Shifts(m) => {
            let p = open_pipeline(g, |_| {})?;
            let names: Vec<String> = p.communities().iter().map(|c| c.name.clone()).collect();
            for (name, (kept, omitted)) in names.iter().zip(p.shifts(m.method.into())?) {
                println!("{name}: {} users kept, {} omitted", kept.len(), omitted.len());
            }
        }
        Command::Stats(m) => {
            let p = open_pipeline(g, |_| {})?;
            let rows = p.stats(m.method.into())?;
            let rejected = rows.iter().filter(|r| r.significant).count();
            println!("{} tests, {rejected} significant at q <= 0.05", rows.len());
        }
        Command::Summarize(m) => {
            let p = open_pipeline(g, |_| {})?;
            for s in p.summarize(m.method.into())? {
                let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.3}"));
                println!(
                    "{} [{}]: top activity {} vocab {}; random activity {} vocab {}",
                    s.community,
                    s.category,
                    fmt(s.top.median_activity_shift),
                    fmt(s.top.median_vocab_shift),
                    fmt(s.random.median_activity_shift),
                    fmt(s.random.median_vocab_shift)
                );
            }
        }
        Command::Overlap(m) => {
            let p = open_pipeline(g, |_| {})?;
            for r in p.overlap(m.method.into())? {
                println!("{}: {} of {} JSD words also selected by SAGE", r.community, r.overlap, r.jsd_words);
            }
        }
        Command::Deobfuscate { obscured, candidates, output } => {
            let out = output.clone().unwrap_or_else(|| g.out_dir.join("deobfuscated.csv"));
            let matched = pipeline::deobfuscate_files(obscured, candidates, &out)?;
            println!("{matched} names matched; written to {}", out.display());
        }
        cmd @ Command::Synth { .. } => {
            let spec = synth_spec(g, cmd)?;
            let path = pipeline::synthesize(&spec, &g.out_dir)?;
            info!("synthetic community {} with {} users", spec.community, spec.n_users);
            println!("{}", path.display());
        }
        Command::Run { methods } => {
            if methods.is_empty() {
                bail!("no vocabulary method given");
            }
            let methods: Vec<VocabMethod> = methods.iter().map(|&m| m.into()).collect();
            let p = open_pipeline(g, |_| {})?;
            let summaries = p.run(&methods)?;
            if methods.contains(&VocabMethod::Jsd) && methods.contains(&VocabMethod::Sage) {
                p.overlap(VocabMethod::Jsd)?;
            }
            for (m, list) in summaries {
                println!("{m}: summarized {} communities", list.len());
            }
        }
    }
    Ok(())
}
