use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use omog::bank::{bank_add, bank_load, bank_verify, BankEntry};
use omog::eval::{
    leave_one_out, seed_from_env, support_set, sweep, write_csv, Ablation, ExperimentPlan, SweepPoint,
};
use omog::fuse::{
    encode_nodes, fuse_models, relevance_scores, sample_nodes, select_and_weight, FusedModel, Strategy,
    RELEVANCE_SAMPLE,
};
use omog::pretrain::{pretrain_entry_on, EpochLog, TrainConfig};
use omog::propagate::{cached_hop_stack, hop_stack, HopStack};
use omog::similarity::cosine;
use omog::synthetic::DomainSuiteSpec;
use omog::theory::{run_theory_checks, DEFAULT_SAMPLES};
use omog::{load_dataset, GraphDataset};

#[derive(Parser)]
#[command(name = "omog", version, about = "One pretrained model per graph: bank, fusion and inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the source model, centroid and scoring module of one graph
    /// and add them to a bank.
    Pretrain {
        #[arg(long)]
        dataset: PathBuf,
        /// Bank directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// JSON training configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Read or write the propagated hop stack inside the dataset directory.
        #[arg(long)]
        cache_hops: bool,
    },
    /// Inspect or modify a model bank.
    Bank {
        #[command(subcommand)]
        action: BankAction,
    },
    /// Zero- or few-shot node classification on a graph.
    InferNc {
        #[command(flatten)]
        fusion: FusionArgs,
        /// Shots per class; enables few-shot prediction.
        #[arg(long)]
        few_shot: Option<usize>,
    },
    /// Link scores for node pairs listed one `u v` per line.
    InferLp {
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Leave-one-out evaluation described by a JSON plan.
    EvalLoo(PlanArgs),
    /// Evaluate a plan over several `k` values and strategies.
    Sweep {
        #[command(flatten)]
        plan: PlanArgs,
        /// Comma-separated k values (default: 1 up to the fold bank size).
        #[arg(long, value_delimiter = ',')]
        k_values: Vec<usize>,
        /// Comma-separated strategies (default: the plan's strategy).
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<Strategy>,
    },
    /// Leave-one-out evaluation with one ablation applied.
    Ablate {
        #[arg(long)]
        mode: Ablation,
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Numerical checks of the Gaussian fusion argument.
    TheoryCheck {
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for theory_report.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a suite of synthetic graph datasets.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// JSON suite configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BankAction {
    /// One line per entry.
    List { bank: PathBuf },
    /// Copy an entry directory into the bank.
    Add { bank: PathBuf, entry: PathBuf },
    /// Reload every entry and check it re-encodes to the stored bytes.
    Verify { bank: PathBuf },
}

#[derive(Args)]
struct FusionArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = omog::fuse::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = Strategy::TopK)]
    strategy: Strategy,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep a bank entry whose name equals the dataset's name.
    #[arg(long)]
    allow_self: bool,
    #[arg(long)]
    cache_hops: bool,
    /// JSON-lines output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    /// Report directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Pretrain {
            dataset,
            out,
            config,
            cache_hops,
        } => pretrain(&dataset, &out, config.as_deref(), cache_hops)?,
        Command::Bank { action } => return bank(action),
        Command::InferNc { fusion, few_shot } => infer_nc(&fusion, few_shot)?,
        Command::InferLp { fusion, pairs } => infer_lp(&fusion, &pairs)?,
        Command::EvalLoo(args) => {
            let plan = ExperimentPlan::load(&args.plan)?;
            let report = leave_one_out(&plan, &args.bank)?;
            write_report(&args.out, "loo", &report)?;
        }
        Command::Sweep {
            plan,
            k_values,
            strategies,
        } => run_sweep(&plan, k_values, strategies)?,
        Command::Ablate { mode, plan: args } => {
            let mut plan = ExperimentPlan::load(&args.plan)?;
            plan.ablation = mode;
            let report = leave_one_out(&plan, &args.bank)?;
            write_report(&args.out, &format!("ablate_{mode}"), &report)?;
        }
        Command::TheoryCheck { samples, seed, out } => {
            let seed = seed_from_env()?.unwrap_or(seed);
            let report = run_theory_checks(samples, seed)?;
            print!("{}", report.table());
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join("theory_report.json");
            write_pretty(&path, &report)?;
            log::info!("wrote {}", path.display());
            if !report.all_passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Generate { out, config } => {
            let mut spec: DomainSuiteSpec = match config {
                Some(p) => read_config(&p)?,
                None => DomainSuiteSpec::default(),
            };
            if let Some(seed) = seed_from_env()? {
                spec.seed = seed;
            }
            for ds in spec.generate()? {
                let dir = out.join(&ds.name);
                ds.save(&dir)?;
                println!("{}", dir.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_config<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn hops_for(ds: &GraphDataset, dir: &Path, alpha: usize, cache: bool) -> Result<HopStack> {
    Ok(if cache {
        cached_hop_stack(ds, dir, alpha)?
    } else {
        hop_stack(ds, alpha)?
    })
}

fn write_log(path: &Path, stage: &str, log: &[EpochLog], w: &mut impl Write) -> Result<()> {
    for rec in log {
        let line = json!({"stage": stage, "epoch": rec.epoch, "mean_loss": rec.mean_loss, "wall_ms": rec.wall_ms});
        writeln!(w, "{line}").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn pretrain(dataset_dir: &Path, out: &Path, config: Option<&Path>, cache: bool) -> Result<()> {
    let mut cfg: TrainConfig = match config {
        Some(p) => read_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed_from_env()? {
        cfg.seed = seed;
    }
    let ds = load_dataset(dataset_dir)?;
    let hops = hops_for(&ds, dataset_dir, cfg.alpha, cache)?;
    log::info!("pretraining `{}` (n={}, d={})", ds.name, ds.n(), ds.d());
    let outcome = pretrain_entry_on(&ds, &hops, &cfg)?;
    let bank = bank_add(out, &outcome.entry)?;
    let log_path = out.join(&ds.name).join("train_log.jsonl");
    let mut w = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    write_log(&log_path, "source", &outcome.source_log, &mut w)?;
    write_log(&log_path, "scoring", &outcome.scoring_log, &mut w)?;
    w.flush()?;
    let first = outcome.source_log.first().map_or(f64::NAN, |l| l.mean_loss);
    let last = outcome.source_log.last().map_or(f64::NAN, |l| l.mean_loss);
    println!(
        "added `{}` to {} ({} entries); contrastive loss {first:.4} -> {last:.4}",
        ds.name,
        out.display(),
        bank.len()
    );
    Ok(())
}

fn bank(action: BankAction) -> Result<ExitCode> {
    match action {
        BankAction::List { bank } => {
            for e in bank_load(&bank)?.entries() {
                let c = &e.config;
                println!(
                    "{}\td={}\talpha={}\td_ff={}\td_h={}\tseed={}",
                    c.name, c.d, c.alpha, c.d_ff, c.d_h, c.seed
                );
            }
        }
        BankAction::Add { bank, entry } => {
            let e = BankEntry::load(&entry)?;
            let b = bank_add(&bank, &e)?;
            println!("added `{}` ({} entries)", e.name(), b.len());
        }
        BankAction::Verify { bank } => {
            let lines = bank_verify(&bank)?;
            let mut ok = true;
            for l in &lines {
                println!("{}\t{}\t{}", l.name, if l.ok { "ok" } else { "FAIL" }, l.detail);
                ok &= l.ok;
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

struct Prepared {
    dataset: GraphDataset,
    hops: HopStack,
    fused: FusedModel,
    names: Vec<String>,
}

fn prepare_fusion(args: &FusionArgs) -> Result<Prepared> {
    let seed = seed_from_env()?.unwrap_or(args.seed);
    let dataset = load_dataset(&args.dataset)?;
    let mut bank = bank_load(&args.bank)?;
    if !args.allow_self && bank.get(&dataset.name).is_some() {
        log::warn!("excluding bank entry `{}` (same name as the dataset)", dataset.name);
        bank = bank.without(&dataset.name);
    }
    let Some((_, alpha)) = bank.shape() else {
        bail!("bank {} has no usable entries", args.bank.display());
    };
    let hops = hops_for(&dataset, &args.dataset, alpha, args.cache_hops)?;
    let sample = sample_nodes(dataset.n(), RELEVANCE_SAMPLE, seed);
    let scores = relevance_scores(&bank, &hops, Some(&sample))?;
    let weights = select_and_weight(&scores, args.k, args.strategy, args.temperature, seed)?;
    let names: Vec<String> = bank.names().iter().map(|s| s.to_string()).collect();
    for (n, s) in names.iter().zip(&scores.0) {
        log::info!("relevance {n}: {s:.4}");
    }
    for (&i, w) in weights.indices.iter().zip(&weights.weights) {
        log::info!("fusing {} with weight {w:.4}", names[i]);
    }
    let fused = fuse_models(&bank, &weights)?;
    Ok(Prepared {
        dataset,
        hops,
        fused,
        names,
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn infer_nc(args: &FusionArgs, few_shot: Option<usize>) -> Result<()> {
    let p = prepare_fusion(args)?;
    let ds = &p.dataset;
    let Some(labels) = ds.label_embeddings.as_ref() else {
        bail!("dataset `{}` has no label embeddings", ds.name);
    };
    let model = &p.fused.source;
    let mut nodes: Vec<usize> = match &ds.splits.test {
        Some(t) => t.iter().map(|&i| i as usize).collect(),
        None => (0..ds.n()).collect(),
    };
    let support = match few_shot {
        Some(shots) => {
            if shots == 0 {
                bail!("--few-shot needs at least one shot");
            }
            let seed = seed_from_env()?.unwrap_or(args.seed);
            let s = support_set(ds, shots, &nodes, seed)?;
            let used: std::collections::HashSet<usize> = s.nodes.iter().flatten().copied().collect();
            nodes.retain(|i| !used.contains(i));
            Some((s.class_means(model, &p.hops)?, s.classes))
        }
        None => None,
    };
    let f = encode_nodes(model, &p.hops, &nodes)?;
    let mut w = output(args.out.as_deref())?;
    for (row, &node) in f.outer_iter().zip(&nodes) {
        // Class scores in class-id order; ties resolve to the first.
        let (classes, scores): (Vec<u32>, Vec<f64>) = match &support {
            None => (0..labels.nrows() as u32)
                .map(|c| (c, cosine(row, labels.row(c as usize))))
                .unzip(),
            Some((means, classes)) => classes
                .iter()
                .enumerate()
                .map(|(i, &c)| (c, cosine(row, means.row(i)) + cosine(row, labels.row(c as usize))))
                .unzip(),
        };
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        let line = json!({"node": node, "classes": classes, "scores": scores, "prediction": classes[best]});
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    log::info!("predicted {} nodes with {} fused entries of {}", nodes.len(), p.fused.weights.indices.len(), p.names.len());
    Ok(())
}

fn read_pairs(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut pairs = Vec::new();
    for (no, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<usize>);
        let (Some(Ok(u)), Some(Ok(v)), None) = (it.next(), it.next(), it.next()) else {
            bail!("{}:{}: expected two node ids", path.display(), no + 1);
        };
        if u >= n || v >= n {
            bail!("{}:{}: node id out of range (n={n})", path.display(), no + 1);
        }
        pairs.push((u, v));
    }
    Ok(pairs)
}

fn infer_lp(args: &FusionArgs, pairs_path: &Path) -> Result<()> {
    let p = prepare_fusion(args)?;
    let pairs = read_pairs(pairs_path, p.dataset.n())?;
    let mut nodes: Vec<usize> = pairs.iter().flat_map(|&(u, v)| [u, v]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let f = encode_nodes(&p.fused.source, &p.hops, &nodes)?;
    let row = |i: usize| f.row(nodes.binary_search(&i).expect("encoded"));
    let mut w = output(args.out.as_deref())?;
    for &(u, v) in &pairs {
        let score = cosine(row(u), row(v));
        let line = json!({"pair": [u, v], "score": score, "prediction": score > 0.0});
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_report(dir: &Path, stem: &str, report: &omog::eval::MetricReport) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    report.write_json(&dir.join(format!("{stem}.json")))?;
    report.write_csv(&dir.join(format!("{stem}.csv")))?;
    for s in &report.per_dataset {
        println!("{}\t{}={:.4} (std {:.4}, {} runs)", s.dataset, report.metric, s.mean, s.std, s.runs);
    }
    println!("mean\t{}={:.4}", report.metric, report.mean);
    Ok(())
}

fn run_sweep(args: &PlanArgs, k_values: Vec<usize>, strategies: Vec<Strategy>) -> Result<()> {
    let plan = ExperimentPlan::load(&args.plan)?;
    let k_values = if k_values.is_empty() {
        (1..plan.datasets.len()).collect()
    } else {
        k_values
    };
    let strategies = if strategies.is_empty() {
        vec![plan.strategy]
    } else {
        strategies
    };
    let points: Vec<SweepPoint> = strategies
        .iter()
        .flat_map(|&strategy| k_values.iter().map(move |&k| SweepPoint { k, strategy }))
        .collect();
    let reports = sweep(&plan, &args.bank, &points)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_csv(&args.out.join("sweep.csv"), &reports)?;
    write_pretty(&args.out.join("sweep.json"), &reports)?;
    for r in &reports {
        println!("{}\tk={}\t{}={:.4}", r.strategy, r.k, r.metric, r.mean);
    }
    Ok(())
}
