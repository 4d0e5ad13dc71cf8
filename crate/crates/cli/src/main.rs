use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use nser_core::config::RunConfig;
use nser_core::eval::{
    format_table, gen_synth, random_baseline, run_experiment, write_csv, write_user_csv,
};
use nser_core::executor::{explain, write_recommendations, RECOMMENDATION_HEADER};
use nser_core::graph::{ingest_triples, write_graph, EntityRef, Graph};
use nser_core::layout::{LayoutStrategy, MetaLayout};
use nser_core::model::Model;
use nser_core::pipeline::{self, Prepared};
use nser_core::teacher::Teacher;

macro_rules! say {
    ($($t:tt)*) => { writeln!(std::io::stdout(), $($t)*)? };
}

macro_rules! say_raw {
    ($($t:tt)*) => { write!(std::io::stdout(), $($t)*)? };
}

#[derive(Parser, Debug)]
#[command(
    name = "nser",
    version,
    about = "Coarse-to-fine explainable recommendation over knowledge graphs"
)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// `section.key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Triple file.
    #[arg(long, global = true)]
    graph: Option<PathBuf>,
    /// Entity file; defaults to `entities.tsv` next to the triple file.
    #[arg(long, global = true)]
    entities: Option<PathBuf>,
    /// Model checkpoint.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Teacher checkpoint.
    #[arg(long, global = true)]
    teacher: Option<PathBuf>,
    /// User name, `name` or `type:name`.
    #[arg(long, global = true)]
    user: Option<String>,
    /// Item name, `name` or `type:name`.
    #[arg(long, global = true)]
    item: Option<String>,
    #[arg(long, global = true)]
    topn: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f32>,
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long = "layout-strategy", global = true)]
    layout_strategy: Option<LayoutStrategy>,
    /// Extra `section.key=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Validate an entity/triple pair and write normalized copies.
    Ingest,
    /// Generate the planted synthetic graph.
    GenSynth,
    /// Train the matrix-factorization teacher on the training split.
    TrainTeacher,
    /// Train the relation modules on the training split.
    Train,
    /// Print a user's abstract meta-layout and per-metapath values.
    Layout,
    /// Recommend items with explanation paths.
    Recommend,
    /// Print every path supporting one recommended item.
    Explain,
    /// Evaluate a trained model on the held-out split.
    Evaluate,
    /// Run the lambda and layout-strategy sweep.
    Experiment,
}

fn load_config(o: &Opts) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(p) = &o.out {
        cfg.out = p.clone();
    }
    if let Some(p) = &o.graph {
        cfg.graph = Some(p.clone());
    }
    if let Some(p) = &o.entities {
        cfg.entities = Some(p.clone());
    }
    if let Some(p) = &o.model {
        cfg.model = Some(p.clone());
    }
    if let Some(p) = &o.teacher {
        cfg.teacher_path = Some(p.clone());
    }
    if let Some(n) = o.topn {
        cfg.topn = n;
    }
    if let Some(l) = o.lambda {
        cfg.train.lambda = l;
        cfg.experiment.lambdas = vec![l];
    }
    if let Some(k) = o.budget {
        cfg.layout.budget = k;
    }
    if let Some(s) = o.layout_strategy {
        cfg.layout.strategy = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn graph_files(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    let triples = cfg
        .graph
        .clone()
        .ok_or_else(|| anyhow!("--graph is required"))?;
    let entities = cfg.entities.clone().unwrap_or_else(|| {
        triples
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("entities.tsv")
    });
    Ok((entities, triples))
}

fn load_graph(cfg: &RunConfig) -> Result<Graph> {
    let (entities, triples) = graph_files(cfg)?;
    let (g, stats) = ingest_triples(&entities, &triples)?;
    log::info!(
        "graph: {} entities, {} triples, {} duplicates",
        g.num_entities(),
        g.num_triples(),
        stats.duplicates
    );
    Ok(g)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn require_model(cfg: &RunConfig) -> Result<&Path> {
    cfg.model
        .as_deref()
        .ok_or_else(|| anyhow!("model checkpoint required (--model)"))
}

fn load_model(cfg: &RunConfig, g: &Graph) -> Result<Model> {
    let path = require_model(cfg)?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Model::from_checkpoint(g, &bytes)?)
}

fn load_teacher(cfg: &RunConfig, g: &Graph) -> Result<Teacher> {
    let path = cfg
        .teacher_path
        .as_ref()
        .ok_or_else(|| anyhow!("teacher checkpoint required (--teacher)"))?;
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Teacher::from_checkpoint(g, &bytes)?)
}

fn entity(g: &Graph, flag: &str, token: Option<&String>, ty: usize) -> Result<EntityRef> {
    let token = token.ok_or_else(|| anyhow!("--{flag} is required"))?;
    let qualified = format!("{}:{token}", g.type_name(ty));
    g.resolve(&qualified)
        .or_else(|| g.resolve(token))
        .filter(|e| e.type_id == ty)
        .ok_or_else(|| anyhow!("unknown {flag} `{token}`"))
}

fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let (entities, triples) = graph_files(cfg)?;
    let (g, stats) = ingest_triples(&entities, &triples)?;
    let out = out_dir(cfg)?;
    write_graph(&g, &out.join("entities.tsv"), &out.join("triples.tsv"))?;
    write_file(&out.join("graph_stats.tsv"), format!("{stats}\n"))?;
    say!("{stats}");
    Ok(())
}

fn cmd_gen_synth(cfg: &RunConfig) -> Result<()> {
    let (g, truth) = gen_synth(&cfg.synth, cfg.seed)?;
    let out = out_dir(cfg)?;
    write_graph(&g, &out.join("entities.tsv"), &out.join("triples.tsv"))?;
    say!(
        "{} entities, {} triples, preference share {:.3}",
        g.num_entities(),
        g.num_triples(),
        truth.preference_share()
    );
    Ok(())
}

fn cmd_train_teacher(cfg: &RunConfig) -> Result<()> {
    let g = load_graph(cfg)?;
    let prepared = pipeline::prepare(&g, cfg)?;
    let (teacher, report) = pipeline::fit_teacher(&prepared.train_graph, cfg)?;
    let out = out_dir(cfg)?;
    write_file(&out.join("teacher.ckpt"), teacher.to_checkpoint())?;
    let mut log = String::from("epoch,loss\n");
    for (e, l) in report.epoch_losses.iter().enumerate() {
        log.push_str(&format!("{},{l:.6}\n", e + 1));
    }
    write_file(&out.join("teacher_log.csv"), log)?;
    if let Some(l) = report.epoch_losses.last() {
        say!(
            "teacher: {} epochs, final loss {l:.6}",
            report.epoch_losses.len()
        );
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let g = load_graph(cfg)?;
    let teacher = load_teacher(cfg, &g)?;
    let prepared = pipeline::prepare(&g, cfg)?;
    let (model, report) =
        pipeline::fit_model(&prepared.train_graph, &teacher, &cfg.train_config())?;
    let out = out_dir(cfg)?;
    write_file(&out.join("model.ckpt"), model.to_checkpoint())?;
    // Wall-clock time stays in the log, so the artifact is reproducible.
    let mut log = String::from("epoch,path_loss,rank_loss,total_loss\n");
    for e in &report.epochs {
        log::info!("epoch {e}");
        log.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            e.epoch, e.mean_path_loss, e.mean_rank_loss, e.mean_total_loss
        ));
    }
    write_file(&out.join("train_log.csv"), log)?;
    say!(
        "trained {} epochs over {} units ({} users without positive paths)",
        report.epochs.len(),
        report.units,
        report.degenerate_users
    );
    Ok(())
}

fn cmd_layout(cfg: &RunConfig, o: &Opts) -> Result<()> {
    require_model(cfg)?;
    let g = load_graph(cfg)?;
    let user = entity(&g, "user", o.user.as_ref(), g.user_type())?;
    let model = load_model(cfg, &g)?;
    if g.interactions_of(user).is_empty() {
        say!(
            "user `{}` has no interactions; the layout is empty",
            g.entity_name(user.global_id)
        );
        say_raw!("{}", MetaLayout::default().serialize(&g));
        return Ok(());
    }
    let metapaths = pipeline::candidates(&g, &cfg.layout);
    let rec = pipeline::recommend_user(&model, &g, user, &metapaths, cfg, &cfg.layout)?;
    say_raw!("{}", rec.plan.layout.serialize(&g));
    say!("metapath,v,y");
    for ((mp, v), y) in rec
        .plan
        .metapaths
        .iter()
        .zip(&rec.plan.values)
        .zip(&rec.plan.allocation)
    {
        say!("{},{v:.6},{y}", g.metapath_name(mp));
    }
    Ok(())
}

fn cmd_recommend(cfg: &RunConfig, o: &Opts) -> Result<()> {
    require_model(cfg)?;
    let g = load_graph(cfg)?;
    let model = load_model(cfg, &g)?;
    let user = entity(&g, "user", o.user.as_ref(), g.user_type())?;
    let metapaths = pipeline::candidates(&g, &cfg.layout);
    let rec = pipeline::recommend_user(&model, &g, user, &metapaths, cfg, &cfg.layout)?;
    let out = out_dir(cfg)?;
    let path = out.join(format!(
        "recommendations_{}.csv",
        g.entity_name(user.global_id)
    ));
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(RECOMMENDATION_HEADER)?;
    write_recommendations(&mut w, &g, user, &rec.result)?;
    w.flush()?;
    if rec.result.items.is_empty() {
        say!("no recommendations for `{}`", g.entity_name(user.global_id));
    }
    for (rank, item) in rec.result.items.iter().enumerate() {
        say!(
            "{}. {} ({:.4})",
            rank + 1,
            g.entity_name(item.item.global_id),
            item.score
        );
        if let Some(best) = item.paths.first() {
            say!("   {}", explain(&best.path, &g)?);
        }
    }
    Ok(())
}

fn cmd_explain(cfg: &RunConfig, o: &Opts) -> Result<()> {
    require_model(cfg)?;
    let g = load_graph(cfg)?;
    let model = load_model(cfg, &g)?;
    let user = entity(&g, "user", o.user.as_ref(), g.user_type())?;
    let item = entity(&g, "item", o.item.as_ref(), g.item_type())?;
    let metapaths = pipeline::candidates(&g, &cfg.layout);
    let rec = pipeline::recommend_user(&model, &g, user, &metapaths, cfg, &cfg.layout)?;
    let paths: Vec<_> = rec
        .execution
        .paths
        .iter()
        .filter(|lp| lp.path.last() == item)
        .collect();
    if paths.is_empty() {
        say!(
            "no path from `{}` to `{}` in the executed layout",
            g.entity_name(user.global_id),
            g.entity_name(item.global_id)
        );
    }
    for lp in paths {
        say!("{}", explain(&lp.path, &g)?);
    }
    Ok(())
}

fn metric_files(
    out: &Path,
    rows: &[(String, nser_core::eval::MetricReport)],
    stem: &str,
) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    write_file(&out.join(format!("{stem}.csv")), buf)?;
    say_raw!("{}", format_table(rows));
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    require_model(cfg)?;
    let g = load_graph(cfg)?;
    let model = load_model(cfg, &g)?;
    let prepared: Prepared = pipeline::prepare(&g, cfg)?;
    let (report, _) = pipeline::evaluate(&model, &prepared, cfg, &cfg.layout)?;
    let mut rows = vec![
        (format!("nser-{}", cfg.layout.strategy), report.clone()),
        (
            "random".to_string(),
            random_baseline(&prepared.split, g.items().len(), cfg.topn),
        ),
    ];
    if cfg.teacher_path.is_some() {
        let teacher = load_teacher(cfg, &g)?;
        rows.push((
            "teacher".to_string(),
            pipeline::teacher_only(&teacher, &prepared, cfg.topn)?,
        ));
    }
    let out = out_dir(cfg)?;
    metric_files(out, &rows, "metrics")?;
    let mut buf = Vec::new();
    write_user_csv(&mut buf, &report)?;
    write_file(&out.join("metrics_per_user.csv"), buf)?;
    Ok(())
}

fn cmd_experiment(cfg: &RunConfig) -> Result<()> {
    let g = match cfg.graph {
        Some(_) => load_graph(cfg)?,
        None => gen_synth(&cfg.synth, cfg.seed)?.0,
    };
    let rows: Vec<_> = run_experiment(&g, cfg)?
        .into_iter()
        .map(|r| (r.label(), r.report))
        .collect();
    metric_files(out_dir(cfg)?, &rows, "experiment")
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.opts)?;
    match cli.cmd {
        Cmd::Ingest => cmd_ingest(&cfg),
        Cmd::GenSynth => cmd_gen_synth(&cfg),
        Cmd::TrainTeacher => cmd_train_teacher(&cfg),
        Cmd::Train => cmd_train(&cfg),
        Cmd::Layout => cmd_layout(&cfg, &cli.opts),
        Cmd::Recommend => cmd_recommend(&cfg, &cli.opts),
        Cmd::Explain => cmd_explain(&cfg, &cli.opts),
        Cmd::Evaluate => cmd_evaluate(&cfg),
        Cmd::Experiment => cmd_experiment(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NSER_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            let msg = msg.replace('\n', " ");
            let _ = writeln!(std::io::stderr(), "error: {msg}");
            ExitCode::FAILURE
        }
    }
}
