use crate::config::RunConfig;
use crate::error::Result;
use crate::eval::MetricReport;
use crate::graph::Graph;
use crate::layout::{LayoutConfig, LayoutStrategy};
use crate::model::TrainReport;
use crate::pipeline;

/// One `(λ, strategy)` variant averaged over seeds.
#[derive(Clone, Debug)]
pub struct ExperimentRow {
    pub lambda: f32,
    pub strategy: LayoutStrategy,
    pub report: MetricReport,
    pub per_seed: Vec<MetricReport>,
    /// Training logs, one per seed.
    pub training: Vec<TrainReport>,
}

impl ExperimentRow {
    pub fn label(&self) -> String {
        format!("lambda={} {}", self.lambda, self.strategy)
    }
}

/// Runs every `λ × strategy` variant for every seed. A model is trained once
/// per `(seed, λ)` and shared by the strategies.
pub fn run_experiment(g: &Graph, cfg: &RunConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let exp = &cfg.experiment;
    let mut rows: Vec<ExperimentRow> = exp
        .lambdas
        .iter()
        .flat_map(|&lambda| {
            exp.strategies.iter().map(move |&strategy| ExperimentRow {
                lambda,
                strategy,
                report: MetricReport::default(),
                per_seed: Vec::new(),
                training: Vec::new(),
            })
        })
        .collect();
    for &seed in &exp.seeds {
        let run_cfg = RunConfig {
            seed,
            ..cfg.clone()
        };
        let prepared = pipeline::prepare(g, &run_cfg)?;
        let (teacher, _) = pipeline::fit_teacher(&prepared.train_graph, &run_cfg)?;
        for (li, &lambda) in exp.lambdas.iter().enumerate() {
            let mut tc = run_cfg.train_config();
            tc.lambda = lambda;
            log::info!("experiment: seed {seed}, lambda {lambda}");
            let (model, report) = pipeline::fit_model(&prepared.train_graph, &teacher, &tc)?;
            for (si, &strategy) in exp.strategies.iter().enumerate() {
                let layout = LayoutConfig {
                    strategy,
                    ..run_cfg.layout.clone()
                };
                let (metrics, _) = pipeline::evaluate(&model, &prepared, &run_cfg, &layout)?;
                let row = &mut rows[li * exp.strategies.len() + si];
                row.per_seed.push(metrics);
                row.training.push(report.clone());
            }
        }
    }
    for row in &mut rows {
        row.report = MetricReport::average(&row.per_seed);
    }
    Ok(rows)
}
