//! End-to-end wiring: split, teacher, model, layouts, recommendations and
//! evaluation.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{make_split, metrics, random_baseline, MetricReport, Split};
use crate::executor::{
    execute_layout_with, rank_items, recommend, ExecOptions, Execution, RecResult, ScoredPath,
};
use crate::graph::{enumerate_metapaths, EntityRef, Graph, Metapath, PathInstance};
use crate::layout::{layout_candidates, plan_layout, LayoutConfig, LayoutPlan};
use crate::model::{train, Model, TrainConfig, TrainReport};
use crate::rng;
use crate::teacher::{train_teacher, Teacher, TeacherReport};

/// The split and the graph with test interactions removed.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub split: Split,
    pub train_graph: Graph,
}

pub fn prepare(g: &Graph, cfg: &RunConfig) -> Result<Prepared> {
    let split = make_split(g, cfg.split_ratio, cfg.seed)?;
    let train_graph = split.train_graph(g);
    Ok(Prepared { split, train_graph })
}

pub fn fit_teacher(train_graph: &Graph, cfg: &RunConfig) -> Result<(Teacher, TeacherReport)> {
    train_teacher(train_graph, &cfg.teacher_config())
}

pub fn fit_model(
    train_graph: &Graph,
    teacher: &Teacher,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    train(train_graph, teacher, cfg)
}

/// Layout, execution and ranking for one user.
#[derive(Clone, Debug)]
pub struct UserRecommendation {
    pub user: EntityRef,
    pub plan: LayoutPlan,
    pub execution: Execution,
    pub result: RecResult,
}

/// Layout-candidate metapaths of `g`.
pub fn candidates(g: &Graph, layout: &LayoutConfig) -> Vec<Metapath> {
    layout_candidates(&enumerate_metapaths(g, layout.max_len), layout)
}

/// Runs the two-stage recommender for `user` on the training graph.
pub fn recommend_user(
    m: &Model,
    g: &Graph,
    user: EntityRef,
    metapaths: &[Metapath],
    cfg: &RunConfig,
    layout: &LayoutConfig,
) -> Result<UserRecommendation> {
    if user.type_id != g.user_type() {
        return Err(Error::TypeMismatch(format!(
            "{} is not a user",
            g.entity_name(user.global_id)
        )));
    }
    let positives: BTreeSet<usize> = g.interactions_of(user).iter().copied().collect();
    let mut r = rng::from_seed(rng::indexed_seed(
        rng::sub_seed(cfg.seed, "layout"),
        user.global_id as u64,
    ));
    let plan = plan_layout(m, g, user, &positives, metapaths, layout, &mut r)?;
    let opts = ExecOptions {
        exclude_at_leaf: cfg.exclude_train_at_leaf.then_some(&positives),
        prune_dead_ends: cfg.prune_dead_ends,
    };
    let execution = execute_layout_with(m, g, user, &plan.layout, opts)?;
    let result = recommend(&execution, m, cfg.topn, &positives, cfg.aggregation);
    Ok(UserRecommendation {
        user,
        plan,
        execution,
        result,
    })
}

/// Ranked item lists for every split user, keyed by user global id.
pub fn recommend_all(
    m: &Model,
    prepared: &Prepared,
    cfg: &RunConfig,
    layout: &LayoutConfig,
) -> Result<BTreeMap<usize, RecResult>> {
    let g = &prepared.train_graph;
    let metapaths = candidates(g, layout);
    prepared
        .split
        .users()
        .map(|u| {
            Ok((
                u,
                recommend_user(m, g, g.entity(u), &metapaths, cfg, layout)?.result,
            ))
        })
        .collect()
}

pub fn evaluate(
    m: &Model,
    prepared: &Prepared,
    cfg: &RunConfig,
    layout: &LayoutConfig,
) -> Result<(MetricReport, BTreeMap<usize, RecResult>)> {
    let recs = recommend_all(m, prepared, cfg, layout)?;
    let lists = recs.iter().map(|(&u, r)| (u, r.item_ids())).collect();
    Ok((metrics(&lists, &prepared.split, cfg.topn)?, recs))
}

/// Ranks every non-training item by teacher score.
pub fn teacher_only(t: &Teacher, prepared: &Prepared, n: usize) -> Result<MetricReport> {
    let g = &prepared.train_graph;
    let mut lists = BTreeMap::new();
    for u in prepared.split.users() {
        let user = g.entity(u);
        let scored = g
            .items()
            .iter()
            .map(|&i| {
                let item = g.entity(i);
                ScoredPath {
                    leaf: 0,
                    score: t.score_local(user.local_id, item.local_id),
                    path: PathInstance::new(user).extended(g.interaction().id, item),
                }
            })
            .collect();
        let r = rank_items(scored, n, &prepared.split.train[&u], Default::default());
        lists.insert(u, r.item_ids());
    }
    metrics(&lists, &prepared.split, n)
}

/// Everything produced by one full run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub prepared: Prepared,
    pub teacher: Teacher,
    pub teacher_report: TeacherReport,
    pub model: Model,
    pub train_report: TrainReport,
    pub report: MetricReport,
    pub random: MetricReport,
    pub teacher_only: MetricReport,
}

/// Split, teacher, model and evaluation with the configured strategy.
pub fn run(g: &Graph, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let prepared = prepare(g, cfg)?;
    let (teacher, teacher_report) = fit_teacher(&prepared.train_graph, cfg)?;
    let (model, train_report) = fit_model(&prepared.train_graph, &teacher, &cfg.train_config())?;
    let (report, _) = evaluate(&model, &prepared, cfg, &cfg.layout)?;
    let random = random_baseline(&prepared.split, g.items().len(), cfg.topn);
    let teacher_only = teacher_only(&teacher, &prepared, cfg.topn)?;
    Ok(RunOutput {
        prepared,
        teacher,
        teacher_report,
        model,
        train_report,
        report,
        random,
        teacher_only,
    })
}
