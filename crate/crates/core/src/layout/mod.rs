//! Coarse-grained explanations: which metapaths to follow for a user, and
//! how many paths each one gets.
//!
//! Each candidate metapath gets a value (the mean chained log-likelihood of
//! the user's positive paths under it), a path budget is allocated over the
//! values, and the budgeted metapaths are merged into a [`MetaLayout`] tree.

mod tree;

pub use tree::{build_layout, LayoutLeaf, LayoutNode, MetaLayout};

use std::collections::BTreeSet;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::paths::subsample;
use crate::graph::{enumerate_positive_paths, EntityRef, Graph, Metapath};
use crate::model::Model;
use crate::numeric::ops;
use crate::rng::Rng;

/// How per-metapath path counts are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LayoutStrategy {
    /// `K` draws from a uniform distribution over the metapaths.
    Uniform,
    /// `y_j = ⌈K·k_j / Σk⌉`.
    Prior,
    /// Greedy allocation by heuristic value.
    #[default]
    Heuristic,
}

impl LayoutStrategy {
    pub const ALL: [LayoutStrategy; 3] = [Self::Uniform, Self::Prior, Self::Heuristic];

    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Prior => "prior",
            Self::Heuristic => "heuristic",
        }
    }
}

impl std::fmt::Display for LayoutStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LayoutStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "prior" => Ok(Self::Prior),
            "heuristic" => Ok(Self::Heuristic),
            _ => Err(Error::Config(format!("unknown layout strategy `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayoutConfig {
    /// Total path budget `K`.
    pub budget: usize,
    /// Per-metapath cap `k_j`; `None` means `K`.
    pub cap: Option<usize>,
    /// Positive paths sampled per metapath when estimating values.
    pub sample_limit: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub strategy: LayoutStrategy,
    /// Lower each cap to the user's out-degree under the metapath's first
    /// relation.
    pub degree_caps: bool,
    /// Value estimates ignore positive paths that revisit the user.
    pub skip_user_returns: bool,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            budget: 30,
            cap: None,
            sample_limit: 64,
            min_len: 2,
            max_len: 3,
            strategy: LayoutStrategy::Heuristic,
            degree_caps: true,
            skip_user_returns: true,
        }
    }
}

impl LayoutConfig {
    pub fn cap(&self) -> usize {
        self.cap.unwrap_or(self.budget)
    }
}

/// Mean chained log-likelihood of up to `sample_limit` sampled positive
/// paths of `u` under `metapath`; `−∞` when there are none.
pub fn heuristic_value(
    m: &Model,
    g: &Graph,
    u: EntityRef,
    metapath: &Metapath,
    positives: &BTreeSet<usize>,
    sample_limit: usize,
    rng: &mut Rng,
) -> Result<f64> {
    heuristic_value_with(m, g, u, metapath, positives, sample_limit, false, rng)
}

/// [`heuristic_value`], optionally ignoring positive paths that pass back
/// through `u` before the last hop.
#[allow(clippy::too_many_arguments)]
pub fn heuristic_value_with(
    m: &Model,
    g: &Graph,
    u: EntityRef,
    metapath: &Metapath,
    positives: &BTreeSet<usize>,
    sample_limit: usize,
    skip_returns: bool,
    rng: &mut Rng,
) -> Result<f64> {
    let mut all = enumerate_positive_paths(g, u, metapath, positives);
    if skip_returns {
        all.retain(|p| p.steps.iter().all(|&(_, e)| e != u));
    }
    let paths = subsample(all, sample_limit, rng);
    if paths.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    // Chained outputs depend only on (u, metapath): one softmax per step.
    let uvec = m.embedding(u.global_id);
    let mut prev = uvec.to_vec();
    let mut logprobs = Vec::with_capacity(metapath.len());
    for &r in metapath.relations() {
        let out = m.relation_forward(r, uvec, &prev)?;
        let tail = g
            .relation(r)
            .ok_or_else(|| Error::UnknownRelation(r.to_string()))?
            .tail_type;
        logprobs.push(ops::log_softmax_slice(&ops::row_scores(
            m.embeddings(),
            g.members(tail),
            &out,
        )));
        prev = out;
    }
    let total: f64 = paths
        .iter()
        .map(|p| {
            p.steps
                .iter()
                .zip(&logprobs)
                .map(|(&(_, e), lp)| f64::from(lp[e.local_id]))
                .sum::<f64>()
        })
        .sum();
    Ok(total / paths.len() as f64)
}

/// Greedy fill of `K` in descending value order (ties by index) over the
/// finite-valued metapaths, up to each cap. Spends exactly
/// `min(K, Σ caps of finite-valued metapaths)`.
pub fn allocate_budget(values: &[f64], caps: &[usize], budget: usize) -> Vec<usize> {
    assert_eq!(values.len(), caps.len(), "one cap per value");
    let mut order: Vec<usize> = (0..values.len())
        .filter(|&j| values[j].is_finite())
        .collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut y = vec![0; values.len()];
    let mut left = budget;
    for j in order {
        let take = caps[j].min(left);
        y[j] = take;
        left -= take;
        if left == 0 {
            break;
        }
    }
    y
}

/// `K` independent uniform draws over `m` metapaths.
pub fn uniform_allocation(m: usize, budget: usize, rng: &mut Rng) -> Vec<usize> {
    let mut y = vec![0; m];
    if m == 0 {
        return y;
    }
    for _ in 0..budget {
        y[rng.gen_range(0..m)] += 1;
    }
    y
}

/// `y_j = ⌈K·k_j / Σk⌉`.
pub fn prior_allocation(caps: &[usize], budget: usize) -> Vec<usize> {
    let total: usize = caps.iter().sum();
    if total == 0 {
        return vec![0; caps.len()];
    }
    caps.iter().map(|&k| (budget * k).div_ceil(total)).collect()
}

/// Values, allocation and tree for one user.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutPlan {
    pub metapaths: Vec<Metapath>,
    /// Heuristic values; `NaN` for strategies that do not compute them.
    pub values: Vec<f64>,
    pub allocation: Vec<usize>,
    pub layout: MetaLayout,
}

/// Candidate metapaths for layouts: those of `all` within the length bounds.
pub fn layout_candidates(all: &[Metapath], cfg: &LayoutConfig) -> Vec<Metapath> {
    all.iter()
        .filter(|m| m.len() >= cfg.min_len && m.len() <= cfg.max_len)
        .cloned()
        .collect()
}

/// Allocates the budget over `metapaths` with the configured strategy and
/// builds the layout. `positives` are the user's training interactions.
pub fn plan_layout(
    m: &Model,
    g: &Graph,
    u: EntityRef,
    positives: &BTreeSet<usize>,
    metapaths: &[Metapath],
    cfg: &LayoutConfig,
    rng: &mut Rng,
) -> Result<LayoutPlan> {
    let caps: Vec<usize> = metapaths
        .iter()
        .map(|mp| match (cfg.degree_caps, mp.relations().first()) {
            (true, Some(&r)) => cfg.cap().min(g.tails(u, r).len()),
            _ => cfg.cap(),
        })
        .collect();
    let (values, allocation) = match cfg.strategy {
        LayoutStrategy::Heuristic => {
            let values = metapaths
                .iter()
                .map(|mp| {
                    heuristic_value_with(
                        m,
                        g,
                        u,
                        mp,
                        positives,
                        cfg.sample_limit,
                        cfg.skip_user_returns,
                        rng,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let y = allocate_budget(&values, &caps, cfg.budget);
            (values, y)
        }
        LayoutStrategy::Uniform => (
            vec![f64::NAN; metapaths.len()],
            uniform_allocation(metapaths.len(), cfg.budget, rng),
        ),
        LayoutStrategy::Prior => (
            vec![f64::NAN; metapaths.len()],
            prior_allocation(&caps, cfg.budget),
        ),
    };
    let input: Vec<(Metapath, usize)> = metapaths
        .iter()
        .zip(&allocation)
        .filter(|(_, &y)| y > 0)
        .map(|(mp, &y)| (mp.clone(), y))
        .collect();
    let layout = build_layout(&input)?;
    Ok(LayoutPlan {
        metapaths: metapaths.to_vec(),
        values,
        allocation,
        layout,
    })
}
