//! Fine-grained explanations: running a layout over the graph.
//!
//! Layout nodes are visited breadth first. Node `x` computes
//! `ê_x = φ_{r_x}(u, ê_parent)` with `ê_root = u`, then extends every partial
//! path of its parent to the `k_x` adjacent entities with the largest
//! `⟨ê_x, e⟩`. The paths reaching the leaves end in items, which become the
//! recommendations; the paths themselves are the explanations.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::{EntityRef, Graph, PathInstance};
use crate::layout::MetaLayout;
use crate::model::Model;
use crate::numeric::ops;

#[derive(Clone, Copy, Debug, Default)]
pub struct ExecOptions<'a> {
    /// Items never selected at a leaf hop (e.g. the user's training items).
    pub exclude_at_leaf: Option<&'a BTreeSet<usize>>,
    /// Skip neighbors from which no leaf of the subtree below can be reached.
    pub prune_dead_ends: bool,
}

/// A path collected at a layout leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafPath {
    /// Index into [`MetaLayout::leaves`].
    pub leaf: usize,
    pub path: PathInstance,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Execution {
    pub paths: Vec<LeafPath>,
    /// `ê` of each leaf, indexed like [`MetaLayout::leaves`].
    pub leaf_vectors: Vec<Vec<f32>>,
}

/// Checks that every layout node's relation continues the type reached by its
/// parent, starting from the user type, and that leaves reach the item type.
fn check_schema(g: &Graph, layout: &MetaLayout) -> Result<Vec<usize>> {
    let mut ty = vec![usize::MAX; layout.nodes().len()];
    ty[MetaLayout::ROOT] = g.user_type();
    for x in layout.bfs().into_iter().skip(1) {
        let n = layout.node(x);
        let r = n
            .relation
            .ok_or_else(|| Error::Layout(format!("node {x} has no relation")))?;
        let def = g
            .relation(r)
            .ok_or_else(|| Error::Layout(format!("node {x}: relation #{r} not in schema")))?;
        let parent_ty = ty[n.parent.expect("non-root")];
        if def.head_type != parent_ty {
            return Err(Error::Layout(format!(
                "node {x}: `{}` starts at `{}`, parent yields `{}`",
                def.name,
                g.type_name(def.head_type),
                g.type_name(parent_ty)
            )));
        }
        ty[x] = def.tail_type;
    }
    for leaf in layout.leaves() {
        if ty[leaf.node] != g.item_type() {
            return Err(Error::Layout(format!(
                "leaf node {} ends at `{}`, not at items",
                leaf.node,
                g.type_name(ty[leaf.node])
            )));
        }
    }
    Ok(ty)
}

/// Adjacent entities of `path`'s end under `relation`, best `k` by
/// `⟨v, e⟩` with ties broken by ascending global id. A hop already present in
/// the path is never repeated.
pub fn top_k_expansions(
    m: &Model,
    g: &Graph,
    path: &PathInstance,
    relation: usize,
    v: &[f32],
    k: usize,
    exclude: Option<&BTreeSet<usize>>,
) -> Vec<EntityRef> {
    top_k_admitted(m, g, path, relation, v, k, |e| {
        exclude.is_none_or(|x| !x.contains(&e))
    })
}

fn top_k_admitted(
    m: &Model,
    g: &Graph,
    path: &PathInstance,
    relation: usize,
    v: &[f32],
    k: usize,
    admit: impl Fn(usize) -> bool,
) -> Vec<EntityRef> {
    let last = path.last();
    let mut scored: Vec<(f32, usize)> = g
        .tails(last, relation)
        .iter()
        .map(|&e| g.entity(e))
        .filter(|&e| !path.contains_hop(last, relation, e))
        .filter(|e| admit(e.global_id))
        .map(|e| (ops::dot(v, m.embedding(e.global_id)), e.global_id))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    scored.into_iter().map(|(_, e)| g.entity(e)).collect()
}

/// `alive[x][e]`: some leaf below `x` is reachable when `e` sits at `x`.
fn live_entities(
    g: &Graph,
    layout: &MetaLayout,
    exclude: Option<&BTreeSet<usize>>,
) -> Vec<Vec<bool>> {
    let n = g.num_entities();
    let mut alive = vec![Vec::new(); layout.nodes().len()];
    for x in layout.bfs().into_iter().rev() {
        let node = layout.node(x);
        alive[x] = if node.children.is_empty() {
            (0..n)
                .map(|e| exclude.is_none_or(|s| !s.contains(&e)))
                .collect()
        } else {
            (0..n)
                .map(|e| {
                    node.children.iter().any(|&c| {
                        let r = layout.node(c).relation.expect("non-root");
                        let ent = g.entity(e);
                        g.relation(r).is_some_and(|d| d.head_type == ent.type_id)
                            && g.tails(ent, r).iter().any(|&t| alive[c][t])
                    })
                })
                .collect()
        };
    }
    alive
}

pub fn execute_layout(
    m: &Model,
    g: &Graph,
    u: EntityRef,
    layout: &MetaLayout,
) -> Result<Execution> {
    execute_layout_with(m, g, u, layout, ExecOptions::default())
}

pub fn execute_layout_with(
    m: &Model,
    g: &Graph,
    u: EntityRef,
    layout: &MetaLayout,
    opts: ExecOptions<'_>,
) -> Result<Execution> {
    if u.type_id != g.user_type() {
        return Err(Error::TypeMismatch(format!(
            "{} is not a user",
            g.entity_name(u.global_id)
        )));
    }
    check_schema(g, layout)?;
    let n = layout.nodes().len();
    let uvec = m.embedding(u.global_id).to_vec();
    let mut vecs: Vec<Vec<f32>> = vec![Vec::new(); n];
    let mut frontier: Vec<Vec<PathInstance>> = vec![Vec::new(); n];
    let alive = opts
        .prune_dead_ends
        .then(|| live_entities(g, layout, opts.exclude_at_leaf));
    vecs[MetaLayout::ROOT] = uvec.clone();
    frontier[MetaLayout::ROOT] = vec![PathInstance::new(u)];
    for x in layout.bfs().into_iter().skip(1) {
        let node = layout.node(x);
        let parent = node.parent.expect("non-root");
        let r = node.relation.expect("non-root");
        let v = m.relation_forward(r, &uvec, &vecs[parent])?;
        let exclude = if node.children.is_empty() {
            opts.exclude_at_leaf
        } else {
            None
        };
        let mut out = Vec::new();
        for p in &frontier[parent] {
            let admit = |e: usize| match &alive {
                Some(a) => a[x][e],
                None => exclude.is_none_or(|s| !s.contains(&e)),
            };
            for e in top_k_admitted(m, g, p, r, &v, node.k, admit) {
                out.push(p.extended(r, e));
            }
        }
        vecs[x] = v;
        frontier[x] = out;
    }
    let mut exec = Execution::default();
    for (j, leaf) in layout.leaves().iter().enumerate() {
        exec.leaf_vectors.push(vecs[leaf.node].clone());
        exec.paths.extend(
            std::mem::take(&mut frontier[leaf.node])
                .into_iter()
                .map(|path| LeafPath { leaf: j, path }),
        );
    }
    Ok(exec)
}

/// How one item's supporting path scores combine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            _ => Err(Error::Config(format!("unknown aggregation `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPath {
    pub leaf: usize,
    pub score: f32,
    pub path: PathInstance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecItem {
    pub item: EntityRef,
    pub score: f32,
    /// Supporting paths, best first.
    pub paths: Vec<ScoredPath>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecResult {
    pub items: Vec<RecItem>,
}

impl RecResult {
    pub fn item_ids(&self) -> Vec<usize> {
        self.items.iter().map(|r| r.item.global_id).collect()
    }
}

/// Groups scored paths by end item, aggregates, and keeps the best `n` items
/// (ties by ascending id), skipping `exclude`.
pub fn rank_items(
    scored: Vec<ScoredPath>,
    n: usize,
    exclude: &BTreeSet<usize>,
    agg: Aggregation,
) -> RecResult {
    let mut by_item: BTreeMap<usize, Vec<ScoredPath>> = BTreeMap::new();
    for sp in scored {
        let item = sp.path.last().global_id;
        if !exclude.contains(&item) {
            by_item.entry(item).or_default().push(sp);
        }
    }
    let mut items: Vec<RecItem> = by_item
        .into_values()
        .map(|mut paths| {
            paths.sort_by(|a, b| b.score.total_cmp(&a.score));
            let score = match agg {
                Aggregation::Max => paths[0].score,
                Aggregation::Mean => {
                    paths.iter().map(|p| p.score).sum::<f32>() / paths.len() as f32
                }
            };
            RecItem {
                item: paths[0].path.last(),
                score,
                paths,
            }
        })
        .collect();
    items.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.item.global_id.cmp(&b.item.global_id))
    });
    items.truncate(n);
    RecResult { items }
}

/// Top-`n` items reached by the execution, scored by `⟨ê_leaf, item⟩`.
pub fn recommend(
    exec: &Execution,
    m: &Model,
    n: usize,
    exclude: &BTreeSet<usize>,
    agg: Aggregation,
) -> RecResult {
    let scored = exec
        .paths
        .iter()
        .map(|lp| ScoredPath {
            leaf: lp.leaf,
            score: ops::dot(
                &exec.leaf_vectors[lp.leaf],
                m.embedding(lp.path.last().global_id),
            ),
            path: lp.path.clone(),
        })
        .collect();
    rank_items(scored, n, exclude, agg)
}

/// `u --r1--> e1 --r2--> e2 ...` with entity and relation names.
pub fn explain(path: &PathInstance, g: &Graph) -> Result<String> {
    let name = |e: EntityRef| {
        g.get_entity(e.global_id)
            .filter(|x| *x == e)
            .map(|_| g.entity_name(e.global_id))
            .ok_or_else(|| Error::UnknownEntity(format!("dangling entity #{}", e.global_id)))
    };
    let mut out = name(path.user)?.to_string();
    for &(r, e) in &path.steps {
        let rel = g
            .relation(r)
            .ok_or_else(|| Error::UnknownRelation(format!("#{r}")))?;
        out.push_str(&format!(" --{}--> {}", rel.name, name(e)?));
    }
    Ok(out)
}

/// Writes `user,rank,item,score,layout_leaf_id,rendered_path` rows, one per
/// supporting path. Ranks start at 1.
pub fn write_recommendations<W: Write>(
    w: &mut csv::Writer<W>,
    g: &Graph,
    user: EntityRef,
    rec: &RecResult,
) -> Result<()> {
    for (rank, item) in rec.items.iter().enumerate() {
        for sp in &item.paths {
            w.write_record([
                g.entity_name(user.global_id),
                &(rank + 1).to_string(),
                g.entity_name(item.item.global_id),
                &format!("{:.6}", item.score),
                &sp.leaf.to_string(),
                &explain(&sp.path, g)?,
            ])?;
        }
    }
    Ok(())
}

pub const RECOMMENDATION_HEADER: [&str; 6] = [
    "user",
    "rank",
    "item",
    "score",
    "layout_leaf_id",
    "rendered_path",
];
