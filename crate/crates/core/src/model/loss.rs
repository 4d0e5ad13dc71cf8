//! Path likelihood and teacher-guided ranking losses.
//!
//! For a user `u` and a metapath `r_1..r_n`, step `j` scores every entity of
//! the target type against `ê_j = φ_{r_j}(u, ê_{j−1})` and takes a softmax
//! over the whole type partition. The path loss is the mean negative
//! log-likelihood of the sampled paths; the ranking loss compares the final
//! module output against the path's end item and teacher-chosen negatives.

use super::{Model, PredecessorMode};
use crate::error::{Error, Result};
use crate::graph::{EntityRef, Graph, PathInstance};
use crate::numeric::{ops, Tape, Var};

/// `log P(target | u, prev, r)` under a softmax over the target's type.
pub fn step_logprob(
    m: &Model,
    g: &Graph,
    u: EntityRef,
    prev: &[f32],
    relation: usize,
    target: EntityRef,
) -> Result<f32> {
    let rel = g
        .relation(relation)
        .ok_or_else(|| Error::UnknownRelation(relation.to_string()))?;
    if rel.tail_type != target.type_id {
        return Err(Error::TypeMismatch(format!(
            "`{}` produces `{}`, target is `{}`",
            rel.name,
            g.type_name(rel.tail_type),
            g.type_name(target.type_id)
        )));
    }
    let out = m.relation_forward(relation, m.embedding(u.global_id), prev)?;
    let scores = ops::row_scores(m.embeddings(), g.members(rel.tail_type), &out);
    Ok(ops::log_softmax_slice(&scores)[target.local_id])
}

/// `σ(⟨ê, i⁻⟩ − ⟨ê, i⟩)` averaged over negatives; zero without negatives.
pub fn ranking_loss(m: &Model, leaf: &[f32], item: EntityRef, negatives: &[EntityRef]) -> f32 {
    if negatives.is_empty() {
        return 0.0;
    }
    let pos = ops::dot(leaf, m.embedding(item.global_id));
    let sum: f32 = negatives
        .iter()
        .map(|n| ops::sigmoid_scalar(ops::dot(leaf, m.embedding(n.global_id)) - pos))
        .sum();
    sum / negatives.len() as f32
}

/// `ℓ_path + λ·ℓ_rk`.
pub fn total_loss(path: f32, rank: f32, lambda: f32) -> f32 {
    path + lambda * rank
}

/// Scalar nodes of one `(user, metapath)` training unit.
#[derive(Clone, Copy, Debug)]
pub struct UnitLoss {
    pub path: Var,
    pub rank: Var,
    pub total: Var,
}

fn check_paths(u: EntityRef, paths: &[PathInstance]) -> Result<Vec<usize>> {
    let first = paths.first().ok_or(Error::EmptyPaths)?;
    let rels = first.relations();
    if rels.is_empty() {
        return Err(Error::InvalidPath("zero-length path".into()));
    }
    for p in paths {
        if p.user != u {
            return Err(Error::InvalidPath("path starts at a different user".into()));
        }
        if p.relations() != rels {
            return Err(Error::InvalidPath(
                "paths follow different metapaths".into(),
            ));
        }
    }
    Ok(rels)
}

/// Module outputs `ê_1..ê_n` along `path`.
fn chain(
    tape: &mut Tape,
    m: &Model,
    u_var: Var,
    path: &PathInstance,
    mode: PredecessorMode,
) -> Result<Vec<Var>> {
    let mut outs = Vec::with_capacity(path.len());
    let mut prev = u_var;
    for (j, &(r, _)) in path.steps.iter().enumerate() {
        let input = match mode {
            PredecessorMode::Chained => prev,
            PredecessorMode::TeacherForced if j == 0 => u_var,
            PredecessorMode::TeacherForced => {
                tape.row(m.params(), m.embedding_id(), path.entity_at(j).global_id)
            }
        };
        prev = m.relation_on_tape(tape, r, u_var, input)?;
        outs.push(prev);
    }
    Ok(outs)
}

/// Records path, ranking and total loss for one user and a set of paths that
/// share a metapath. `negatives[k]` are the ranking negatives of `paths[k]`.
#[allow(clippy::too_many_arguments)]
pub fn record_unit(
    tape: &mut Tape,
    m: &Model,
    g: &Graph,
    u: EntityRef,
    paths: &[PathInstance],
    negatives: &[Vec<EntityRef>],
    lambda: f32,
    mode: PredecessorMode,
) -> Result<UnitLoss> {
    let rels = check_paths(u, paths)?;
    if negatives.len() != paths.len() {
        return Err(Error::Shape(format!(
            "{} negative sets for {} paths",
            negatives.len(),
            paths.len()
        )));
    }
    let emb = m.embedding_id();
    let u_var = tape.row(m.params(), emb, u.global_id);

    // With chaining the module outputs depend only on (u, metapath), so the
    // per-step log-softmax is shared by every path.
    let shared = match mode {
        PredecessorMode::Chained => {
            let outs = chain(tape, m, u_var, &paths[0], mode)?;
            let mut lps = Vec::with_capacity(outs.len());
            for (&r, &out) in rels.iter().zip(&outs) {
                let tail = g.relation(r).expect("checked by chain").tail_type;
                let s = tape.row_scores(m.params(), emb, g.members(tail), out)?;
                lps.push(tape.log_softmax(s)?);
            }
            Some((outs, lps))
        }
        PredecessorMode::TeacherForced => None,
    };

    let mut nlls = Vec::with_capacity(paths.len());
    let mut ranks = Vec::with_capacity(paths.len());
    for (path, negs) in paths.iter().zip(negatives) {
        let (outs, lps) = match &shared {
            Some((o, l)) => (o.clone(), l.clone()),
            None => {
                let outs = chain(tape, m, u_var, path, mode)?;
                let mut lps = Vec::with_capacity(outs.len());
                for (&r, &out) in rels.iter().zip(&outs) {
                    let tail = g.relation(r).expect("checked by chain").tail_type;
                    let s = tape.row_scores(m.params(), emb, g.members(tail), out)?;
                    lps.push(tape.log_softmax(s)?);
                }
                (outs, lps)
            }
        };
        let mut picks = Vec::with_capacity(lps.len());
        for (&lp, &(r, e)) in lps.iter().zip(&path.steps) {
            let tail = g.relation(r).expect("checked by chain").tail_type;
            if e.type_id != tail {
                return Err(Error::TypeMismatch(format!(
                    "step entity {} is not of type `{}`",
                    g.entity_name(e.global_id),
                    g.type_name(tail)
                )));
            }
            picks.push(tape.pick(lp, e.local_id)?);
        }
        let ll = tape.sum(&picks)?;
        nlls.push(tape.scale(ll, -1.0));

        let leaf = *outs.last().expect("non-empty path");
        if negs.is_empty() {
            ranks.push(tape.sum(&[])?);
            continue;
        }
        let item = tape.row(m.params(), emb, path.last().global_id);
        let pos = tape.dot(leaf, item)?;
        let mut terms = Vec::with_capacity(negs.len());
        for n in negs {
            let nv = tape.row(m.params(), emb, n.global_id);
            let ns = tape.dot(leaf, nv)?;
            let diff = tape.sub(ns, pos)?;
            terms.push(tape.sigmoid(diff));
        }
        ranks.push(tape.mean(&terms)?);
    }
    let path = tape.mean(&nlls)?;
    let rank = tape.mean(&ranks)?;
    let weighted = tape.scale(rank, lambda);
    let total = tape.add(path, weighted)?;
    Ok(UnitLoss { path, rank, total })
}

/// Mean negative log-likelihood of `paths` for user `u`.
pub fn path_loss(
    m: &Model,
    g: &Graph,
    u: EntityRef,
    paths: &[PathInstance],
    mode: PredecessorMode,
) -> Result<f32> {
    let mut tape = Tape::new();
    let negatives = vec![Vec::new(); paths.len()];
    let unit = record_unit(&mut tape, m, g, u, paths, &negatives, 0.0, mode)?;
    Ok(tape.scalar(unit.path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::rng;

    /// One user, ten items, one feature type; purchase, described_by,
    /// describes.
    fn star() -> Graph {
        let mut b = GraphBuilder::new();
        let (u, i, f) = (
            b.add_type("user"),
            b.add_type("item"),
            b.add_type("feature"),
        );
        let a = b.add_entity(u, "a").unwrap().global_id;
        let items: Vec<_> = (0..10)
            .map(|k| b.add_entity(i, &format!("i{k}")).unwrap().global_id)
            .collect();
        let feats: Vec<_> = (0..4)
            .map(|k| b.add_entity(f, &format!("f{k}")).unwrap().global_id)
            .collect();
        let p = b.add_relation("purchase", u, i).unwrap();
        let db = b.add_relation("described_by", i, f).unwrap();
        let ds = b.add_relation("describes", f, i).unwrap();
        for &it in &items[..3] {
            b.add_triple(a, p, it).unwrap();
        }
        for (k, &it) in items.iter().enumerate() {
            b.add_triple(it, db, feats[k % 4]).unwrap();
            b.add_triple(feats[k % 4], ds, it).unwrap();
        }
        b.build("purchase").unwrap()
    }

    fn path(g: &Graph, hops: &[(&str, &str)]) -> PathInstance {
        let mut p = PathInstance::new(g.resolve("user:a").unwrap());
        for (r, e) in hops {
            p.steps
                .push((g.relation_id(r).unwrap(), g.resolve(e).unwrap()));
        }
        p
    }

    #[test]
    fn uniform_logits_give_log_partition_size() {
        let g = star();
        let m = Model::zeros(&g, 4).unwrap();
        let u = g.resolve("user:a").unwrap();
        let p = g.relation_id("purchase").unwrap();
        let lp = step_logprob(&m, &g, u, &[0.0; 4], p, g.resolve("item:i2").unwrap()).unwrap();
        assert!((lp - (0.1f32).ln()).abs() < 1e-6);
        let lp = step_logprob(
            &m,
            &g,
            u,
            &[0.0; 4],
            g.relation_id("described_by").unwrap(),
            g.resolve("f1").unwrap(),
        )
        .unwrap();
        assert!((lp - (-1.386_294)).abs() < 1e-6);
        let loss = path_loss(
            &m,
            &g,
            u,
            &[path(&g, &[("purchase", "i0")])],
            PredecessorMode::Chained,
        )
        .unwrap();
        assert!((loss - std::f32::consts::LN_10).abs() < 1e-6);
    }

    #[test]
    fn step_logprob_rejects_wrong_target_type() {
        let g = star();
        let m = Model::zeros(&g, 4).unwrap();
        let u = g.resolve("user:a").unwrap();
        let p = g.relation_id("purchase").unwrap();
        assert!(matches!(
            step_logprob(&m, &g, u, &[0.0; 4], p, g.resolve("f1").unwrap()),
            Err(Error::TypeMismatch(_))
        ));
    }

    #[test]
    fn step_probabilities_normalize() {
        let g = star();
        let m = Model::new(&g, 8, &mut rng::from_seed(4)).unwrap();
        let u = g.resolve("user:a").unwrap();
        let prev = m.embedding(3).to_vec();
        let ds = g.relation_id("describes").unwrap();
        let total: f64 = g
            .items()
            .iter()
            .map(|&i| step_logprob(&m, &g, u, &prev, ds, g.entity(i)).unwrap() as f64)
            .map(f64::exp)
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn path_loss_is_mean_of_per_step_nll_and_order_free() {
        let g = star();
        let m = Model::new(&g, 8, &mut rng::from_seed(12)).unwrap();
        let u = g.resolve("user:a").unwrap();
        let p1 = path(
            &g,
            &[
                ("purchase", "i0"),
                ("described_by", "f0"),
                ("describes", "i4"),
            ],
        );
        let p2 = path(
            &g,
            &[
                ("purchase", "i1"),
                ("described_by", "f1"),
                ("describes", "i5"),
            ],
        );
        let loss = path_loss(
            &m,
            &g,
            u,
            &[p1.clone(), p2.clone()],
            PredecessorMode::Chained,
        )
        .unwrap();
        let swapped = path_loss(
            &m,
            &g,
            u,
            &[p2.clone(), p1.clone()],
            PredecessorMode::Chained,
        )
        .unwrap();
        assert_eq!(loss, swapped);

        // Oracle: chain the module outputs by hand and sum step log-probs.
        let nll = |p: &PathInstance| -> f64 {
            let mut prev = m.embedding(u.global_id).to_vec();
            let mut total = 0.0;
            for &(r, e) in &p.steps {
                total -= step_logprob(&m, &g, u, &prev, r, e).unwrap() as f64;
                prev = m
                    .relation_forward(r, m.embedding(u.global_id), &prev)
                    .unwrap();
            }
            total
        };
        let expect = (nll(&p1) + nll(&p2)) / 2.0;
        assert!((loss as f64 - expect).abs() < 1e-5, "{loss} vs {expect}");
        assert!(path_loss(&m, &g, u, &[], PredecessorMode::Chained).is_err());
    }

    #[test]
    fn ranking_loss_values() {
        let g = star();
        let mut m = Model::zeros(&g, 2).unwrap();
        let i0 = g.resolve("i0").unwrap();
        let i1 = g.resolve("i1").unwrap();
        let leaf = [1.0f32, 0.0];
        assert_eq!(ranking_loss(&m, &leaf, i0, &[i1]), 0.5);
        assert_eq!(ranking_loss(&m, &leaf, i0, &[]), 0.0);
        let emb = m.embedding_id();
        m.params_mut()
            .value_mut(emb)
            .row_mut(i0.global_id)
            .copy_from_slice(&[2.0, 0.0]);
        assert!((ranking_loss(&m, &leaf, i0, &[i1]) - 0.119_203).abs() < 1e-6);
    }

    #[test]
    fn total_loss_arithmetic() {
        assert_eq!(total_loss(2.0, 0.3, 10.0), 5.0);
        let p = 1.234_567f32;
        assert_eq!(total_loss(p, 0.77, 0.0).to_bits(), p.to_bits());
    }
}
