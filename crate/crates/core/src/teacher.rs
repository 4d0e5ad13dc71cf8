//! Logistic matrix factorization teacher `h(u, i) = σ(p_u · q_i)`.
//!
//! The teacher only consumes the interaction relation. Its job is to rank
//! candidate items so the ranking loss can draw negatives that the teacher
//! considers worse than the observed item.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::paths::subsample;
use crate::graph::{EntityRef, Graph};
use crate::numeric::checkpoint::{self, CheckpointKind};
use crate::numeric::{ops, Tensor};
use crate::rng::{self, Rng};

const USERS: &str = "teacher.user_factors";
const ITEMS: &str = "teacher.item_factors";

/// Which items may serve as ranking negatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NegativePool {
    /// The user's own training positives.
    #[default]
    Positives,
    /// Every item.
    AllItems,
}

impl std::str::FromStr for NegativePool {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positives" => Ok(Self::Positives),
            "all_items" | "all-items" => Ok(Self::AllItems),
            _ => Err(Error::Config(format!("unknown negative pool `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f32,
    /// Sampled non-interactions per observed pair.
    pub negatives: usize,
    /// Half-width of the uniform factor initialization.
    pub init_scale: f32,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            dim: 16,
            epochs: 20,
            lr: 0.05,
            negatives: 1,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Teacher {
    users: Tensor,
    items: Tensor,
}

impl Teacher {
    /// Builds a teacher from factor matrices indexed by local id.
    pub fn from_factors(users: Tensor, items: Tensor) -> Result<Self> {
        if users.rank() != 2 || items.rank() != 2 || users.cols() != items.cols() {
            return Err(Error::Shape(format!(
                "teacher factors {:?} and {:?}",
                users.shape(),
                items.shape()
            )));
        }
        Ok(Teacher { users, items })
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn user_factors(&self) -> &Tensor {
        &self.users
    }

    pub fn item_factors(&self) -> &Tensor {
        &self.items
    }

    /// `h` by local ids; panics when out of range.
    pub fn score_local(&self, user: usize, item: usize) -> f32 {
        ops::sigmoid_scalar(ops::dot(self.users.row(user), self.items.row(item)))
    }

    /// `h(u, i)`, checking that `u` is a known user and `i` a known item of `g`.
    pub fn score(&self, g: &Graph, u: EntityRef, i: EntityRef) -> Result<f32> {
        if u.type_id != g.user_type() || u.local_id >= self.users.rows() {
            return Err(Error::UnknownEntity(format!("user #{}", u.global_id)));
        }
        if i.type_id != g.item_type() || i.local_id >= self.items.rows() {
            return Err(Error::UnknownEntity(format!("item #{}", i.global_id)));
        }
        Ok(self.score_local(u.local_id, i.local_id))
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        checkpoint::encode(
            CheckpointKind::TEACHER,
            [(USERS, &self.users), (ITEMS, &self.items)],
        )
    }

    /// Restores a teacher whose factor tables match `g`'s user and item counts.
    pub fn from_checkpoint(g: &Graph, bytes: &[u8]) -> Result<Self> {
        let (kind, records) = checkpoint::decode(bytes)?;
        if kind != CheckpointKind::TEACHER {
            return Err(Error::Checkpoint("not a teacher checkpoint".into()));
        }
        let find = |name: &str| {
            records
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Checkpoint(format!("missing `{name}`")))
        };
        let t = Teacher::from_factors(find(USERS)?, find(ITEMS)?)?;
        if t.users.rows() != g.users().len() || t.items.rows() != g.items().len() {
            return Err(Error::Checkpoint(format!(
                "teacher covers {} users / {} items, graph has {} / {}",
                t.users.rows(),
                t.items.rows(),
                g.users().len(),
                g.items().len()
            )));
        }
        Ok(t)
    }
}

/// Per-epoch mean logistic loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TeacherReport {
    pub epoch_losses: Vec<f64>,
}

fn random_factors(rows: usize, dim: usize, scale: f32, rng: &mut Rng) -> Tensor {
    let data = (0..rows * dim)
        .map(|_| {
            if scale > 0.0 {
                rng.gen_range(-scale..scale)
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(vec![rows, dim], data).expect("shape matches data")
}

/// SGD on `−log σ(p·q_i)` for observed pairs and `−log(1 − σ(p·q_j))` for
/// sampled non-interactions `j`.
pub fn train_teacher(g: &Graph, cfg: &TeacherConfig) -> Result<(Teacher, TeacherReport)> {
    if cfg.dim == 0 {
        return Err(Error::Config("teacher dimension must be positive".into()));
    }
    let (n_users, n_items) = (g.users().len(), g.items().len());
    let mut init = rng::stream(cfg.seed, "teacher.init");
    let mut t = Teacher {
        users: random_factors(n_users, cfg.dim, cfg.init_scale, &mut init),
        items: random_factors(n_items, cfg.dim, cfg.init_scale, &mut init),
    };
    let mut pairs = Vec::new();
    let mut owned: Vec<BTreeSet<usize>> = Vec::with_capacity(n_users);
    for &u in g.users() {
        let user = g.entity(u);
        let items: BTreeSet<usize> = g
            .interactions_of(user)
            .iter()
            .map(|&i| g.entity(i).local_id)
            .collect();
        pairs.extend(items.iter().map(|&i| (user.local_id, i)));
        owned.push(items);
    }
    let mut report = TeacherReport::default();
    if pairs.is_empty() {
        return Err(Error::Config(
            "teacher needs at least one interaction".into(),
        ));
    }
    let seed = rng::sub_seed(cfg.seed, "teacher.epoch");
    let d = cfg.dim;
    for epoch in 0..cfg.epochs {
        let mut r = rng::from_seed(rng::indexed_seed(seed, epoch as u64));
        pairs.shuffle(&mut r);
        let mut total = 0.0f64;
        let mut count = 0usize;
        for &(u, i) in &pairs {
            let mut targets = vec![(i, 1.0f32)];
            if owned[u].len() < n_items {
                for _ in 0..cfg.negatives {
                    let j = loop {
                        let j = r.gen_range(0..n_items);
                        if !owned[u].contains(&j) {
                            break j;
                        }
                    };
                    targets.push((j, 0.0));
                }
            }
            for (item, label) in targets {
                let p = t.users.row(u).to_vec();
                let q = t.items.row(item).to_vec();
                let s = ops::dot(&p, &q);
                let prob = ops::sigmoid_scalar(s);
                let loss = if label > 0.5 {
                    -f64::from(prob).max(1e-12).ln()
                } else {
                    -f64::from(1.0 - prob).max(1e-12).ln()
                };
                let gs = prob - label;
                let pu = t.users.row_mut(u);
                for k in 0..d {
                    pu[k] -= cfg.lr * gs * q[k];
                }
                let qi = t.items.row_mut(item);
                for k in 0..d {
                    qi[k] -= cfg.lr * gs * p[k];
                }
                total += loss;
                count += 1;
            }
        }
        let mean = total / count as f64;
        if !mean.is_finite() || !t.users.is_finite() || !t.items.is_finite() {
            return Err(Error::Diverged {
                epoch,
                what: "teacher logistic loss is not finite".into(),
            });
        }
        log::debug!("teacher epoch {epoch}: loss {mean:.5}");
        report.epoch_losses.push(mean);
    }
    Ok((t, report))
}

/// Items of `candidates` that the teacher scores strictly below `i` for `u`,
/// deduplicated, without `i`, and subsampled uniformly to at most `cap`.
pub fn negative_set(
    t: &Teacher,
    u: EntityRef,
    i: EntityRef,
    candidates: &[EntityRef],
    cap: usize,
    rng: &mut Rng,
) -> Vec<EntityRef> {
    if cap == 0 {
        return Vec::new();
    }
    let pos = t.score_local(u.local_id, i.local_id);
    let mut seen = BTreeSet::new();
    let qualifiers: Vec<EntityRef> = candidates
        .iter()
        .filter(|c| c.global_id != i.global_id && seen.insert(c.global_id))
        .filter(|c| t.score_local(u.local_id, c.local_id) < pos)
        .copied()
        .collect();
    subsample(qualifiers, cap, rng)
}
