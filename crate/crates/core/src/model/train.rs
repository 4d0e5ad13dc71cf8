//! Mini-batch training of embeddings and relation modules.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::{record_unit, Model, PredecessorMode};
use crate::error::{Error, Result};
use crate::graph::{enumerate_metapaths, sample_positive_paths, EntityRef, Graph, Metapath};
use crate::numeric::Tape;
use crate::rng;
use crate::teacher::{negative_set, NegativePool, Teacher};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub lr: f32,
    pub momentum: f32,
    pub epochs: usize,
    /// `(user, metapath)` units per optimizer step.
    pub batch_size: usize,
    /// Ranking-loss weight λ.
    pub lambda: f32,
    /// Positive paths sampled per `(user, metapath)` unit and epoch.
    pub path_limit: usize,
    /// Ranking negatives per positive path.
    pub negatives: usize,
    pub max_metapath_len: usize,
    pub predecessor: PredecessorMode,
    pub negative_pool: NegativePool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 32,
            lr: 0.01,
            momentum: 0.9,
            epochs: 50,
            batch_size: 16,
            lambda: 10.0,
            path_limit: 8,
            negatives: 4,
            max_metapath_len: 3,
            predecessor: PredecessorMode::Chained,
            negative_pool: NegativePool::Positives,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!("dim must be ≥ 2, got {}", self.dim)));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be ≥ 0, got {}",
                self.lambda
            )));
        }
        if self.batch_size == 0 || self.path_limit == 0 || self.max_metapath_len == 0 {
            return Err(Error::Config(
                "batch_size, path_limit and max_metapath_len must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_path_loss: f64,
    pub mean_rank_loss: f64,
    /// Mean `ℓ_path + λ·ℓ_rk` over units.
    pub mean_total_loss: f64,
    pub wallclock_ms: u128,
}

impl std::fmt::Display for EpochLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}, {:.6}, {:.6}, {}",
            self.epoch, self.mean_path_loss, self.mean_rank_loss, self.wallclock_ms
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Users with interactions but no positive path under any metapath.
    pub degenerate_users: usize,
    pub units: usize,
    pub metapaths: Vec<Metapath>,
}

struct Unit {
    user: EntityRef,
    metapath: usize,
}

/// Trains a fresh model on the interactions present in `g`.
pub fn train(g: &Graph, teacher: &Teacher, cfg: &TrainConfig) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    let mut model = Model::new(g, cfg.dim, &mut rng::stream(cfg.seed, "init"))?;
    let metapaths = enumerate_metapaths(g, cfg.max_metapath_len);
    let mut report = TrainReport {
        metapaths: metapaths.clone(),
        ..Default::default()
    };
    let mut units = Vec::new();
    let mut positives = vec![BTreeSet::new(); g.users().len()];
    for &u in g.users() {
        let user = g.entity(u);
        let pos: BTreeSet<usize> = g.interactions_of(user).iter().copied().collect();
        if pos.is_empty() {
            continue;
        }
        let before = units.len();
        for (k, mp) in metapaths.iter().enumerate() {
            let probe = sample_positive_paths(g, user, mp, &pos, 1, &mut rng::from_seed(0));
            if !probe.is_empty() {
                units.push(Unit { user, metapath: k });
            }
        }
        if units.len() == before {
            report.degenerate_users += 1;
        }
        positives[user.local_id] = pos;
    }
    report.units = units.len();
    if report.degenerate_users > 0 {
        log::warn!(
            "{} users have no positive path and are skipped",
            report.degenerate_users
        );
    }
    if cfg.epochs == 0 || units.is_empty() {
        return Ok((model, report));
    }

    let all_items: Vec<EntityRef> = g.items().iter().map(|&i| g.entity(i)).collect();
    let epoch_seed = rng::sub_seed(cfg.seed, "sampling");
    let mut order: Vec<usize> = (0..units.len()).collect();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut r = rng::from_seed(rng::indexed_seed(epoch_seed, epoch as u64));
        order.shuffle(&mut r);
        let (mut sum_path, mut sum_rank, mut sum_total) = (0.0f64, 0.0f64, 0.0f64);
        for batch in order.chunks(cfg.batch_size) {
            let weight = 1.0 / batch.len() as f32;
            for &k in batch {
                let unit = &units[k];
                let pos = &positives[unit.user.local_id];
                let paths = sample_positive_paths(
                    g,
                    unit.user,
                    &metapaths[unit.metapath],
                    pos,
                    cfg.path_limit,
                    &mut r,
                );
                let pool: Vec<EntityRef> = match cfg.negative_pool {
                    NegativePool::Positives => pos.iter().map(|&i| g.entity(i)).collect(),
                    NegativePool::AllItems => all_items.clone(),
                };
                let negatives: Vec<Vec<EntityRef>> = paths
                    .iter()
                    .map(|p| {
                        negative_set(teacher, unit.user, p.last(), &pool, cfg.negatives, &mut r)
                    })
                    .collect();
                let mut tape = Tape::new();
                let loss = record_unit(
                    &mut tape,
                    &model,
                    g,
                    unit.user,
                    &paths,
                    &negatives,
                    cfg.lambda,
                    cfg.predecessor,
                )?;
                let (lp, lr, lt) = (
                    tape.scalar(loss.path),
                    tape.scalar(loss.rank),
                    tape.scalar(loss.total),
                );
                if !lt.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        what: format!("loss {lt} for user {}", g.entity_name(unit.user.global_id)),
                    });
                }
                sum_path += f64::from(lp);
                sum_rank += f64::from(lr);
                sum_total += f64::from(lt);
                let scaled = tape.scale(loss.total, weight);
                tape.backward(scaled, model.params_mut())?;
            }
            model
                .params_mut()
                .sgd_step(cfg.lr, cfg.momentum)
                .map_err(|e| Error::Diverged {
                    epoch,
                    what: e.to_string(),
                })?;
        }
        let n = units.len() as f64;
        let entry = EpochLog {
            epoch,
            mean_path_loss: sum_path / n,
            mean_rank_loss: sum_rank / n,
            mean_total_loss: sum_total / n,
            wallclock_ms: start.elapsed().as_millis(),
        };
        log::info!("epoch {entry}");
        report.epochs.push(entry);
    }
    if !model.params().all_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs - 1,
            what: "non-finite parameters".into(),
        });
    }
    Ok((model, report))
}
