use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng;

/// Per-user train/test partition of the interaction relation, keyed by user
/// global id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: BTreeMap<usize, BTreeSet<usize>>,
    pub test: BTreeMap<usize, BTreeSet<usize>>,
    /// Users dropped for having fewer than two interactions.
    pub dropped: usize,
}

impl Split {
    pub fn users(&self) -> impl Iterator<Item = usize> + '_ {
        self.test.keys().copied()
    }

    pub fn num_users(&self) -> usize {
        self.test.len()
    }

    /// `g` without the test interactions. Any relation named
    /// `<interaction>_by` from item to user is treated as the interaction's
    /// mirror and loses the same pairs.
    pub fn train_graph(&self, g: &Graph) -> Graph {
        let inter = g.interaction();
        let pairs: BTreeSet<(usize, usize)> = self
            .test
            .iter()
            .flat_map(|(&u, items)| items.iter().map(move |&i| (u, i)))
            .collect();
        let mut out = g.without_triples(inter.id, &pairs);
        let mirror = format!("{}_by", inter.name);
        if let Some(r) = g.relation_id(&mirror) {
            let def = g.relation(r).expect("known id");
            if def.head_type == inter.tail_type && def.tail_type == inter.head_type {
                let flipped = pairs.iter().map(|&(u, i)| (i, u)).collect();
                out = out.without_triples(r, &flipped);
            }
        }
        out
    }
}

/// Seeded per-user partition with `round(ratio·n)` train items, clamped so
/// both sides are non-empty.
pub fn make_split(g: &Graph, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let mut split = Split::default();
    let root = rng::sub_seed(seed, "split");
    for &u in g.users() {
        let mut items: Vec<usize> = g.interactions_of(g.entity(u)).to_vec();
        let n = items.len();
        if n < 2 {
            split.dropped += 1;
            continue;
        }
        items.shuffle(&mut rng::from_seed(rng::indexed_seed(root, u as u64)));
        let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
        split
            .train
            .insert(u, items[..n_train].iter().copied().collect());
        split
            .test
            .insert(u, items[n_train..].iter().copied().collect());
    }
    if split.dropped > 0 {
        log::info!(
            "split: dropped {} users with fewer than two interactions",
            split.dropped
        );
    }
    Ok(split)
}
