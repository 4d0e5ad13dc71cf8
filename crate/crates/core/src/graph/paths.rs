use std::collections::BTreeSet;

use rand::seq::index;

use super::{EntityRef, Graph, Metapath};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// A concrete walk `user -r1-> e1 -r2-> ... -rn-> en`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathInstance {
    pub user: EntityRef,
    pub steps: Vec<(usize, EntityRef)>,
}

impl PathInstance {
    pub fn new(user: EntityRef) -> Self {
        PathInstance {
            user,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> EntityRef {
        self.steps.last().map_or(self.user, |&(_, e)| e)
    }

    pub fn relations(&self) -> Vec<usize> {
        self.steps.iter().map(|&(r, _)| r).collect()
    }

    /// Entity reached after `step` hops; `0` is the user.
    pub fn entity_at(&self, step: usize) -> EntityRef {
        if step == 0 {
            self.user
        } else {
            self.steps[step - 1].1
        }
    }

    /// True if the hop `(from, relation, to)` already occurs in the path.
    pub fn contains_hop(&self, from: EntityRef, relation: usize, to: EntityRef) -> bool {
        let mut prev = self.user;
        for &(r, e) in &self.steps {
            if prev == from && r == relation && e == to {
                return true;
            }
            prev = e;
        }
        false
    }

    pub fn extended(&self, relation: usize, e: EntityRef) -> PathInstance {
        let mut p = self.clone();
        p.steps.push((relation, e));
        p
    }
}

/// Checks every hop against the graph and the relation sequence against
/// `metapath`.
pub fn validate_path(g: &Graph, path: &PathInstance, metapath: &Metapath) -> Result<()> {
    if path.user.type_id != g.user_type() {
        return Err(Error::InvalidPath("path does not start at a user".into()));
    }
    if path.relations() != metapath.relations() {
        return Err(Error::InvalidPath(format!(
            "relations {:?} do not follow metapath {}",
            path.relations(),
            g.metapath_name(metapath)
        )));
    }
    let mut prev = path.user;
    for (j, &(r, e)) in path.steps.iter().enumerate() {
        if g.get_entity(e.global_id) != Some(e) {
            return Err(Error::InvalidPath(format!(
                "hop {j}: dangling entity {e:?}"
            )));
        }
        if !g.has_triple(prev, r, e) {
            return Err(Error::InvalidPath(format!(
                "hop {j}: ({}, {}, {}) is not in the graph",
                g.entity_name(prev.global_id),
                g.relation_name(r),
                g.entity_name(e.global_id)
            )));
        }
        prev = e;
    }
    Ok(())
}

/// Every walk from `user` along `metapath` that ends in `positives`, in
/// depth-first order. Walks never repeat an identical hop.
pub fn enumerate_positive_paths(
    g: &Graph,
    user: EntityRef,
    metapath: &Metapath,
    positives: &BTreeSet<usize>,
) -> Vec<PathInstance> {
    fn go(
        g: &Graph,
        rels: &[usize],
        positives: &BTreeSet<usize>,
        path: &mut PathInstance,
        out: &mut Vec<PathInstance>,
    ) {
        let depth = path.len();
        if depth == rels.len() {
            if positives.contains(&path.last().global_id) {
                out.push(path.clone());
            }
            return;
        }
        let r = rels[depth];
        let from = path.last();
        for &t in g.tails(from, r) {
            let e = g.entity(t);
            if depth + 1 == rels.len() && !positives.contains(&t) {
                continue;
            }
            if path.contains_hop(from, r, e) {
                continue;
            }
            path.steps.push((r, e));
            go(g, rels, positives, path, out);
            path.steps.pop();
        }
    }

    let mut out = Vec::new();
    if user.type_id != g.user_type() || !metapath.is_well_typed(g) {
        return out;
    }
    go(
        g,
        metapath.relations(),
        positives,
        &mut PathInstance::new(user),
        &mut out,
    );
    out
}

/// Up to `limit` positive paths drawn uniformly without replacement from the
/// full enumeration, returned in enumeration order.
pub fn sample_positive_paths(
    g: &Graph,
    user: EntityRef,
    metapath: &Metapath,
    positives: &BTreeSet<usize>,
    limit: usize,
    rng: &mut Rng,
) -> Vec<PathInstance> {
    let all = enumerate_positive_paths(g, user, metapath, positives);
    subsample(all, limit, rng)
}

pub(crate) fn subsample<T: Clone>(all: Vec<T>, limit: usize, rng: &mut Rng) -> Vec<T> {
    if all.len() <= limit {
        return all;
    }
    let mut picks = index::sample(rng, all.len(), limit).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|i| all[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::rng;

    /// u -> i1 <- u2 -> i2, with purchase_by mirrors.
    fn chain() -> (Graph, Metapath) {
        let mut b = GraphBuilder::new();
        let (u, i) = (b.add_type("user"), b.add_type("item"));
        let u1 = b.add_entity(u, "u").unwrap().global_id;
        let u2 = b.add_entity(u, "u2").unwrap().global_id;
        let i1 = b.add_entity(i, "i1").unwrap().global_id;
        let i2 = b.add_entity(i, "i2").unwrap().global_id;
        let p = b.add_relation("purchase", u, i).unwrap();
        let pb = b.add_relation("purchase_by", i, u).unwrap();
        for (a, c) in [(u1, i1), (u2, i1), (u2, i2)] {
            b.add_triple(a, p, c).unwrap();
            b.add_triple(c, pb, a).unwrap();
        }
        (b.build("purchase").unwrap(), Metapath::new(vec![p, pb, p]))
    }

    #[test]
    fn chain_has_exactly_one_positive_path() {
        let (g, mp) = chain();
        let u = g.lookup(0, "u").unwrap();
        let i2 = g.lookup(1, "i2").unwrap();
        let pos = BTreeSet::from([i2.global_id]);
        let paths = enumerate_positive_paths(&g, u, &mp, &pos);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].last(), i2);
        validate_path(&g, &paths[0], &mp).unwrap();
    }

    #[test]
    fn user_without_purchases_has_no_paths() {
        let (g, mp) = chain();
        let u2 = g.lookup(0, "u2").unwrap();
        let pos = BTreeSet::new();
        assert!(enumerate_positive_paths(&g, u2, &mp, &pos).is_empty());
    }

    #[test]
    fn repeated_hops_are_not_walked() {
        let (g, mp) = chain();
        let u = g.lookup(0, "u").unwrap();
        let i1 = g.lookup(1, "i1").unwrap();
        // u -> i1 -> u -> i1 would repeat the first hop; only the walk
        // through u2 survives.
        let pos = BTreeSet::from([i1.global_id]);
        let paths = enumerate_positive_paths(&g, u, &mp, &pos);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].entity_at(2), g.lookup(0, "u2").unwrap());
    }

    #[test]
    fn validator_rejects_bad_hops() {
        let (g, mp) = chain();
        let u = g.lookup(0, "u").unwrap();
        let i2 = g.lookup(1, "i2").unwrap();
        let bad = PathInstance::new(u).extended(mp.relations()[0], i2);
        assert!(validate_path(&g, &bad, &Metapath::new(vec![mp.relations()[0]])).is_err());
        assert!(validate_path(&g, &bad, &mp).is_err());
    }

    #[test]
    fn sampling_respects_limit_and_seed() {
        let mut b = GraphBuilder::new();
        let (u, i) = (b.add_type("user"), b.add_type("item"));
        let a = b.add_entity(u, "a").unwrap();
        let p = b.add_relation("purchase", u, i).unwrap();
        let mut pos = BTreeSet::new();
        for k in 0..20 {
            let it = b.add_entity(i, &format!("i{k}")).unwrap().global_id;
            b.add_triple(a.global_id, p, it).unwrap();
            pos.insert(it);
        }
        let g = b.build("purchase").unwrap();
        let mp = Metapath::new(vec![p]);
        let s1 = sample_positive_paths(&g, a, &mp, &pos, 5, &mut rng::from_seed(3));
        let s2 = sample_positive_paths(&g, a, &mp, &pos, 5, &mut rng::from_seed(3));
        assert_eq!(s1.len(), 5);
        assert_eq!(s1, s2);
        let distinct: BTreeSet<_> = s1.iter().collect();
        assert_eq!(distinct.len(), 5);
        for path in &s1 {
            validate_path(&g, path, &mp).unwrap();
        }
    }
}
