use std::collections::BTreeSet;

use super::Graph;

/// A chainable relation sequence from the user type to the item type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Metapath(Vec<usize>);

impl Metapath {
    pub fn new(relations: Vec<usize>) -> Self {
        Metapath(relations)
    }

    pub fn relations(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True if `self` is a strict prefix of `other`.
    pub fn is_strict_prefix_of(&self, other: &Metapath) -> bool {
        self.len() < other.len() && other.0.starts_with(&self.0)
    }

    /// Checks chainability and the user/item endpoints against `g`'s schema.
    pub fn is_well_typed(&self, g: &Graph) -> bool {
        if self.0.is_empty() {
            return false;
        }
        let mut ty = g.user_type();
        for &r in &self.0 {
            match g.relation(r) {
                Some(def) if def.head_type == ty => ty = def.tail_type,
                _ => return false,
            }
        }
        ty == g.item_type()
    }
}

/// Advances a set of entities by one relation.
fn step_frontier(g: &Graph, frontier: &BTreeSet<usize>, relation: usize) -> BTreeSet<usize> {
    frontier
        .iter()
        .flat_map(|&e| g.tails(g.entity(e), relation).iter().copied())
        .collect()
}

/// All metapaths of length `1..=max_len` that have at least one concrete
/// instance in `g`, ordered by length and then by relation ids.
///
/// The search walks the type-level schema depth first while carrying the set
/// of entities reachable from any user; a prefix whose set is empty is
/// pruned, since no extension of it can be realized.
pub fn enumerate_metapaths(g: &Graph, max_len: usize) -> Vec<Metapath> {
    fn dfs(
        g: &Graph,
        max_len: usize,
        prefix: &mut Vec<usize>,
        ty: usize,
        frontier: &BTreeSet<usize>,
        out: &mut Vec<Metapath>,
    ) {
        if !prefix.is_empty() && ty == g.item_type() {
            out.push(Metapath(prefix.clone()));
        }
        if prefix.len() == max_len {
            return;
        }
        for rel in g.relations().iter().filter(|r| r.head_type == ty) {
            let next = step_frontier(g, frontier, rel.id);
            if next.is_empty() {
                continue;
            }
            prefix.push(rel.id);
            dfs(g, max_len, prefix, rel.tail_type, &next, out);
            prefix.pop();
        }
    }

    let mut out = Vec::new();
    if max_len == 0 {
        return out;
    }
    let users: BTreeSet<usize> = g.users().iter().copied().collect();
    dfs(g, max_len, &mut Vec::new(), g.user_type(), &users, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.0.cmp(&b.0)));
    out.dedup();
    out
}
