use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{Graph, Metapath};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutNode {
    /// `None` only at the root.
    pub relation: Option<usize>,
    pub k: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutLeaf {
    pub node: usize,
    pub metapath: Metapath,
    /// Budget the leaf was seeded with.
    pub y: usize,
}

/// Prefix-merged tree of `(relation, k)` nodes; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaLayout {
    nodes: Vec<LayoutNode>,
    leaves: Vec<LayoutLeaf>,
}

impl Default for MetaLayout {
    fn default() -> Self {
        MetaLayout {
            nodes: vec![LayoutNode {
                relation: None,
                k: 1,
                parent: None,
                children: Vec::new(),
                depth: 0,
            }],
            leaves: Vec::new(),
        }
    }
}

impl MetaLayout {
    pub const ROOT: usize = 0;

    pub fn nodes(&self) -> &[LayoutNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &LayoutNode {
        &self.nodes[id]
    }

    pub fn leaves(&self) -> &[LayoutLeaf] {
        &self.leaves
    }

    /// True when the layout has no leaves.
    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Leaf index of `node`, if it is a leaf.
    pub fn leaf_of(&self, node: usize) -> Option<usize> {
        self.leaves.iter().position(|l| l.node == node)
    }

    /// Nodes from the root's first child down to `node`.
    pub fn chain(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            out.push(cur);
            cur = p;
        }
        out.reverse();
        out
    }

    /// `Π k_x` from the root to the given leaf.
    pub fn leaf_product(&self, leaf: usize) -> usize {
        self.chain(self.leaves[leaf].node)
            .iter()
            .map(|&x| self.nodes[x].k)
            .product()
    }

    /// Relation sequence from the root to `node`.
    pub fn relations_to(&self, node: usize) -> Vec<usize> {
        self.chain(node)
            .iter()
            .map(|&x| self.nodes[x].relation.expect("non-root"))
            .collect()
    }

    /// Node ids in breadth-first order, children in insertion order.
    pub fn bfs(&self) -> Vec<usize> {
        let mut order = vec![Self::ROOT];
        let mut i = 0;
        while i < order.len() {
            order.extend_from_slice(&self.nodes[order[i]].children);
            i += 1;
        }
        order
    }

    /// Pre-order text form, one `depth,relation,k` line per node, indented two
    /// spaces per level. The root is written with relation `root`.
    pub fn serialize(&self, g: &Graph) -> String {
        let mut out = String::new();
        let mut stack = vec![Self::ROOT];
        while let Some(x) = stack.pop() {
            let n = &self.nodes[x];
            let name = n.relation.map_or("root", |r| g.relation_name(r));
            let _ = writeln!(out, "{}{},{},{}", "  ".repeat(n.depth), n.depth, name, n.k);
            stack.extend(n.children.iter().rev());
        }
        out
    }

    /// Parses the output of [`MetaLayout::serialize`]. Leaves are the nodes
    /// without children; their `y` is the product of counts along the chain.
    pub fn parse(g: &Graph, text: &str) -> Result<Self> {
        let mut layout = MetaLayout::default();
        let mut stack: Vec<usize> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let fields: Vec<&str> = line.trim().split(',').collect();
            let [depth, rel, k] = fields[..] else {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "expected `depth,relation,k`".into(),
                });
            };
            let bad = |msg: &str| Error::Parse {
                line: line_no,
                msg: msg.into(),
            };
            let depth: usize = depth.trim().parse().map_err(|_| bad("bad depth"))?;
            let k: usize = k.trim().parse().map_err(|_| bad("bad count"))?;
            if depth == 0 {
                if line_no != 1 || rel.trim() != "root" {
                    return Err(bad("root must be the first line"));
                }
                stack.push(Self::ROOT);
                continue;
            }
            if depth > stack.len() {
                return Err(bad("depth skips a level"));
            }
            stack.truncate(depth);
            let parent = *stack.last().ok_or_else(|| bad("missing root"))?;
            let relation = g
                .relation_id(rel.trim())
                .ok_or_else(|| Error::UnknownRelation(rel.trim().to_string()))?;
            let id = layout.push(parent, relation);
            layout.nodes[id].k = k;
            stack.push(id);
        }
        for id in 1..layout.nodes.len() {
            if layout.nodes[id].children.is_empty() {
                let metapath = Metapath::new(layout.relations_to(id));
                let chain = layout.chain(id);
                let y = chain.iter().map(|&x| layout.nodes[x].k).product();
                layout.leaves.push(LayoutLeaf {
                    node: id,
                    metapath,
                    y,
                });
            }
        }
        Ok(layout)
    }

    fn push(&mut self, parent: usize, relation: usize) -> usize {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(LayoutNode {
            relation: Some(relation),
            k: 0,
            parent: Some(parent),
            children: Vec::new(),
            depth,
        });
        self.nodes[parent].children.push(id);
        id
    }

    fn child_with(&self, parent: usize, relation: usize) -> Option<usize> {
        self.nodes[parent]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].relation == Some(relation))
    }

    /// Post-order count propagation: leaves keep their seed, internal nodes
    /// take the smallest positive child count and divide their children by
    /// it, the root stays at 1.
    fn recursive_update(&mut self, x: usize) {
        let children = self.nodes[x].children.clone();
        for &c in &children {
            self.recursive_update(c);
        }
        if x == Self::ROOT {
            self.nodes[x].k = 1;
            return;
        }
        if children.is_empty() {
            return;
        }
        let min = children
            .iter()
            .map(|&c| self.nodes[c].k)
            .filter(|&k| k > 0)
            .min();
        match min {
            None => self.nodes[x].k = 0,
            Some(m) => {
                self.nodes[x].k = m;
                for &c in &children {
                    self.nodes[c].k /= m;
                }
            }
        }
    }
}

/// Merges metapaths with budgets `y ≥ 1` into a layout tree.
///
/// Shared relation prefixes share nodes. When one metapath is a strict
/// prefix of another, the shorter one is dropped with a warning. Duplicate
/// metapaths are an error.
pub fn build_layout(input: &[(Metapath, usize)]) -> Result<MetaLayout> {
    for (j, (mp, y)) in input.iter().enumerate() {
        if mp.is_empty() {
            return Err(Error::Layout("empty metapath".into()));
        }
        if *y == 0 {
            return Err(Error::Layout(format!(
                "metapath {:?} has zero budget",
                mp.relations()
            )));
        }
        if input[..j].iter().any(|(other, _)| other == mp) {
            return Err(Error::Layout(format!(
                "duplicate metapath {:?}",
                mp.relations()
            )));
        }
    }
    let kept: Vec<&(Metapath, usize)> = input
        .iter()
        .filter(|(mp, _)| {
            let nested = input.iter().any(|(other, _)| mp.is_strict_prefix_of(other));
            if nested {
                log::warn!(
                    "dropping metapath {:?}: prefix of another metapath",
                    mp.relations()
                );
            }
            !nested
        })
        .collect();

    let mut layout = MetaLayout::default();
    for (mp, y) in kept {
        let mut cur = MetaLayout::ROOT;
        for &r in mp.relations() {
            cur = match layout.child_with(cur, r) {
                Some(c) => c,
                None => layout.push(cur, r),
            };
        }
        layout.nodes[cur].k = *y;
        layout.leaves.push(LayoutLeaf {
            node: cur,
            metapath: mp.clone(),
            y: *y,
        });
    }
    layout.recursive_update(MetaLayout::ROOT);
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mp(r: &[usize]) -> Metapath {
        Metapath::new(r.to_vec())
    }

    #[test]
    fn single_chain() {
        let l = build_layout(&[(mp(&[1, 2, 3]), 5)]).unwrap();
        let ks: Vec<usize> = l
            .chain(l.leaves()[0].node)
            .iter()
            .map(|&x| l.node(x).k)
            .collect();
        assert_eq!(ks, vec![5, 1, 1]);
        assert_eq!(l.leaf_product(0), 5);
        assert_eq!(l.node(0).k, 1);
    }

    #[test]
    fn empty_input_is_root_only() {
        let l = build_layout(&[]).unwrap();
        assert!(l.is_empty());
        assert_eq!(l.nodes().len(), 1);
    }

    #[test]
    fn duplicates_and_zero_budgets_rejected() {
        assert!(build_layout(&[(mp(&[1, 2]), 1), (mp(&[1, 2]), 3)]).is_err());
        assert!(build_layout(&[(mp(&[1, 2]), 0)]).is_err());
    }

    #[test]
    fn nested_prefix_drops_the_shorter() {
        let l = build_layout(&[(mp(&[1]), 4), (mp(&[1, 2, 3]), 2)]).unwrap();
        assert_eq!(l.leaves().len(), 1);
        assert_eq!(l.leaves()[0].metapath, mp(&[1, 2, 3]));
    }

    #[test]
    fn zero_children_prune_internal_node() {
        let mut l = build_layout(&[(mp(&[1, 2]), 3)]).unwrap();
        let leaf = l.leaves()[0].node;
        l.nodes[leaf].k = 0;
        l.nodes[1].k = 7;
        l.recursive_update(0);
        assert_eq!(l.node(1).k, 0);
    }

    fn arb_metapaths() -> impl Strategy<Value = Vec<(Metapath, usize)>> {
        proptest::collection::btree_set(proptest::collection::vec(0usize..3, 1..4), 1..8)
            .prop_flat_map(|set| {
                let paths: Vec<Vec<usize>> = set.into_iter().collect();
                let n = paths.len();
                (Just(paths), proptest::collection::vec(1usize..13, n))
            })
            .prop_map(|(paths, ys)| paths.into_iter().map(Metapath::new).zip(ys).collect())
    }

    proptest! {
        #[test]
        fn leaf_products_never_exceed_budget(input in arb_metapaths()) {
            let l = build_layout(&input).unwrap();
            for (j, leaf) in l.leaves().iter().enumerate() {
                prop_assert!(l.leaf_product(j) <= leaf.y);
                prop_assert_eq!(l.relations_to(leaf.node), leaf.metapath.relations().to_vec());
            }
            // Every metapath not nested in another is a leaf.
            let expect: Vec<&Metapath> = input.iter().map(|(m, _)| m)
                .filter(|m| !input.iter().any(|(o, _)| m.is_strict_prefix_of(o)))
                .collect();
            let got: Vec<&Metapath> = l.leaves().iter().map(|x| &x.metapath).collect();
            prop_assert_eq!(got, expect);
        }
    }
}
