use std::collections::BTreeSet;

use proptest::prelude::*;

use nser_core::eval::{gen_synth, SynthSpec};
use nser_core::graph::{
    emit_entities, emit_triples, enumerate_metapaths, ingest_str, Graph, GraphBuilder,
};

/// Builds a graph over users, items and tags from raw edge lists, keeping the
/// triples for linear-scan lookups.
fn build(n: usize, edges: &[(usize, usize, usize)]) -> (Graph, Vec<(usize, usize, usize)>) {
    let mut b = GraphBuilder::new();
    let types = [b.add_type("user"), b.add_type("item"), b.add_type("tag")];
    let ids: Vec<Vec<usize>> = types
        .iter()
        .enumerate()
        .map(|(t, &ty)| {
            (0..n)
                .map(|k| b.add_entity(ty, &format!("e{t}_{k}")).unwrap().global_id)
                .collect()
        })
        .collect();
    // (name, head type, tail type)
    let schema = [
        ("buy", 0, 1),
        ("bought_by", 1, 0),
        ("tagged", 1, 2),
        ("tags", 2, 1),
        ("follows", 0, 2),
    ];
    for (name, h, t) in schema {
        b.add_relation(name, types[h], types[t]).unwrap();
    }
    let mut triples = Vec::new();
    for &(r, a, c) in edges {
        let (_, h, t) = schema[r];
        let (head, tail) = (ids[h][a % n], ids[t][c % n]);
        b.add_triple(head, r, tail).unwrap();
        triples.push((head, r, tail));
    }
    (b.build("buy").unwrap(), triples)
}

fn edges() -> impl Strategy<Value = Vec<(usize, usize, usize)>> {
    prop::collection::vec((0..5usize, 0..6usize, 0..6usize), 1..60)
}

/// Every well-typed relation sequence of length `1..=max_len` from the user
/// type to the item type that some walk realizes.
fn brute_metapaths(
    g: &Graph,
    triples: &[(usize, usize, usize)],
    max_len: usize,
) -> BTreeSet<Vec<usize>> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<(Vec<usize>, usize)> = g.users().iter().map(|&u| (Vec::new(), u)).collect();
    while let Some((seq, e)) = stack.pop() {
        if !seq.is_empty() && g.entity(e).type_id == g.item_type() {
            out.insert(seq.clone());
        }
        if seq.len() == max_len {
            continue;
        }
        for &(h, r, t) in triples {
            if h == e {
                let mut next = seq.clone();
                next.push(r);
                stack.push((next, t));
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn tails_match_linear_scan(es in edges()) {
        let (g, triples) = build(6, &es);
        for e in 0..g.num_entities() {
            let ent = g.entity(e);
            for rel in g.relations() {
                let r = rel.id;
                if rel.head_type == ent.type_id {
                    let expect: BTreeSet<usize> =
                        triples.iter().filter(|&&(h, rr, _)| h == e && rr == r).map(|t| t.2).collect();
                    let got = g.tails(ent, r);
                    prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
                    prop_assert_eq!(got.iter().copied().collect::<BTreeSet<_>>(), expect);
                }
                if rel.tail_type == ent.type_id {
                    let expect: BTreeSet<usize> =
                        triples.iter().filter(|&&(_, rr, t)| t == e && rr == r).map(|t| t.0).collect();
                    prop_assert_eq!(g.heads(ent, r).iter().copied().collect::<BTreeSet<_>>(), expect);
                }
            }
        }
    }

    #[test]
    fn metapaths_match_brute_force(es in edges(), max_len in 1..4usize) {
        let (g, triples) = build(6, &es);
        let got: BTreeSet<Vec<usize>> =
            enumerate_metapaths(&g, max_len).iter().map(|m| m.relations().to_vec()).collect();
        prop_assert_eq!(got, brute_metapaths(&g, &triples, max_len));
    }
}

#[test]
fn neighbors_reject_wrong_head_type() {
    let (g, _) = build(2, &[(0, 0, 0)]);
    let item = g.entity(g.items()[0]);
    assert!(g.neighbors(item, 0).is_err());
    assert_eq!(g.neighbors(g.entity(g.users()[0]), 0).unwrap(), vec![item]);
}

#[test]
fn emitted_synthetic_graph_reingests_identically() {
    let spec = SynthSpec {
        users: 20,
        items: 40,
        ..SynthSpec::default()
    };
    let (g, _) = gen_synth(&spec, 7).unwrap();
    let (ents, trips) = (emit_entities(&g), emit_triples(&g));
    let (h, stats) = ingest_str(&ents, &trips).unwrap();
    assert_eq!(stats.duplicates, 0);
    assert_eq!(h.num_entities(), g.num_entities());
    assert_eq!(h.num_triples(), g.num_triples());
    assert_eq!(
        h.triples().collect::<Vec<_>>(),
        g.triples().collect::<Vec<_>>()
    );
    assert_eq!((emit_entities(&h), emit_triples(&h)), (ents, trips));
}
