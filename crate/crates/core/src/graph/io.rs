//! Text formats for entities and triples.
//!
//! Entity file, one entity per line:
//!
//! ```text
//! # comment
//! @type user            (optional explicit declaration)
//! user<TAB>alice
//! ```
//!
//! Triple file, relation schema first:
//!
//! ```text
//! @interaction purchase (optional, defaults to `purchase`)
//! @relation purchase user item
//! user:alice<TAB>purchase<TAB>item:phone
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Graph, GraphBuilder, DEFAULT_INTERACTION};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphStats {
    /// `(type name, entity count)` in type id order.
    pub entities_per_type: Vec<(String, usize)>,
    /// `(relation name, triple count)` in relation id order.
    pub triples_per_relation: Vec<(String, usize)>,
    /// Repeated triples dropped during ingest.
    pub duplicates: usize,
}

impl GraphStats {
    pub fn of(g: &Graph) -> Self {
        let mut per_rel = vec![0usize; g.relations().len()];
        for (_, r, _) in g.triples() {
            per_rel[r] += 1;
        }
        GraphStats {
            entities_per_type: (0..g.num_types())
                .map(|t| (g.type_name(t).to_string(), g.members(t).len()))
                .collect(),
            triples_per_relation: g
                .relations()
                .iter()
                .map(|r| (r.name.clone(), per_rel[r.id]))
                .collect(),
            duplicates: 0,
        }
    }
}

impl std::fmt::Display for GraphStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, n) in &self.entities_per_type {
            writeln!(f, "entities\t{name}\t{n}")?;
        }
        for (name, n) in &self.triples_per_relation {
            writeln!(f, "triples\t{name}\t{n}")?;
        }
        write!(f, "duplicates\t{}", self.duplicates)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

fn parse_entities(b: &mut GraphBuilder, text: &str) -> Result<()> {
    for (line, raw) in content_lines(text) {
        if let Some(rest) = raw.strip_prefix("@type") {
            let name = rest.trim();
            if name.is_empty() || name.contains(char::is_whitespace) || name.contains(':') {
                return Err(Error::Parse {
                    line,
                    msg: format!("bad type declaration `{raw}`"),
                });
            }
            b.add_type(name);
            continue;
        }
        let (ty, name) = raw.split_once('\t').ok_or_else(|| Error::Parse {
            line,
            msg: "expected `<type>\\t<name>`".into(),
        })?;
        if ty.is_empty() || name.is_empty() || name.contains('\t') || ty.contains(':') {
            return Err(Error::Parse {
                line,
                msg: format!("malformed entity line `{raw}`"),
            });
        }
        let t = b.add_type(ty);
        b.add_entity(t, name).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
    }
    Ok(())
}

fn parse_endpoint(b: &GraphBuilder, token: &str, line: usize) -> Result<(usize, usize)> {
    let (ty, name) = token.split_once(':').ok_or_else(|| Error::Parse {
        line,
        msg: format!("expected `<type>:<name>`, got `{token}`"),
    })?;
    let t = b.type_id(ty).ok_or_else(|| Error::Undeclared {
        line,
        what: format!("entity type `{ty}`"),
    })?;
    let g = b.lookup(t, name).ok_or_else(|| Error::Undeclared {
        line,
        what: format!("entity `{token}`"),
    })?;
    Ok((t, g))
}

fn parse_triples(b: &mut GraphBuilder, text: &str) -> Result<(String, usize)> {
    let mut interaction = DEFAULT_INTERACTION.to_string();
    let mut duplicates = 0;
    for (line, raw) in content_lines(text) {
        if let Some(rest) = raw.strip_prefix("@relation") {
            let parts: Vec<_> = rest.split_whitespace().collect();
            let [name, head, tail] = parts[..] else {
                return Err(Error::Parse {
                    line,
                    msg: "expected `@relation <name> <head_type> <tail_type>`".into(),
                });
            };
            let lookup = |ty: &str| {
                b.type_id(ty).ok_or_else(|| Error::Undeclared {
                    line,
                    what: format!("entity type `{ty}`"),
                })
            };
            let (h, t) = (lookup(head)?, lookup(tail)?);
            b.add_relation(name, h, t).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
            continue;
        }
        if let Some(rest) = raw.strip_prefix("@interaction") {
            interaction = rest.trim().to_string();
            continue;
        }
        let fields: Vec<_> = raw.split('\t').collect();
        let [head, rel, tail] = fields[..] else {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        };
        let rel_def = b.relation(rel).cloned().ok_or_else(|| Error::Undeclared {
            line,
            what: format!("relation `{rel}`"),
        })?;
        let (ht, h) = parse_endpoint(b, head, line)?;
        let (tt, t) = parse_endpoint(b, tail, line)?;
        if ht != rel_def.head_type || tt != rel_def.tail_type {
            return Err(Error::TypeViolation {
                line,
                msg: format!("`{raw}` does not match the signature of `{rel}`"),
            });
        }
        if !b.add_triple(h, rel_def.id, t)? {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("dropped {duplicates} duplicate triples");
    }
    Ok((interaction, duplicates))
}

/// Parses entity and triple text into a validated graph.
pub fn ingest_str(entities: &str, triples: &str) -> Result<(Graph, GraphStats)> {
    let mut b = GraphBuilder::new();
    parse_entities(&mut b, entities)?;
    let (interaction, duplicates) = parse_triples(&mut b, triples)?;
    let g = b.build(&interaction)?;
    let mut stats = GraphStats::of(&g);
    stats.duplicates = duplicates;
    Ok((g, stats))
}

pub fn ingest_triples(entity_file: &Path, triple_file: &Path) -> Result<(Graph, GraphStats)> {
    let ents = std::fs::read_to_string(entity_file).map_err(|e| Error::io(entity_file, e))?;
    let trips = std::fs::read_to_string(triple_file).map_err(|e| Error::io(triple_file, e))?;
    ingest_str(&ents, &trips)
}

pub fn emit_entities(g: &Graph) -> String {
    let mut out = String::new();
    for t in 0..g.num_types() {
        let _ = writeln!(out, "@type {}", g.type_name(t));
    }
    for id in 0..g.num_entities() {
        let e = g.entity(id);
        let _ = writeln!(out, "{}\t{}", g.type_name(e.type_id), g.entity_name(id));
    }
    out
}

pub fn emit_triples(g: &Graph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@interaction {}", g.interaction().name);
    for r in g.relations() {
        let _ = writeln!(
            out,
            "@relation {} {} {}",
            r.name,
            g.type_name(r.head_type),
            g.type_name(r.tail_type)
        );
    }
    for (h, r, t) in g.triples() {
        let _ = writeln!(
            out,
            "{}:{}\t{}\t{}:{}",
            g.type_name(g.entity(h).type_id),
            g.entity_name(h),
            g.relation_name(r),
            g.type_name(g.entity(t).type_id),
            g.entity_name(t)
        );
    }
    out
}

pub fn write_graph(g: &Graph, entity_file: &Path, triple_file: &Path) -> Result<()> {
    std::fs::write(entity_file, emit_entities(g)).map_err(|e| Error::io(entity_file, e))?;
    std::fs::write(triple_file, emit_triples(g)).map_err(|e| Error::io(triple_file, e))
}
