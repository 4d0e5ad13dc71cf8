//! Typed knowledge-graph storage.
//!
//! Entities are partitioned into types. Every entity has a dense global id
//! (assigned in insertion order) and a dense local id within its type.
//! Triples are stored as per-relation adjacency lists indexed by the local id
//! of the head (forward) and of the tail (reverse); both lists hold sorted
//! global ids. The graph is immutable once built.

mod io;
mod metapath;
pub(crate) mod paths;

pub use io::{emit_entities, emit_triples, ingest_str, ingest_triples, write_graph, GraphStats};
pub use metapath::{enumerate_metapaths, Metapath};
pub use paths::{enumerate_positive_paths, sample_positive_paths, validate_path, PathInstance};

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

/// Relation name used as the user-item interaction when none is declared.
pub const DEFAULT_INTERACTION: &str = "purchase";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityRef {
    pub type_id: usize,
    pub local_id: usize,
    pub global_id: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationDef {
    pub id: usize,
    pub name: String,
    pub head_type: usize,
    pub tail_type: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct EntityType {
    name: String,
    members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Entity {
    type_id: usize,
    local_id: usize,
    name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    types: Vec<EntityType>,
    entities: Vec<Entity>,
    relations: Vec<RelationDef>,
    forward: Vec<Vec<Vec<usize>>>,
    reverse: Vec<Vec<Vec<usize>>>,
    interaction: usize,
    names: HashMap<(usize, String), usize>,
}

impl Graph {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn type_name(&self, type_id: usize) -> &str {
        &self.types[type_id].name
    }

    pub fn type_id(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t.name == name)
    }

    /// Global ids of every entity of `type_id`, indexed by local id.
    pub fn members(&self, type_id: usize) -> &[usize] {
        &self.types[type_id].members
    }

    pub fn entity(&self, global_id: usize) -> EntityRef {
        let e = &self.entities[global_id];
        EntityRef {
            type_id: e.type_id,
            local_id: e.local_id,
            global_id,
        }
    }

    pub fn get_entity(&self, global_id: usize) -> Option<EntityRef> {
        (global_id < self.entities.len()).then(|| self.entity(global_id))
    }

    pub fn entity_by_local(&self, type_id: usize, local_id: usize) -> EntityRef {
        self.entity(self.types[type_id].members[local_id])
    }

    pub fn entity_name(&self, global_id: usize) -> &str {
        &self.entities[global_id].name
    }

    pub fn lookup(&self, type_id: usize, name: &str) -> Option<EntityRef> {
        self.names
            .get(&(type_id, name.to_string()))
            .map(|&g| self.entity(g))
    }

    /// Resolves `type:name` or, failing that, a bare name that is unique
    /// across types.
    pub fn resolve(&self, token: &str) -> Option<EntityRef> {
        if let Some((ty, name)) = token.split_once(':') {
            if let Some(t) = self.type_id(ty) {
                if let Some(e) = self.lookup(t, name) {
                    return Some(e);
                }
            }
        }
        let mut found = (0..self.types.len()).filter_map(|t| self.lookup(t, token));
        let first = found.next()?;
        found.next().is_none().then_some(first)
    }

    pub fn relations(&self) -> &[RelationDef] {
        &self.relations
    }

    pub fn relation(&self, id: usize) -> Option<&RelationDef> {
        self.relations.get(id)
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn relation_name(&self, id: usize) -> &str {
        &self.relations[id].name
    }

    /// The user-item interaction relation.
    pub fn interaction(&self) -> &RelationDef {
        &self.relations[self.interaction]
    }

    pub fn user_type(&self) -> usize {
        self.interaction().head_type
    }

    pub fn item_type(&self) -> usize {
        self.interaction().tail_type
    }

    pub fn users(&self) -> &[usize] {
        self.members(self.user_type())
    }

    pub fn items(&self) -> &[usize] {
        self.members(self.item_type())
    }

    /// Sorted tail global ids of `head` under `relation`. The caller must
    /// ensure `head` has the relation's head type.
    pub fn tails(&self, head: EntityRef, relation: usize) -> &[usize] {
        &self.forward[relation][head.local_id]
    }

    /// Sorted head global ids pointing at `tail` under `relation`.
    pub fn heads(&self, tail: EntityRef, relation: usize) -> &[usize] {
        &self.reverse[relation][tail.local_id]
    }

    /// Type-checked adjacency lookup.
    pub fn neighbors(&self, e: EntityRef, relation: usize) -> Result<Vec<EntityRef>> {
        let rel = self
            .relation(relation)
            .ok_or_else(|| Error::UnknownRelation(relation.to_string()))?;
        if rel.head_type != e.type_id {
            return Err(Error::TypeMismatch(format!(
                "relation `{}` expects head type `{}`, got `{}`",
                rel.name,
                self.type_name(rel.head_type),
                self.type_name(e.type_id)
            )));
        }
        Ok(self
            .tails(e, relation)
            .iter()
            .map(|&g| self.entity(g))
            .collect())
    }

    pub fn has_triple(&self, head: EntityRef, relation: usize, tail: EntityRef) -> bool {
        match self.relation(relation) {
            Some(r) if r.head_type == head.type_id && r.tail_type == tail.type_id => self
                .tails(head, relation)
                .binary_search(&tail.global_id)
                .is_ok(),
            _ => false,
        }
    }

    /// All triples `(head, relation, tail)` as global ids, ordered by
    /// relation, head, tail.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.relations.iter().flat_map(move |r| {
            self.types[r.head_type]
                .members
                .iter()
                .enumerate()
                .flat_map(move |(local, &head)| {
                    self.forward[r.id][local]
                        .iter()
                        .map(move |&tail| (head, r.id, tail))
                })
        })
    }

    pub fn num_triples(&self) -> usize {
        self.forward
            .iter()
            .map(|rows| rows.iter().map(Vec::len).sum::<usize>())
            .sum()
    }

    /// Items the user interacted with, sorted by global id.
    pub fn interactions_of(&self, user: EntityRef) -> &[usize] {
        self.tails(user, self.interaction)
    }

    /// A copy of the graph with the given `(head, tail)` pairs of `relation`
    /// removed. Entity ids are unchanged.
    pub fn without_triples(&self, relation: usize, pairs: &BTreeSet<(usize, usize)>) -> Graph {
        let mut g = self.clone();
        if pairs.is_empty() {
            return g;
        }
        for &(h, t) in pairs {
            let (hl, tl) = (self.entities[h].local_id, self.entities[t].local_id);
            g.forward[relation][hl].retain(|&x| x != t);
            g.reverse[relation][tl].retain(|&x| x != h);
        }
        g
    }

    pub fn metapath_name(&self, metapath: &Metapath) -> String {
        metapath
            .relations()
            .iter()
            .map(|&r| self.relation_name(r))
            .collect::<Vec<_>>()
            .join(">")
    }
}

/// Incremental construction of a [`Graph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    types: Vec<EntityType>,
    entities: Vec<Entity>,
    relations: Vec<RelationDef>,
    names: HashMap<(usize, String), usize>,
    triples: BTreeSet<(usize, usize, usize)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a type, returning its id. Re-declaring is a no-op.
    pub fn add_type(&mut self, name: &str) -> usize {
        if let Some(id) = self.type_id(name) {
            return id;
        }
        self.types.push(EntityType {
            name: name.to_string(),
            members: Vec::new(),
        });
        self.types.len() - 1
    }

    pub fn type_id(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t.name == name)
    }

    pub fn add_entity(&mut self, type_id: usize, name: &str) -> Result<EntityRef> {
        if type_id >= self.types.len() {
            return Err(Error::UnknownType(type_id.to_string()));
        }
        let key = (type_id, name.to_string());
        if self.names.contains_key(&key) {
            return Err(Error::Config(format!(
                "duplicate entity `{}:{name}`",
                self.types[type_id].name
            )));
        }
        let global_id = self.entities.len();
        let local_id = self.types[type_id].members.len();
        self.types[type_id].members.push(global_id);
        self.entities.push(Entity {
            type_id,
            local_id,
            name: name.to_string(),
        });
        self.names.insert(key, global_id);
        Ok(EntityRef {
            type_id,
            local_id,
            global_id,
        })
    }

    pub fn lookup(&self, type_id: usize, name: &str) -> Option<usize> {
        self.names.get(&(type_id, name.to_string())).copied()
    }

    pub fn add_relation(
        &mut self,
        name: &str,
        head_type: usize,
        tail_type: usize,
    ) -> Result<usize> {
        if self.relations.iter().any(|r| r.name == name) {
            return Err(Error::Config(format!("duplicate relation `{name}`")));
        }
        if head_type >= self.types.len() || tail_type >= self.types.len() {
            return Err(Error::UnknownType(format!("{head_type}/{tail_type}")));
        }
        let id = self.relations.len();
        self.relations.push(RelationDef {
            id,
            name: name.to_string(),
            head_type,
            tail_type,
        });
        Ok(id)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDef> {
        self.relations.iter().find(|r| r.name == name)
    }

    /// Adds a triple of global ids. Returns `false` if it was already present.
    pub fn add_triple(&mut self, head: usize, relation: usize, tail: usize) -> Result<bool> {
        let rel = self
            .relations
            .get(relation)
            .ok_or_else(|| Error::UnknownRelation(relation.to_string()))?;
        let (h, t) = match (self.entities.get(head), self.entities.get(tail)) {
            (Some(h), Some(t)) => (h, t),
            _ => return Err(Error::UnknownEntity(format!("{head}/{tail}"))),
        };
        if h.type_id != rel.head_type || t.type_id != rel.tail_type {
            return Err(Error::TypeMismatch(format!(
                "`{}` is {}→{}, got {}→{}",
                rel.name,
                self.types[rel.head_type].name,
                self.types[rel.tail_type].name,
                self.types[h.type_id].name,
                self.types[t.type_id].name
            )));
        }
        Ok(self.triples.insert((relation, head, tail)))
    }

    pub fn build(self, interaction: &str) -> Result<Graph> {
        let interaction = self
            .relations
            .iter()
            .position(|r| r.name == interaction)
            .ok_or_else(|| Error::UnknownRelation(interaction.to_string()))?;
        let mut forward: Vec<Vec<Vec<usize>>> = self
            .relations
            .iter()
            .map(|r| vec![Vec::new(); self.types[r.head_type].members.len()])
            .collect();
        let mut reverse: Vec<Vec<Vec<usize>>> = self
            .relations
            .iter()
            .map(|r| vec![Vec::new(); self.types[r.tail_type].members.len()])
            .collect();
        // BTreeSet order keeps every list sorted by global id.
        for &(r, h, t) in &self.triples {
            forward[r][self.entities[h].local_id].push(t);
        }
        for &(r, h, t) in &self.triples {
            reverse[r][self.entities[t].local_id].push(h);
        }
        for rows in &mut reverse {
            for row in rows {
                row.sort_unstable();
            }
        }
        Ok(Graph {
            types: self.types,
            entities: self.entities,
            relations: self.relations,
            forward,
            reverse,
            interaction,
            names: self.names,
        })
    }
}
