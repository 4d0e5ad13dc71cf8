//! Neural-symbolic representation: one embedding per entity and one small
//! relation module per relation.
//!
//! A relation module maps `(user vector, predecessor vector)` to a predicted
//! successor vector through a two-layer perceptron
//! `W2ᵀ·relu(W1ᵀ·[u; e] + b1) + b2`. Chaining modules along a metapath turns
//! the metapath into a differentiable program.

mod loss;
mod train;

pub use loss::{path_loss, ranking_loss, record_unit, step_logprob, total_loss, UnitLoss};
pub use train::{train, EpochLog, TrainConfig, TrainReport};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numeric::checkpoint::{self, CheckpointKind};
use crate::numeric::{ops, ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::Rng;

pub const EMBEDDING: &str = "entity_embedding";

/// What feeds the predecessor slot of each relation module during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PredecessorMode {
    /// The previous module's output (`ê_{j−1}`), with `ê_0` the user vector.
    #[default]
    Chained,
    /// The embedding of the observed previous entity.
    TeacherForced,
}

impl std::str::FromStr for PredecessorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chained" => Ok(Self::Chained),
            "teacher_forced" | "teacher-forced" => Ok(Self::TeacherForced),
            _ => Err(Error::Config(format!("unknown predecessor mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RelationModule {
    pub relation_id: usize,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Debug)]
pub struct Model {
    dim: usize,
    params: ParamStore,
    embedding: ParamId,
    modules: Vec<RelationModule>,
}

fn module_names(relation: &str) -> [String; 4] {
    ["w1", "b1", "w2", "b2"].map(|p| format!("relation.{relation}.{p}"))
}

fn uniform(rng: &mut Rng, shape: Vec<usize>, bound: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

impl Model {
    /// Fresh model for `g`: embeddings uniform in `±1/√d`, first-layer
    /// weights uniform in `±1/√(2d)`, second-layer in `±1/√d`, zero biases.
    pub fn new(g: &Graph, dim: usize, rng: &mut Rng) -> Result<Self> {
        Self::build(g, dim, |shape, fan_in| {
            if fan_in == 0 {
                Tensor::zeros(shape)
            } else {
                uniform(rng, shape, 1.0 / (fan_in as f32).sqrt())
            }
        })
    }

    /// Every parameter zero.
    pub fn zeros(g: &Graph, dim: usize) -> Result<Self> {
        Self::build(g, dim, |shape, _| Tensor::zeros(shape))
    }

    fn build(
        g: &Graph,
        dim: usize,
        mut init: impl FnMut(Vec<usize>, usize) -> Tensor,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!(
                "embedding dimension must be ≥ 2, got {dim}"
            )));
        }
        let mut params = ParamStore::new();
        let embedding = params.add(EMBEDDING, init(vec![g.num_entities(), dim], dim))?;
        let mut modules = Vec::with_capacity(g.relations().len());
        for rel in g.relations() {
            let [n1, nb1, n2, nb2] = module_names(&rel.name);
            let w1 = params.add(&n1, init(vec![2 * dim, dim], 2 * dim))?;
            let b1 = params.add(&nb1, init(vec![dim], 0))?;
            let w2 = params.add(&n2, init(vec![dim, dim], dim))?;
            let b2 = params.add(&nb2, init(vec![dim], 0))?;
            modules.push(RelationModule {
                relation_id: rel.id,
                w1,
                b1,
                w2,
                b2,
            });
        }
        Ok(Model {
            dim,
            params,
            embedding,
            modules,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embedding
    }

    pub fn embeddings(&self) -> &Tensor {
        self.params.value(self.embedding)
    }

    pub fn embedding(&self, global_id: usize) -> &[f32] {
        self.embeddings().row(global_id)
    }

    pub fn module(&self, relation: usize) -> Result<&RelationModule> {
        self.modules
            .get(relation)
            .ok_or_else(|| Error::UnknownRelation(relation.to_string()))
    }

    /// `φ_r(u, e)` evaluated without recording.
    pub fn relation_forward(&self, relation: usize, u: &[f32], e: &[f32]) -> Result<Vec<f32>> {
        let m = self.module(relation)?;
        if u.len() != self.dim || e.len() != self.dim {
            return Err(Error::Shape(format!(
                "relation module expects two {}-vectors, got {} and {}",
                self.dim,
                u.len(),
                e.len()
            )));
        }
        let x = Tensor::vector([u, e].concat());
        let p = &self.params;
        let h = ops::relu(&ops::affine_forward(&x, p.value(m.w1), p.value(m.b1))?);
        Ok(ops::affine_forward(&h, p.value(m.w2), p.value(m.b2))?.into_data())
    }

    /// `φ_r(u, e)` recorded on `tape`.
    pub fn relation_on_tape(
        &self,
        tape: &mut Tape,
        relation: usize,
        u: Var,
        e: Var,
    ) -> Result<Var> {
        let m = *self.module(relation)?;
        let p = &self.params;
        let x = tape.concat(u, e)?;
        let (w1, b1) = (tape.param(p, m.w1), tape.param(p, m.b1));
        let h = tape.affine(x, w1, b1)?;
        let h = tape.relu(h);
        let (w2, b2) = (tape.param(p, m.w2), tape.param(p, m.b2));
        tape.affine(h, w2, b2)
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        checkpoint::encode(CheckpointKind::MODEL, self.params.named_values())
    }

    /// Restores a model for `g`; every parameter must be present with the
    /// expected shape.
    pub fn from_checkpoint(g: &Graph, bytes: &[u8]) -> Result<Self> {
        let (kind, records) = checkpoint::decode(bytes)?;
        if kind != CheckpointKind::MODEL {
            return Err(Error::Checkpoint("not a model checkpoint".into()));
        }
        let dim = records
            .iter()
            .find(|(n, _)| n == EMBEDDING)
            .map(|(_, t)| t.cols())
            .ok_or_else(|| Error::Checkpoint(format!("missing `{EMBEDDING}`")))?;
        let mut model = Self::zeros(g, dim)?;
        if records.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} records, found {}",
                model.params.len(),
                records.len()
            )));
        }
        for (name, t) in records {
            let id = model
                .params
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected record `{name}`")))?;
            if model.params.value(id).shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    model.params.value(id).shape()
                )));
            }
            *model.params.value_mut(id) = t;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::toy;
    use crate::rng;

    #[test]
    fn zero_weights_map_to_zero() {
        let g = toy();
        let m = Model::zeros(&g, 4).unwrap();
        let out = m
            .relation_forward(0, &[1.0, 2.0, 3.0, 4.0], &[-1.0, 0.5, 0.0, 2.0])
            .unwrap();
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn hand_set_two_dimensional_module() {
        // x = [1, 0, 0, 1]; W1 maps x to [x0 + x3, x2 - x3] = [2, -1];
        // b1 = [0.5, 0.5] -> relu([2.5, -0.5]) = [2.5, 0];
        // W2 = [[1, 2], [3, 4]], b2 = [0, 1] -> [2.5, 6.0].
        let g = toy();
        let mut m = Model::zeros(&g, 2).unwrap();
        let md = *m.module(0).unwrap();
        let p = m.params_mut();
        p.value_mut(md.w1)
            .data_mut()
            .copy_from_slice(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, -1.0]);
        p.value_mut(md.b1).data_mut().copy_from_slice(&[0.5, 0.5]);
        p.value_mut(md.w2)
            .data_mut()
            .copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        p.value_mut(md.b2).data_mut().copy_from_slice(&[0.0, 1.0]);
        let out = m.relation_forward(0, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(out, vec![2.5, 6.0]);
    }

    #[test]
    fn output_dimension_matches() {
        let g = toy();
        for d in [2, 4, 8] {
            let m = Model::new(&g, d, &mut rng::from_seed(d as u64)).unwrap();
            let v = vec![0.3; d];
            assert_eq!(m.relation_forward(1, &v, &v).unwrap().len(), d);
        }
        let m = Model::zeros(&g, 2).unwrap();
        assert!(m.relation_forward(99, &[0.0; 2], &[0.0; 2]).is_err());
        assert!(Model::zeros(&g, 1).is_err());
    }

    #[test]
    fn embedding_init_bounds() {
        let g = toy();
        let d = 16;
        let m = Model::new(&g, d, &mut rng::from_seed(5)).unwrap();
        let bound = 1.0 / (d as f32).sqrt();
        assert!(m.embeddings().data().iter().all(|v| v.abs() <= bound));
        assert_eq!(m.embeddings().shape(), &[g.num_entities(), d]);
    }

    #[test]
    fn tape_and_plain_forward_agree_bitwise() {
        let g = toy();
        let m = Model::new(&g, 8, &mut rng::from_seed(9)).unwrap();
        let mut tape = Tape::new();
        let u = tape.row(m.params(), m.embedding_id(), 0);
        let e = tape.row(m.params(), m.embedding_id(), 3);
        let y = m.relation_on_tape(&mut tape, 2, u, e).unwrap();
        let plain = m
            .relation_forward(2, m.embedding(0), m.embedding(3))
            .unwrap();
        assert_eq!(tape.value(y).data(), plain.as_slice());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let g = toy();
        let m = Model::new(&g, 4, &mut rng::from_seed(1)).unwrap();
        let bytes = m.to_checkpoint();
        let back = Model::from_checkpoint(&g, &bytes).unwrap();
        assert_eq!(back.to_checkpoint(), bytes);
        let teacher_kind = checkpoint::encode(CheckpointKind::TEACHER, m.params().named_values());
        assert!(Model::from_checkpoint(&g, &teacher_kind).is_err());
    }
}
