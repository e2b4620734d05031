//! JSON checkpoints: model spec, vocabulary and named parameter values.
//! AdaGrad accumulators are not stored; a reloaded model is for evaluation
//! or a fresh optimiser.

use std::path::Path;

use rop_core::kbc::KbcModel;
use rop_core::numerics::{Matrix, Parameterized};
use rop_core::{rng_from_seed, RopModel, Vocab};
use serde::{Deserialize, Serialize};

use crate::config::{ModelSpec, Task};
use crate::error::{read_to_string, write, AppError, AppResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelSpec,
    pub epoch: usize,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    /// KBC query relations, in model row order; empty for PQA.
    #[serde(default)]
    pub queries: Vec<String>,
    pub tensors: Vec<Tensor>,
}

/// A model of either task.
#[derive(Clone, Debug)]
pub enum Model {
    Pqa(Box<RopModel>),
    Kbc(Box<KbcModel>),
}

impl Model {
    pub fn rop(&self) -> &RopModel {
        match self {
            Model::Pqa(m) => m,
            Model::Kbc(m) => &m.rop,
        }
    }
}

fn tensors_of<M: Parameterized>(m: &M) -> Vec<Tensor> {
    let mut out = Vec::new();
    m.visit_params(&mut |name, p| {
        let (rows, cols) = p.shape();
        out.push(Tensor {
            name: name.to_string(),
            rows,
            cols,
            values: p.value.data().to_vec(),
        });
    });
    out
}

fn fill<M: Parameterized>(m: &mut M, tensors: &[Tensor]) -> AppResult<()> {
    let mut err = None;
    let mut seen = 0usize;
    m.visit_params_mut(&mut |name, p| {
        if err.is_some() {
            return;
        }
        let Some(t) = tensors.iter().find(|t| t.name == name) else {
            err = Some(format!("checkpoint lacks tensor {name}"));
            return;
        };
        seen += 1;
        if (t.rows, t.cols) != p.shape() || t.values.len() != t.rows * t.cols {
            err = Some(format!(
                "tensor {name}: checkpoint shape {}x{} ({} values), model {:?}",
                t.rows,
                t.cols,
                t.values.len(),
                p.shape()
            ));
            return;
        }
        match Matrix::from_vec(t.rows, t.cols, t.values.clone()) {
            Ok(v) => p.value = v,
            Err(e) => err = Some(e.to_string()),
        }
    });
    if let Some(e) = err {
        return Err(AppError::Data(e));
    }
    if seen != tensors.len() {
        return Err(AppError::Data(format!(
            "checkpoint has {} tensors, model uses {seen}",
            tensors.len()
        )));
    }
    Ok(())
}

impl Checkpoint {
    pub fn of_pqa(spec: &ModelSpec, model: &RopModel, vocab: &Vocab, epoch: usize) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            model: spec.clone(),
            epoch,
            entities: vocab.entities().to_vec(),
            relations: vocab.relations().to_vec(),
            queries: Vec::new(),
            tensors: tensors_of(model),
        }
    }

    pub fn of_kbc(spec: &ModelSpec, model: &KbcModel, vocab: &Vocab, queries: &[String], epoch: usize) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            model: spec.clone(),
            epoch,
            entities: vocab.entities().to_vec(),
            relations: vocab.relations().to_vec(),
            queries: queries.to_vec(),
            tensors: tensors_of(model),
        }
    }

    pub fn vocab(&self) -> AppResult<Vocab> {
        Ok(Vocab::from_tokens(
            self.entities.iter().map(String::as_str),
            self.relations.iter().map(String::as_str),
        )?)
    }

    /// Rebuilds the model. Parameters not covered by the tensors are an error.
    pub fn model(&self) -> AppResult<Model> {
        let (ne, nr) = (self.entities.len(), self.relations.len());
        // The RNG only shapes the skeleton; every value is overwritten.
        let mut rng = rng_from_seed(0);
        match self.model.task {
            Task::Pqa => {
                let mut m = RopModel::zeros(self.model.rop_config()?, ne, nr)?;
                fill(&mut m, &self.tensors)?;
                Ok(Model::Pqa(Box::new(m)))
            }
            Task::Kbc => {
                let mut m = KbcModel::new(self.model.kbc_config()?, ne, nr, self.queries.len(), &mut rng)?;
                fill(&mut m, &self.tensors)?;
                Ok(Model::Kbc(Box::new(m)))
            }
        }
    }

    /// Errors unless `spec` describes the same architecture.
    pub fn check_spec(&self, spec: &ModelSpec) -> AppResult<()> {
        let a = &self.model;
        let same = a.task == spec.task
            && a.arch == spec.arch
            && a.comp == spec.comp
            && (a.d_e, a.d_r, a.d_h) == (spec.d_e, spec.d_r, spec.d_h)
            && a.similarity == spec.similarity;
        if same {
            Ok(())
        } else {
            Err(AppError::Usage(format!(
                "checkpoint is {:?} {}/{} d=({},{},{}) {}, config asks for {:?} {}/{} d=({},{},{}) {}",
                a.task, a.arch, a.comp, a.d_e, a.d_r, a.d_h, a.similarity,
                spec.task, spec.arch, spec.comp, spec.d_e, spec.d_r, spec.d_h, spec.similarity
            )))
        }
    }

    pub fn to_json(&self) -> AppResult<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        write(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = read_to_string(path)?;
        let c: Checkpoint = serde_json::from_str(&text).map_err(|e| AppError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if c.format_version != FORMAT_VERSION {
            return Err(AppError::Data(format!(
                "{}: checkpoint format {} (expected {FORMAT_VERSION})",
                path.display(),
                c.format_version
            )));
        }
        Ok(c)
    }
}
