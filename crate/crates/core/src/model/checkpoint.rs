use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use cpf_autodiff::{Adam, ParamStore, Parameter};
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::data::QMatrix;
use crate::graph::PMatrix;
use crate::{CoreError, Result};

/// Everything needed to resume training or evaluate a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
    pub q: QMatrix,
    pub p: PMatrix,
    pub params: Vec<Parameter>,
    pub adam: Option<Adam>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, seed: u64, epoch: usize, adam: Option<&Adam>) -> Self {
        Self {
            config: model.config.clone(),
            seed,
            epoch,
            q: model.q.clone(),
            p: model.p.clone(),
            params: model.params.iter().map(|(_, p)| p.clone()).collect(),
            adam: adam.cloned(),
        }
    }

    pub fn into_model(self) -> Result<(Model, Option<Adam>)> {
        let params = ParamStore::from_parameters(self.params);
        let model = Model::from_parts(self.config, self.q, self.p, params)?;
        Ok((model, self.adam))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}
