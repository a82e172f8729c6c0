//! A named set of trained classifiers, stored as one model file each plus
//! a `zoo.json` manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    load_model, save_model, train, train_adversarial, Architecture, Classifier, Dataset, TrainConfig, ZOO_ARCHITECTURES,
};
use crate::rng::Rng;
use crate::tensor::Shape;

pub const MANIFEST: &str = "zoo.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ZooConfig {
    pub architectures: Vec<Architecture>,
    pub train: TrainConfig,
    /// Also train an FGSM-hardened copy of each architecture at this
    /// strength, named `<arch>-adv`.
    pub adversarial_eps: Option<f64>,
}

impl Default for ZooConfig {
    fn default() -> Self {
        ZooConfig { architectures: ZOO_ARCHITECTURES.to_vec(), train: TrainConfig::default(), adversarial_eps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooRecord {
    pub id: String,
    pub architecture: String,
    pub file: String,
    pub input: Shape,
    pub seed: u64,
    pub adversarial_eps: Option<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ZooEntry {
    pub record: ZooRecord,
    pub model: Classifier,
}

#[derive(Debug, Clone, Default)]
pub struct Zoo {
    entries: Vec<ZooEntry>,
}

impl Zoo {
    pub fn new(entries: Vec<ZooEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|o| o.record.id == e.record.id) {
                return Err(Error::invalid(format!("duplicate model id '{}'", e.record.id)));
            }
        }
        Ok(Zoo { entries })
    }

    /// Trains every configured architecture on `dataset`, each from its own
    /// seed stream.
    pub fn train(dataset: &Dataset, seed: u64, cfg: &ZooConfig) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, arch) in cfg.architectures.iter().enumerate() {
            let variants = std::iter::once(None).chain(cfg.adversarial_eps.map(Some));
            for (v, eps) in variants.enumerate() {
                let model_seed = Rng::derive(seed, &[i as u64, v as u64]).seed();
                let mut rng = Rng::new(model_seed);
                let model = arch.build(dataset.shape(), dataset.classes(), &mut rng);
                let (lr, epochs) = (cfg.train.learning_rate, cfg.train.epochs);
                let (model, summary) = match eps {
                    None => train(model, dataset, epochs, lr, &mut rng)?,
                    Some(e) => train_adversarial(model, dataset, epochs, lr, e, &mut rng)?,
                };
                let id = match eps {
                    None => arch.name().to_string(),
                    Some(_) => format!("{}-adv", arch.name()),
                };
                let record = ZooRecord {
                    file: format!("{id}.cwm"),
                    id,
                    architecture: arch.name().to_string(),
                    input: dataset.shape(),
                    seed: model_seed,
                    adversarial_eps: eps,
                    train_accuracy: summary.train_accuracy,
                    test_accuracy: summary.test_accuracy,
                };
                entries.push(ZooEntry { record, model });
            }
        }
        Zoo::new(entries)
    }

    pub fn entries(&self) -> &[ZooEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.record.id.as_str()).collect()
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.entries
            .iter()
            .position(|e| e.record.id == id)
            .ok_or_else(|| Error::invalid(format!("no model '{id}' in the zoo (have {})", self.ids().join(", "))))
    }

    pub fn get(&self, id: &str) -> Result<&Classifier> {
        Ok(&self.entries[self.index_of(id)?].model)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
        for e in &self.entries {
            save_model(dir.join(&e.record.file), &e.model)?;
        }
        let records: Vec<&ZooRecord> = self.entries.iter().map(|e| &e.record).collect();
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&records)? + "\n").map_err(Error::at_path(&path))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(Error::at_path(&path))?;
        let records: Vec<ZooRecord> = serde_json::from_str(&text)?;
        let mut entries = Vec::with_capacity(records.len());
        for record in records {
            let model = load_model(dir.join(&record.file))
                .and_then(|m| m.with_input_shape(record.input))
                .map_err(|e| Error::ModelLoad { id: record.id.clone(), source: Box::new(e) })?;
            entries.push(ZooEntry { record, model });
        }
        Zoo::new(entries)
    }
}
