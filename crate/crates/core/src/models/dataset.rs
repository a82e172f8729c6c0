//! Procedurally generated image classification data: one Gaussian prototype
//! per class around a shared background, plus per-sample pixel noise.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_image, write_image};
use crate::rng::Rng;
use crate::tensor::{Image, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub shape: Shape,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Per-pixel std of each class prototype around the shared background.
    pub prototype_spread: f64,
    /// Per-pixel std of the sample noise around its prototype.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            shape: Shape::new(8, 8, 3),
            classes: 10,
            train_per_class: 200,
            test_per_class: 100,
            prototype_spread: 0.03,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: Shape,
    classes: usize,
    train: Vec<(Image, usize)>,
    test: Vec<(Image, usize)>,
}

impl Dataset {
    pub fn new(shape: Shape, classes: usize, train: Vec<(Image, usize)>, test: Vec<(Image, usize)>) -> Result<Self> {
        for (img, label) in train.iter().chain(&test) {
            shape.check_len(img.len())?;
            if img.shape() != shape {
                return Err(Error::invalid(format!("image of shape {} in a {shape} dataset", img.shape())));
            }
            if *label >= classes {
                return Err(Error::LabelOutOfRange { label: *label, classes });
            }
        }
        Ok(Dataset { shape, classes, train, test })
    }

    /// Samples a dataset. Pixels are rounded to `f32` precision so the data
    /// survives a trip through the tensor file format unchanged.
    pub fn generate(config: &DatasetConfig) -> Self {
        let mut rng = Rng::new(config.seed);
        let n = config.shape.len();
        let background: Vec<f64> = (0..n).map(|_| 0.3 + 0.4 * rng.uniform()).collect();
        let prototypes: Vec<Vec<f64>> = (0..config.classes)
            .map(|_| background.iter().map(|b| b + config.prototype_spread * rng.normal()).collect())
            .collect();
        let sample = |count: usize, rng: &mut Rng| {
            let mut out = Vec::with_capacity(count * config.classes);
            for _ in 0..count {
                for (label, proto) in prototypes.iter().enumerate() {
                    let data = proto
                        .iter()
                        .map(|p| ((p + config.noise_std * rng.normal()).clamp(0.0, 1.0) as f32) as f64)
                        .collect();
                    out.push((Image::new(config.shape, data).expect("clamped"), label));
                }
            }
            out
        };
        let train = sample(config.train_per_class, &mut rng);
        let test = sample(config.test_per_class, &mut rng);
        Dataset { shape: config.shape, classes: config.classes, train, test }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self, split: Split) -> &[(Image, usize)] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn train(&self) -> &[(Image, usize)] {
        &self.train
    }

    pub fn test(&self) -> &[(Image, usize)] {
        &self.test
    }

    /// Writes `DIR/{train,test}/NNNNN.cwt` plus a `labels.txt` sidecar per
    /// split, one integer label per line.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        for split in [Split::Train, Split::Test] {
            let sub = dir.as_ref().join(split.name());
            fs::create_dir_all(&sub).map_err(Error::at_path(&sub))?;
            let labels_path = sub.join("labels.txt");
            let mut labels = fs::File::create(&labels_path).map_err(Error::at_path(&labels_path))?;
            for (i, (img, label)) in self.split(split).iter().enumerate() {
                write_image(sub.join(format!("{i:05}.cwt")), img)?;
                writeln!(labels, "{label}")?;
            }
        }
        fs::write(dir.as_ref().join("classes.txt"), format!("{}\n", self.classes))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let classes_path = dir.join("classes.txt");
        let classes: usize = fs::read_to_string(&classes_path)
            .map_err(Error::at_path(&classes_path))?
            .trim()
            .parse()
            .map_err(|_| Error::invalid("classes.txt must hold one integer"))?;
        let mut splits = Vec::new();
        let mut shape = None;
        for split in [Split::Train, Split::Test] {
            let sub = dir.join(split.name());
            let labels_path = sub.join("labels.txt");
            let text = fs::read_to_string(&labels_path).map_err(Error::at_path(&labels_path))?;
            let mut items = Vec::new();
            for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
                let label: usize =
                    line.trim().parse().map_err(|_| Error::invalid(format!("bad label on line {}", i + 1)))?;
                let img = read_image(sub.join(format!("{i:05}.cwt")))?;
                shape.get_or_insert(img.shape());
                items.push((img, label));
            }
            splits.push(items);
        }
        let test = splits.pop().expect("two splits");
        let train = splits.pop().expect("two splits");
        let shape = shape.ok_or(Error::EmptyDataset)?;
        Dataset::new(shape, classes, train, test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetConfig {
        DatasetConfig {
            shape: Shape::new(2, 2, 1),
            classes: 3,
            train_per_class: 4,
            test_per_class: 2,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic_and_balanced() {
        let a = Dataset::generate(&tiny());
        let b = Dataset::generate(&tiny());
        assert_eq!(a, b);
        assert_eq!(a.train().len(), 12);
        assert_eq!(a.test().len(), 6);
        for c in 0..3 {
            assert_eq!(a.train().iter().filter(|(_, l)| *l == c).count(), 4);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = Dataset::generate(&tiny());
        data.save(dir.path()).unwrap();
        assert_eq!(Dataset::load(dir.path()).unwrap(), data);
    }

    #[test]
    fn rejects_bad_labels() {
        let img = Image::filled(Shape::flat(2), 0.5).unwrap();
        assert!(Dataset::new(Shape::flat(2), 2, vec![(img, 2)], vec![]).is_err());
    }
}
