use std::fmt;
use std::str::FromStr;

use super::{Classifier, Conv2d, Dense, Layer};
use crate::error::Error;
use crate::rng::Rng;
use crate::tensor::Shape;

/// The built-in architectures. They differ in depth and inductive bias so
/// that substitute and target decision boundaries genuinely disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// One affine layer (multinomial logistic regression).
    Linear,
    /// One hidden layer of 64 rectified units.
    Mlp,
    /// 3x3 convolution to 8 channels, then 32 hidden units.
    Conv,
}

pub const ZOO_ARCHITECTURES: [Architecture; 3] = [Architecture::Linear, Architecture::Mlp, Architecture::Conv];

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Linear => "linear",
            Architecture::Mlp => "mlp",
            Architecture::Conv => "conv",
        }
    }

    pub fn build(&self, input: Shape, classes: usize, rng: &mut Rng) -> Classifier {
        let n = input.len();
        let layers = match self {
            Architecture::Linear => vec![Layer::Dense(Dense::random(n, classes, rng))],
            Architecture::Mlp => {
                vec![Layer::Dense(Dense::random(n, 64, rng)), Layer::Dense(Dense::random(64, classes, rng))]
            }
            Architecture::Conv => {
                let conv = Conv2d::random(input, 8, 3, rng);
                let flat = conv.output_shape().len();
                vec![
                    Layer::Conv(conv),
                    Layer::Dense(Dense::random(flat, 32, rng)),
                    Layer::Dense(Dense::random(32, classes, rng)),
                ]
            }
        };
        Classifier::new(input, classes, layers).expect("built-in architecture chains correctly")
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ZOO_ARCHITECTURES
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown architecture '{s}'")))
    }
}
