//! The `CWM1` model file.
//!
//! ```text
//! "CWM1" | version: u8 (= 1) | layer count: u32
//! per layer:
//!   tag 0 (dense): inputs u32, outputs u32
//!   tag 1 (conv):  width u32, height u32, channels u32, out_channels u32, kernel u32
//!   weights: f64 x n (row-major), biases: f64 x m
//! ```
//!
//! All integers and floats are little-endian. A dense first layer stores no
//! spatial shape, so such models reload with a flat `n x 1 x 1` input shape.

use std::fs;
use std::path::Path;

use super::{Classifier, Conv2d, Dense, Layer, Scorer};
use crate::error::{Error, Result};
use crate::io::ByteReader;
use crate::tensor::Shape;

pub const MODEL_MAGIC: &[u8; 4] = b"CWM1";
pub const MODEL_VERSION: u8 = 1;

const TAG_DENSE: u8 = 0;
const TAG_CONV: u8 = 1;

pub fn encode_model(model: &Classifier) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    put_u32(&mut out, model.layers().len());
    for layer in model.layers() {
        match layer {
            Layer::Dense(d) => {
                out.push(TAG_DENSE);
                put_u32(&mut out, d.inputs);
                put_u32(&mut out, d.outputs);
            }
            Layer::Conv(c) => {
                out.push(TAG_CONV);
                for dim in [c.input.width, c.input.height, c.input.channels, c.out_channels, c.kernel] {
                    put_u32(&mut out, dim);
                }
            }
        }
        for v in layer.weights().iter().chain(layer.bias()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn decode_model(bytes: &[u8]) -> Result<Classifier> {
    let mut r = ByteReader::new(bytes, "model header");
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::BadMagic { what: "model file", expected: "CWM1" });
    }
    let version = r.u8()?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(Error::CorruptLayer { layer: 0, reason: "model has no layers".into() });
    }
    let mut layers = Vec::with_capacity(count.min(64));
    for index in 0..count {
        let truncated = |_| Error::CorruptLayer { layer: index, reason: "file ends mid-layer".into() };
        let tag = r.u8().map_err(truncated)?;
        let layer = match tag {
            TAG_DENSE => {
                let inputs = r.u32().map_err(truncated)? as usize;
                let outputs = r.u32().map_err(truncated)? as usize;
                let weights = read_f64s(&mut r, inputs.saturating_mul(outputs), index)?;
                let bias = read_f64s(&mut r, outputs, index)?;
                Layer::Dense(Dense { inputs, outputs, weights, bias })
            }
            TAG_CONV => {
                let mut dims = [0usize; 5];
                for d in &mut dims {
                    *d = r.u32().map_err(truncated)? as usize;
                }
                let [width, height, channels, out_channels, kernel] = dims;
                let n = out_channels.saturating_mul(kernel).saturating_mul(kernel).saturating_mul(channels);
                let weights = read_f64s(&mut r, n, index)?;
                let bias = read_f64s(&mut r, out_channels, index)?;
                Layer::Conv(Conv2d { input: Shape::new(width, height, channels), out_channels, kernel, weights, bias })
            }
            other => {
                return Err(Error::CorruptLayer { layer: index, reason: format!("unknown layer kind tag {other}") })
            }
        };
        layer.validate(index)?;
        layers.push(layer);
    }
    if !r.is_done() {
        return Err(Error::CorruptLayer { layer: count - 1, reason: "trailing bytes".into() });
    }
    let input = match &layers[0] {
        Layer::Conv(c) => c.input,
        Layer::Dense(d) => Shape::flat(d.inputs),
    };
    let classes = layers.last().map(Layer::output_len).unwrap_or(0);
    Classifier::new(input, classes, layers)
}

fn read_f64s(r: &mut ByteReader<'_>, n: usize, layer: usize) -> Result<Vec<f64>> {
    // Refuse absurd sizes before allocating.
    if n > (1 << 28) {
        return Err(Error::CorruptLayer { layer, reason: format!("implausible parameter count {n}") });
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(
            r.f64()
                .map_err(|_| Error::CorruptLayer { layer, reason: "file ends inside the parameter block".into() })?,
        );
    }
    Ok(out)
}

pub fn save_model(path: impl AsRef<Path>, model: &Classifier) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(Error::at_path(path))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Classifier> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::at_path(path))?;
    decode_model(&bytes)
}

impl Classifier {
    /// Reinterprets a flat-input model as consuming images of `shape`.
    pub fn with_input_shape(mut self, shape: Shape) -> Result<Self> {
        shape.check_len(self.input_shape().len())?;
        self.input = shape;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ZOO_ARCHITECTURES;
    use crate::rng::Rng;

    #[test]
    fn round_trip_reproduces_outputs_bit_exactly() {
        let shape = Shape::new(8, 8, 3);
        let mut rng = Rng::new(4);
        for arch in ZOO_ARCHITECTURES {
            let m = arch.build(shape, 10, &mut rng);
            let back = decode_model(&encode_model(&m)).unwrap().with_input_shape(shape).unwrap();
            assert_eq!(back, m);
            let x: Vec<f64> = (0..192).map(|_| rng.uniform()).collect();
            let (p, q) = (m.probabilities(&x).unwrap(), back.probabilities(&x).unwrap());
            assert!(p.iter().zip(&q).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn truncated_file_names_the_layer() {
        let m = ZOO_ARCHITECTURES[1].build(Shape::new(8, 8, 3), 10, &mut Rng::new(0));
        let bytes = encode_model(&m);
        let err = decode_model(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::CorruptLayer { layer: 1, .. }), "{err}");
        assert!(matches!(decode_model(&bytes[..6]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn version_and_magic_are_checked() {
        let m = ZOO_ARCHITECTURES[0].build(Shape::flat(4), 2, &mut Rng::new(0));
        let mut bytes = encode_model(&m);
        bytes[4] = 2;
        assert!(matches!(decode_model(&bytes), Err(Error::UnsupportedVersion(2))));
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn dimension_mismatch_names_the_layer() {
        let m = ZOO_ARCHITECTURES[1].build(Shape::flat(6), 3, &mut Rng::new(0));
        let mut bytes = encode_model(&m);
        // Second layer's `inputs` field sits after header (9), tag+dims (9)
        // and the first layer's parameters, then its own tag.
        let first = 9 + 9 + 8 * (6 * 64 + 64);
        bytes[first + 1] = 63;
        let err = decode_model(&bytes).unwrap_err();
        assert!(matches!(err, Error::CorruptLayer { layer: 1, .. }), "{err}");
    }
}
