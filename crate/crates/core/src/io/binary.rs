//! Little-endian binary formats: feature matrices (`DPAF`), speaker-vector
//! pools (`DPXV`) and model checkpoints (`DPAE`, `DPBN`).
//!
//! Every file starts with a four-byte magic and a version byte. Reals are
//! stored as 32-bit floats except checkpoint epsilons, which are 64-bit so
//! that an infinite (non-private) budget and odd budgets survive exactly.

use std::path::Path;

use crate::autoencoder::PitchAutoencoder;
use crate::bn::AcousticModel;
use crate::error::{Error, Result};
use crate::nn::{Activation, Conv1d, Matrix};

pub const FORMAT_VERSION: u8 = 1;
pub const FEATURE_MAGIC: &[u8; 4] = b"DPAF";
pub const POOL_MAGIC: &[u8; 4] = b"DPXV";
pub const PITCH_MODEL_MAGIC: &[u8; 4] = b"DPAE";
pub const BN_MODEL_MAGIC: &[u8; 4] = b"DPBN";

/// Bounds-checked little-endian reader that reports byte offsets.
struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8], format: &'static str) -> Self {
        Self { data, pos: 0, format }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.data.len() - self.pos;
        if available < n {
            return Err(Error::parse(
                self.format,
                self.pos,
                format!("{n} bytes of {what}"),
                format!("{available} bytes"),
            ));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let found = self.take(4, "magic")?;
        if found != magic {
            return Err(Error::parse(
                self.format,
                0,
                format!("magic {:?}", String::from_utf8_lossy(magic)),
                format!("{:?}", String::from_utf8_lossy(found)),
            ));
        }
        let offset = self.pos;
        let version = self.u8("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::parse(
                self.format,
                offset,
                format!("version {FORMAT_VERSION}"),
                format!("version {version}"),
            ));
        }
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::parse(self.format, self.pos, "a representable size", format!("{n} values")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::parse(
                self.format,
                self.pos,
                "end of file",
                format!("{} trailing bytes", self.data.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn push_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn encode_matrix(magic: &[u8; 4], m: &Matrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(13 + 4 * m.as_slice().len());
    out.extend_from_slice(magic);
    out.push(FORMAT_VERSION);
    push_u32(&mut out, m.rows(), "row count")?;
    push_u32(&mut out, m.cols(), "column count")?;
    push_f32s(&mut out, m.as_slice());
    Ok(out)
}

fn decode_matrix(magic: &[u8; 4], format: &'static str, bytes: &[u8]) -> Result<Matrix> {
    let mut r = Reader::new(bytes, format);
    r.header(magic)?;
    let rows = r.u32("row count")?;
    let cols = r.u32("column count")?;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::parse(format, 5, "a representable shape", format!("{rows}x{cols}")))?;
    let data = r.f32s(n, "matrix data")?;
    r.finish()?;
    Matrix::from_vec(rows, cols, data)
}

/// `DPAF`: u32 rows, u32 cols, row-major f32.
pub fn encode_features(m: &Matrix) -> Result<Vec<u8>> {
    encode_matrix(FEATURE_MAGIC, m)
}

pub fn decode_features(bytes: &[u8]) -> Result<Matrix> {
    decode_matrix(FEATURE_MAGIC, "DPAF", bytes)
}

/// `DPXV`: u32 vectors, u32 dims, row-major f32.
pub fn encode_pool(m: &Matrix) -> Result<Vec<u8>> {
    encode_matrix(POOL_MAGIC, m)
}

pub fn decode_pool(bytes: &[u8]) -> Result<Matrix> {
    decode_matrix(POOL_MAGIC, "DPXV", bytes)
}

fn encode_layers<'a>(out: &mut Vec<u8>, layers: impl Iterator<Item = &'a Conv1d>) -> Result<()> {
    let layers: Vec<&Conv1d> = layers.collect();
    push_u32(out, layers.len(), "layer count")?;
    for layer in layers {
        push_u32(out, layer.in_channels(), "input channels")?;
        push_u32(out, layer.out_channels(), "output channels")?;
        push_u32(out, layer.width(), "kernel width")?;
        out.push(layer.activation().code());
        push_f32s(out, layer.weight());
        push_f32s(out, layer.bias());
    }
    Ok(())
}

fn decode_layers(r: &mut Reader<'_>) -> Result<Vec<Conv1d>> {
    let count = r.u32("layer count")?;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let input = r.u32("input channels")?;
        let output = r.u32("output channels")?;
        let width = r.u32("kernel width")?;
        let offset = r.pos;
        let code = r.u8("activation code")?;
        let activation = Activation::from_code(code)
            .ok_or_else(|| Error::parse(r.format, offset, "activation code 0, 1 or 2", code))?;
        let mut layer = Conv1d::zeros(input, output, width, activation)
            .map_err(|e| Error::parse(r.format, offset, "a valid layer shape", e))?;
        let params = r.f32s(layer.param_count(), "layer parameters")?;
        layer.load_params(&params);
        layers.push(layer);
    }
    Ok(layers)
}

/// `DPAE`: f64 epsilon, u32 channels, u32 kernel width, then the six layers.
pub fn encode_pitch_model(model: &PitchAutoencoder) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(PITCH_MODEL_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&model.epsilon().to_le_bytes());
    push_u32(&mut out, model.channels(), "channel count")?;
    push_u32(&mut out, model.kernel_width(), "kernel width")?;
    encode_layers(&mut out, model.layers())?;
    Ok(out)
}

pub fn decode_pitch_model(bytes: &[u8]) -> Result<PitchAutoencoder> {
    let mut r = Reader::new(bytes, "DPAE");
    r.header(PITCH_MODEL_MAGIC)?;
    let epsilon = r.f64("epsilon")?;
    let channels = r.u32("channel count")?;
    let width = r.u32("kernel width")?;
    let layers = decode_layers(&mut r)?;
    r.finish()?;
    let model = PitchAutoencoder::from_layers(epsilon, layers)
        .map_err(|e| Error::parse("DPAE", 5, "a consistent autoencoder", e))?;
    if model.channels() != channels || model.kernel_width() != width {
        return Err(Error::parse(
            "DPAE",
            13,
            format!("{channels} channels of width {width}"),
            format!("{} channels of width {}", model.channels(), model.kernel_width()),
        ));
    }
    Ok(model)
}

/// `DPBN`: f64 epsilon, then the extractor and classifier layers.
pub fn encode_bn_model(model: &AcousticModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(BN_MODEL_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&model.epsilon().to_le_bytes());
    encode_layers(&mut out, model.layers())?;
    Ok(out)
}

pub fn decode_bn_model(bytes: &[u8]) -> Result<AcousticModel> {
    let mut r = Reader::new(bytes, "DPBN");
    r.header(BN_MODEL_MAGIC)?;
    let epsilon = r.f64("epsilon")?;
    let layers = decode_layers(&mut r)?;
    r.finish()?;
    AcousticModel::from_layers(epsilon, layers).map_err(|e| Error::parse("DPBN", 13, "a consistent acoustic model", e))
}

pub fn write_features(path: &Path, m: &Matrix) -> Result<()> {
    Ok(std::fs::write(path, encode_features(m)?)?)
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    decode_features(&std::fs::read(path)?)
}

pub fn write_pool(path: &Path, m: &Matrix) -> Result<()> {
    Ok(std::fs::write(path, encode_pool(m)?)?)
}

pub fn read_pool(path: &Path) -> Result<Matrix> {
    decode_pool(&std::fs::read(path)?)
}

pub fn write_pitch_model(path: &Path, model: &PitchAutoencoder) -> Result<()> {
    Ok(std::fs::write(path, encode_pitch_model(model)?)?)
}

pub fn read_pitch_model(path: &Path) -> Result<PitchAutoencoder> {
    decode_pitch_model(&std::fs::read(path)?)
}

pub fn write_bn_model(path: &Path, model: &AcousticModel) -> Result<()> {
    Ok(std::fs::write(path, encode_bn_model(model)?)?)
}

pub fn read_bn_model(path: &Path) -> Result<AcousticModel> {
    decode_bn_model(&std::fs::read(path)?)
}

/// Rounds every entry through f32, the on-disk precision.
pub fn to_f32_precision(m: &Matrix) -> Matrix {
    m.map(|v| v as f32 as f64)
}
