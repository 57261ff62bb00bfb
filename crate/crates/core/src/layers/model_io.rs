//! Binary model files (little-endian):
//!
//! ```text
//! "SONN" | version u16 = 1 | channels u16 | layer_count u16
//! per layer:  in_ch u16 | out_ch u16 | K u16 | Q u16 | activation u8 (0 linear, 1 tanh)
//! per layer, for q = 1..Q: weights f32 [out][in][kh][kw]
//!                          (the layer bias f32 [out] follows the q = 1 weights)
//! ```

use std::path::Path;

use super::activation::Activation;
use super::gen_conv::GenerativeConvParams;
use super::name::ModelName;
use super::network::{LayerSpec, Network, NetworkSpec};
use crate::conv::ConvKernel;
use crate::error::ModelDecodeError;
use crate::{Error, Result};

const MAGIC: [u8; 4] = *b"SONN";
const VERSION: u16 = 1;

pub fn serialize_model(net: &Network<f32>) -> Vec<u8> {
    let spec = net.spec();
    let mut out = Vec::with_capacity(16 + net.param_count() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.channels as u16).to_le_bytes());
    out.extend_from_slice(&(spec.layers.len() as u16).to_le_bytes());
    for l in &spec.layers {
        for v in [l.in_channels, l.out_channels, l.kernel_size, l.q_order] {
            out.extend_from_slice(&(v as u16).to_le_bytes());
        }
        out.push(l.activation.code());
    }
    let put = |out: &mut Vec<u8>, values: &[f32]| {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for layer in net.layers() {
        for (q, k) in layer.kernels().iter().enumerate() {
            put(&mut out, &k.weights);
            if q == 0 {
                put(&mut out, layer.bias());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelDecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(ModelDecodeError::Truncated(self.buf.len()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelDecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelDecodeError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, ModelDecodeError> {
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn deserialize_model(bytes: &[u8]) -> Result<Network<f32>, ModelDecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(ModelDecodeError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(ModelDecodeError::Version(version));
    }
    let channels = r.u16()? as usize;
    let layer_count = r.u16()? as usize;
    if layer_count == 0 {
        return Err(ModelDecodeError::Header("layer count is zero".into()));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let in_channels = r.u16()? as usize;
        let out_channels = r.u16()? as usize;
        let kernel_size = r.u16()? as usize;
        let q_order = r.u16()? as usize;
        let code = r.u8()?;
        let activation = Activation::from_code(code).ok_or_else(|| {
            ModelDecodeError::Header(format!("layer {i}: unknown activation code {code}"))
        })?;
        layers.push(LayerSpec {
            in_channels,
            out_channels,
            kernel_size,
            q_order,
            activation,
        });
    }
    let first = layers[0];
    let spec = NetworkSpec {
        name: ModelName::new(first.q_order, first.out_channels).to_string(),
        layers,
        channels,
    };
    spec.validate()
        .map_err(|e| ModelDecodeError::Header(e.to_string()))?;

    let mut params = Vec::with_capacity(layer_count);
    for l in &spec.layers {
        let n = l.out_channels * l.in_channels * l.kernel_size * l.kernel_size;
        let mut kernels = Vec::with_capacity(l.q_order);
        for q in 0..l.q_order {
            let weights = r.f32s(n)?;
            let bias = if q == 0 {
                r.f32s(l.out_channels)?
            } else {
                vec![0.0; l.out_channels]
            };
            kernels.push(
                ConvKernel::from_parts(l.out_channels, l.in_channels, l.kernel_size, weights, bias)
                    .map_err(|e| ModelDecodeError::Header(e.to_string()))?,
            );
        }
        params.push(
            GenerativeConvParams::new(kernels)
                .map_err(|e| ModelDecodeError::Header(e.to_string()))?,
        );
    }
    if r.pos != bytes.len() {
        return Err(ModelDecodeError::TrailingBytes(bytes.len() - r.pos));
    }
    Network::new(spec, params).map_err(|e| ModelDecodeError::Header(e.to_string()))
}

pub fn save_model(net: &Network<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serialize_model(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(deserialize_model(&bytes)?)
}
