//! Binary weight document. All integers are little-endian `u32`, all reals
//! little-endian IEEE-754 `f64`:
//!
//! ```text
//! magic        8 bytes  "FPMLP\0\0\0"
//! version      u32      1
//! state_dim    u32
//! cond_dim     u32
//! activation   u8       0 = tanh, 1 = silu
//! layer_count  u32
//! layer sizes  layer_count x (inputs u32, outputs u32)
//! parameters   per layer: outputs*inputs weights (row-major), then outputs biases
//! ```
//!
//! Nothing may follow the last parameter.

use super::mlp::{Activation, Dense, MlpField};
use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 8] = b"FPMLP\0\0\0";
pub const WEIGHTS_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Parse {
                offset: self.bytes.len(),
                reason: format!("truncated while reading {what}"),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

impl MlpField {
    pub fn save_weights(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(29 + 8 * self.layers.len() + 8 * self.parameter_count());
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.state_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.cond_dim as u32).to_le_bytes());
        out.push(self.activation.code());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
            out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn load_weights(bytes: &[u8]) -> Result<MlpField> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != WEIGHTS_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        let version_at = r.pos;
        let version = r.u32("version")?;
        if version != WEIGHTS_VERSION {
            return Err(Error::Parse {
                offset: version_at,
                reason: format!("unsupported version {version}"),
            });
        }
        let state_dim = r.u32("state_dim")? as usize;
        let cond_dim = r.u32("cond_dim")? as usize;
        let act_at = r.pos;
        let code = r.take(1, "activation")?[0];
        let activation = Activation::from_code(code).ok_or_else(|| Error::Parse {
            offset: act_at,
            reason: format!("unknown activation code {code}"),
        })?;
        let layer_count = r.u32("layer_count")? as usize;
        if layer_count == 0 {
            return Err(Error::Schema("no layers".into()));
        }
        // every layer header needs 8 bytes; reject absurd counts before allocating
        if layer_count > (bytes.len() - r.pos) / 8 {
            return Err(Error::Parse {
                offset: bytes.len(),
                reason: "truncated while reading layer sizes".into(),
            });
        }
        let mut shapes = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let inputs = r.u32("layer inputs")? as usize;
            let outputs = r.u32("layer outputs")? as usize;
            shapes.push((inputs, outputs));
        }

        if state_dim == 0 {
            return Err(Error::Schema("state dimension is zero".into()));
        }
        if shapes[0].0 != state_dim + 1 + cond_dim {
            return Err(Error::Schema(format!(
                "first layer takes {} inputs but state/time/condition need {}",
                shapes[0].0,
                state_dim + 1 + cond_dim
            )));
        }
        for (i, w) in shapes.windows(2).enumerate() {
            if w[0].1 != w[1].0 {
                return Err(Error::Schema(format!(
                    "layer {} outputs {} but layer {} takes {}",
                    i,
                    w[0].1,
                    i + 1,
                    w[1].0
                )));
            }
        }
        if shapes[layer_count - 1].1 != state_dim {
            return Err(Error::Schema(format!(
                "output width {} differs from state dimension {}",
                shapes[layer_count - 1].1,
                state_dim
            )));
        }
        if shapes.iter().any(|&(i, o)| i == 0 || o == 0) {
            return Err(Error::Schema("zero-width layer".into()));
        }

        let mut layers = Vec::with_capacity(layer_count);
        for (inputs, outputs) in shapes {
            let weights = (0..inputs * outputs)
                .map(|_| r.f64("weights"))
                .collect::<Result<Vec<_>>>()?;
            let bias = (0..outputs)
                .map(|_| r.f64("biases"))
                .collect::<Result<Vec<_>>>()?;
            layers.push(Dense {
                inputs,
                outputs,
                weights,
                bias,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse {
                offset: r.pos,
                reason: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        let field = MlpField {
            state_dim,
            cond_dim,
            activation,
            layers,
        };
        if !field.parameters_finite() {
            return Err(Error::Schema("non-finite parameter".into()));
        }
        Ok(field)
    }
}
