//! Binary weight checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "NLVL1"                      5-byte magic
//! u32 input_dim, u32 output_dim, u32 layer_count
//! per layer: u32 in_dim, u32 out_dim, u8 skip
//! u8 activation (0 = relu, 1 = softplus), f64 softplus beta (0 for relu)
//! u64 parameter count m
//! m x f64 parameters in layout order
//! ```

use std::path::Path;

use super::{Activation, Dense, Mlp, ParamVector};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"NLVL1";

impl Mlp {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.num_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.input_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.output_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.layers().len() as u32).to_le_bytes());
        for l in self.layers() {
            out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
            out.push(l.skip as u8);
        }
        let (tag, beta) = match self.activation() {
            Activation::Relu => (0u8, 0.0),
            Activation::Softplus { beta } => (1u8, beta),
        };
        out.push(tag);
        out.extend_from_slice(&beta.to_le_bytes());
        out.extend_from_slice(&(self.num_params() as u64).to_le_bytes());
        for v in self.params().0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Mlp> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let input_dim = r.u32()? as usize;
        let output_dim = r.u32()? as usize;
        let n_layers = r.u32()? as usize;
        if n_layers == 0 || n_layers > 4096 {
            return Err(Error::Format(format!("implausible layer count {n_layers}")));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let in_dim = r.u32()? as usize;
            let out_dim = r.u32()? as usize;
            let skip = match r.u8()? {
                0 => false,
                1 => true,
                t => return Err(Error::Format(format!("bad skip flag {t}"))),
            };
            layers.push(Dense::zeros(in_dim, out_dim, skip));
        }
        let activation = match (r.u8()?, r.f64()?) {
            (0, _) => Activation::Relu,
            (1, beta) => Activation::Softplus { beta },
            (t, _) => return Err(Error::Format(format!("unknown activation tag {t}"))),
        };
        let m = r.u64()? as usize;
        let mut mlp = Mlp::from_layers(input_dim, activation, layers)
            .map_err(|e| Error::Format(format!("inconsistent header: {e}")))?;
        if mlp.output_dim() != output_dim || mlp.num_params() != m {
            return Err(Error::Format("header dimensions disagree with layer table".into()));
        }
        let mut params = Vec::with_capacity(m);
        for _ in 0..m {
            params.push(r.f64()?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after parameters".into()));
        }
        mlp.set_params(&ParamVector(params))?;
        Ok(mlp)
    }
}

pub fn save_checkpoint(mlp: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mlp.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Mlp> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Mlp::from_bytes(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
