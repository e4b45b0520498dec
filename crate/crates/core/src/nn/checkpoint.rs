//! Little-endian binary checkpoints.
//!
//! Layout:
//!
//! ```text
//! magic      4 bytes  "FCKP"
//! version    u32
//! entries    u32
//! per entry:
//!   name_len u32, name (utf-8)
//!   n_sizes  u32, sizes u32 * n_sizes      (empty for a raw vector)
//!   n_acts   u32, activation u8 * n_acts   (0 tanh, 1 relu, 2 identity)
//!   n_params u64, params f64 * n_params
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, Mlp};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub params: Vec<f64>,
}

impl CheckpointEntry {
    pub fn from_mlp(name: impl Into<String>, net: &Mlp) -> Self {
        Self {
            name: name.into(),
            layer_sizes: net.layer_sizes().to_vec(),
            activations: net.activations().to_vec(),
            params: net.params().to_vec(),
        }
    }

    /// A bare parameter vector with no layer structure (e.g. a policy log-std).
    pub fn raw(name: impl Into<String>, values: &[f64]) -> Self {
        Self {
            name: name.into(),
            layer_sizes: Vec::new(),
            activations: Vec::new(),
            params: values.to_vec(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp> {
        let mut net = Mlp::new(&self.layer_sizes, &self.activations)?;
        net.set_params(&self.params)?;
        Ok(net)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<CheckpointEntry>,
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint("field exceeds u32".into()))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        put_u32(w, self.entries.len())?;
        for e in &self.entries {
            put_u32(w, e.name.len())?;
            w.write_all(e.name.as_bytes())?;
            put_u32(w, e.layer_sizes.len())?;
            for &s in &e.layer_sizes {
                put_u32(w, s)?;
            }
            put_u32(w, e.activations.len())?;
            for a in &e.activations {
                w.write_all(&[a.code()])?;
            }
            w.write_all(&(e.params.len() as u64).to_le_bytes())?;
            for p in &e.params {
                w.write_all(&p.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = get_u32(r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = get_u32(r)? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = get_u32(r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not utf-8".into()))?;
            let n_sizes = get_u32(r)? as usize;
            let layer_sizes = (0..n_sizes)
                .map(|_| get_u32(r).map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            let n_acts = get_u32(r)? as usize;
            let mut codes = vec![0u8; n_acts];
            r.read_exact(&mut codes)?;
            let activations = codes
                .into_iter()
                .map(|c| Activation::from_code(c).ok_or_else(|| Error::Checkpoint(format!("unknown activation {c}"))))
                .collect::<Result<Vec<_>>>()?;
            let n_params = get_u64(r)? as usize;
            if !layer_sizes.is_empty() && n_params != Mlp::param_count(&layer_sizes) {
                return Err(Error::Checkpoint(format!(
                    "entry {name}: parameter count does not match layer spec"
                )));
            }
            let params = (0..n_params)
                .map(|_| get_u64(r).map(f64::from_bits))
                .collect::<Result<Vec<_>>>()?;
            entries.push(CheckpointEntry {
                name,
                layer_sizes,
                activations,
                params,
            });
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = stream(4, &[]);
        let net = Mlp::seeded(3, &[5, 4], 2, Activation::Tanh, &mut rng).unwrap();
        let ckpt = Checkpoint {
            entries: vec![
                CheckpointEntry::from_mlp("policy", &net),
                CheckpointEntry::raw("log_std", &[-0.5, f64::MIN_POSITIVE]),
            ],
        };
        let mut bytes = Vec::new();
        ckpt.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"FCKP");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.get("policy").unwrap().to_mlp().unwrap(), net);
    }

    #[test]
    fn rejects_bad_magic() {
        let bytes = b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00".to_vec();
        assert!(matches!(
            Checkpoint::read_from(&mut bytes.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }
}
