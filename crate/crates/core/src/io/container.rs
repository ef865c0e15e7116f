//! Binary model container.
//!
//! Layout: `"ESPK" | u16 version | u16 flags | u32 meta_len | meta JSON |
//! u64 blob_len | blob | SHA-256 of everything before it`. All integers are
//! little-endian. The blob holds, per layer (hidden then readout): β and θ
//! as f64, weights as f64, mask bytes, normalisation tensors when present,
//! then the stored fixed-point weight values as i16.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::runtime::{quantize_weights, FixedNetwork};
use crate::snn::{ArchDescriptor, LifLayer, NetworkParams};
use crate::train::{BnttParams, TrainConfig};

pub const MAGIC: &[u8; 4] = b"ESPK";
pub const FORMAT_VERSION: u16 = 1;
const DIGEST_LEN: usize = 32;
/// Header bytes before the metadata: magic, version, flags, meta length.
const HEADER_LEN: usize = 12;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    /// SHA-256 of the training configuration JSON, hex.
    pub config_hash: String,
    pub epochs: usize,
    pub val_accuracy: Option<f64>,
}

impl ModelMetadata {
    pub fn from_config(config: &TrainConfig, val_accuracy: Option<f64>) -> Result<Self> {
        Ok(Self {
            seed: config.seed,
            config_hash: config_hash(config)?,
            epochs: config.epochs,
            val_accuracy,
        })
    }
}

pub fn config_hash(config: &TrainConfig) -> Result<String> {
    let json = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}

/// A trained model with its deployed fixed-point weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelContainer {
    pub params: NetworkParams,
    /// May differ from a fresh quantisation of `params` after on-device
    /// adaptation.
    pub fixed: FixedNetwork,
    pub metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct LayerMeta {
    width: usize,
    fan_in: usize,
    residual: bool,
    bntt: bool,
    scale_exp: u32,
    nnz: usize,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    descriptor: ArchDescriptor,
    layers: Vec<LayerMeta>,
    metadata: ModelMetadata,
}

impl ModelContainer {
    pub fn new(params: NetworkParams, metadata: ModelMetadata) -> Result<Self> {
        let fixed = quantize_weights(&params)?;
        Ok(Self {
            params,
            fixed,
            metadata,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let layers: Vec<&LifLayer> = self.params.layers().collect();
        if layers.len() != self.fixed.layers.len() {
            return Err(Error::Shape("fixed and float networks differ in depth".into()));
        }
        let meta = Meta {
            descriptor: self.params.descriptor.clone(),
            layers: layers
                .iter()
                .zip(&self.fixed.layers)
                .map(|(l, f)| LayerMeta {
                    width: l.width,
                    fan_in: l.fan_in,
                    residual: l.residual,
                    bntt: l.bntt.is_some(),
                    scale_exp: f.weights.scale_exp,
                    nnz: f.weights.nnz(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        let meta = serde_json::to_vec(&meta)?;

        let mut blob = Vec::new();
        for (l, f) in layers.iter().zip(&self.fixed.layers) {
            put_f64s(&mut blob, &[l.beta, l.theta]);
            put_f64s(&mut blob, &l.weights);
            blob.extend_from_slice(&l.mask);
            if let Some(bn) = &l.bntt {
                for v in [&bn.scale, &bn.shift, &bn.running_mean, &bn.running_var] {
                    put_f64s(&mut blob, v);
                }
            }
            for v in &f.weights.values {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }

        let mut out = Vec::with_capacity(HEADER_LEN + meta.len() + 8 + blob.len() + DIGEST_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a model container (bad magic)".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        if bytes.len() < HEADER_LEN + 8 + DIGEST_LEN {
            return Err(Error::Checksum("container is truncated".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum("container digest does not match its contents".into()));
        }

        let mut r = Reader { buf: body, pos: 6 };
        let _flags = r.take(2)?;
        let meta_len = u32::from_le_bytes(r.array()?) as usize;
        let meta: Meta = serde_json::from_slice(r.take(meta_len)?)?;
        let blob_len = u64::from_le_bytes(r.array()?) as usize;
        if r.buf.len() - r.pos != blob_len {
            return Err(Error::Format("blob length does not match the container size".into()));
        }
        meta.descriptor.validate()?;
        let d = &meta.descriptor;
        if meta.layers.len() != d.depth + 1 {
            return Err(Error::Format("layer count does not match the descriptor".into()));
        }

        let mut layers = Vec::with_capacity(meta.layers.len());
        let mut values = Vec::with_capacity(meta.layers.len());
        for lm in &meta.layers {
            let n = lm.width * lm.fan_in;
            let [beta, theta] = <[f64; 2]>::try_from(r.f64s(2)?).expect("two values read");
            let weights = r.f64s(n)?;
            let mask = r.take(n)?.to_vec();
            let bntt = if lm.bntt {
                let len = d.time_steps * lm.width;
                Some(BnttParams {
                    time_steps: d.time_steps,
                    width: lm.width,
                    scale: r.f64s(len)?,
                    shift: r.f64s(len)?,
                    running_mean: r.f64s(len)?,
                    running_var: r.f64s(len)?,
                })
            } else {
                None
            };
            values.push(
                r.take(2 * lm.nnz)?
                    .chunks_exact(2)
                    .map(|b| i16::from_le_bytes([b[0], b[1]]))
                    .collect::<Vec<_>>(),
            );
            layers.push(LifLayer {
                width: lm.width,
                fan_in: lm.fan_in,
                weights,
                mask,
                beta,
                theta,
                residual: lm.residual,
                bntt,
            });
        }
        let readout = layers.pop().expect("depth + 1 layers");
        let params = NetworkParams {
            descriptor: meta.descriptor.clone(),
            hidden: layers,
            readout,
        };
        let mut fixed = quantize_weights(&params)?;
        for ((f, v), lm) in fixed.layers.iter_mut().zip(values).zip(&meta.layers) {
            if f.weights.values.len() != v.len() {
                return Err(Error::Format("fixed-point values do not match the mask".into()));
            }
            f.weights.values = v;
            f.weights.scale_exp = lm.scale_exp;
        }
        Ok(Self {
            params,
            fixed,
            metadata: meta.metadata,
        })
    }
}

pub fn save_model(model: &ModelContainer, path: &Path) -> Result<()> {
    Ok(fs::write(path, model.to_bytes()?)?)
}

pub fn load_model(path: &Path) -> Result<ModelContainer> {
    ModelContainer::from_bytes(&fs::read(path)?)
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("container ends inside a field".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * n)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{build_network, Connectivity, DecayMode, SkipPattern};

    fn model(bntt: bool) -> ModelContainer {
        let d = ArchDescriptor::uniform(2, 9, 4, DecayMode::LearnablePerLayer, Connectivity::Sparse50, SkipPattern::Residual, 5, 3);
        let mut net = build_network(&d, 7).unwrap();
        if bntt {
            net.enable_bntt();
            let bn = net.hidden[1].bntt.as_mut().unwrap();
            bn.running_var[3] = 0.123456789;
        }
        net.hidden[0].beta = 0.1 + 0.2;
        let meta = ModelMetadata::from_config(&TrainConfig::default(), Some(0.93)).unwrap();
        ModelContainer::new(net, meta).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for bntt in [false, true] {
            let mut m = model(bntt);
            m.fixed.layers[0].weights.values[0] = 1234;
            let back = ModelContainer::from_bytes(&m.to_bytes().unwrap()).unwrap();
            assert_eq!(back, m);
            let bits = |n: &NetworkParams| n.layers().flat_map(|l| l.weights.iter().map(|w| w.to_bits())).collect::<Vec<_>>();
            assert_eq!(bits(&back.params), bits(&m.params));
        }
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let bytes = model(false).to_bytes().unwrap();
        for cut in [1, 40, bytes.len() / 2, bytes.len() - 7] {
            let e = ModelContainer::from_bytes(&bytes[..cut.max(6)]).unwrap_err();
            assert!(matches!(e, Error::Checksum(_)), "{cut}: {e}");
        }
        let mut flipped = bytes.clone();
        flipped[100] ^= 1;
        assert!(matches!(ModelContainer::from_bytes(&flipped), Err(Error::Checksum(_))));
    }

    #[test]
    fn version_checked_before_digest() {
        let mut bytes = model(false).to_bytes().unwrap();
        bytes[4] = 2;
        match ModelContainer::from_bytes(&bytes) {
            Err(Error::Version { expected, found }) => assert_eq!((expected, found), (1, 2)),
            other => panic!("{other:?}"),
        }
        bytes[0] = b'X';
        assert!(matches!(ModelContainer::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.espk");
        let m = model(true);
        save_model(&m, &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), m);
    }
}
