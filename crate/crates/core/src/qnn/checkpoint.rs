//! Binary checkpoints: magic, format version, a JSON header and the
//! little-endian f64 parameter payload guarded by a SHA-256 digest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{build_layout, InputScaler, QnnConfig, QuantileNet, TargetScaler};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"GBFQNN\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: QnnConfig,
    feature_dim: usize,
    input: InputScaler,
    target: TargetScaler,
    trained: bool,
    n_params: usize,
    sha256: String,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl QuantileNet {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload: Vec<u8> = self.params.iter().flat_map(|p| p.to_le_bytes()).collect();
        let header = Header {
            config: self.config.clone(),
            feature_dim: self.feature_dim,
            input: self.input.clone(),
            target: self.target,
            trained: self.trained,
            n_params: self.params.len(),
            sha256: sha256_hex(&payload),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a quantile-net checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version(format!(
                "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(Error::Checksum(format!(
                "header truncated: {} of {hlen} bytes",
                body.len()
            )));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        let payload = &body[hlen..];
        if payload.len() != header.n_params * 8 || sha256_hex(payload) != header.sha256 {
            return Err(Error::Checksum(format!(
                "weight payload does not match its digest ({} bytes, expected {})",
                payload.len(),
                header.n_params * 8
            )));
        }
        header.config.validate()?;
        let (encoder, cosine, fusion, n) = build_layout(&header.config, header.feature_dim);
        let d = header.feature_dim;
        if n != header.n_params
            || header.input.transforms.len() != d
            || header.input.mean.len() != d
            || header.input.scale.len() != d
            || header.input.scale.iter().any(|s| !(*s > 0.0))
            || !(header.target.scale > 0.0)
        {
            return Err(Error::Format(
                "checkpoint header inconsistent with its topology".into(),
            ));
        }
        let params = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            config: header.config,
            feature_dim: d,
            params,
            encoder,
            cosine,
            fusion,
            input: header.input,
            target: header.target,
            trained: header.trained,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn net() -> QuantileNet {
        QuantileNet::new(QnnConfig::with_width(6), 3, &mut seeded(11)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let n = net();
        let back = QuantileNet::from_bytes(&n.to_bytes().unwrap()).unwrap();
        assert_eq!(back, n);
        for u in [0.01, 0.5, 0.77] {
            assert_eq!(
                back.forward(&[1.0, 2.0, -3.0], u).unwrap().to_bits(),
                n.forward(&[1.0, 2.0, -3.0], u).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn truncation_and_corruption_fail_checksum() {
        let bytes = net().to_bytes().unwrap();
        for cut in [1, 8, 100] {
            let r = QuantileNet::from_bytes(&bytes[..bytes.len() - cut]);
            assert!(matches!(r, Err(Error::Checksum(_))), "cut {cut}: {r:?}");
        }
        let mut flipped = bytes.clone();
        let last = flipped.len() - 3;
        flipped[last] ^= 0x10;
        assert!(matches!(
            QuantileNet::from_bytes(&flipped),
            Err(Error::Checksum(_))
        ));
        let mut v = bytes;
        v[8] = 9;
        assert!(matches!(
            QuantileNet::from_bytes(&v),
            Err(Error::Version(_))
        ));
    }
}
