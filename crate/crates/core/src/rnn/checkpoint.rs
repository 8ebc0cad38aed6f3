//! Checkpoint files.
//!
//! ```text
//! devmimic-checkpoint 1 input_width=9 output_width=8 hidden_layers=4 hidden_width=10 seed=3 bptt_window=0 step=1200 params=2578
//! ```
//!
//! followed by `params` little-endian `f32` values in the flat layout order
//! documented on [`super::Layout`]. `bptt_window=0` means full BPTT.

use std::path::Path;

use super::{Network, NetworkConfig};
use crate::dataset::{read_f32_payload, Header};
use crate::error::{Error, FormatError, Result};

pub const CHECKPOINT_MAGIC: &str = "devmimic-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Network<f32> {
    /// Serialize with the given optimizer step count.
    pub fn to_checkpoint_bytes(&self, step: u64) -> Vec<u8> {
        let c = &self.config;
        let header = format!(
            "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} input_width={} output_width={} hidden_layers={} hidden_width={} seed={} bptt_window={} step={step} params={}\n",
            c.input_width,
            c.output_width,
            c.hidden_layers,
            c.hidden_width,
            c.seed,
            c.bptt_window.unwrap_or(0),
            self.params.len()
        );
        let mut out = header.into_bytes();
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parse a checkpoint, returning the network and its step count.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<(Self, u64), FormatError> {
        let h = Header::parse(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let window = h.usize("bptt_window")?;
        let config = NetworkConfig {
            input_width: h.usize("input_width")?,
            output_width: h.usize("output_width")?,
            hidden_layers: h.usize("hidden_layers")?,
            hidden_width: h.usize("hidden_width")?,
            seed: h.u64("seed")?,
            bptt_window: (window > 0).then_some(window),
        };
        config
            .validate()
            .map_err(|e| FormatError::Header(e.to_string()))?;
        let count = h.usize("params")?;
        if count != config.param_count() {
            return Err(FormatError::Width {
                field: "params",
                found: count,
                expected: config.param_count(),
            });
        }
        let params = read_f32_payload(&bytes[h.len..], count)?;
        let step = h.u64("step")?;
        let net = Network::from_params(config, params)
            .map_err(|e| FormatError::Header(e.to_string()))?;
        Ok((net, step))
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>, step: u64) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_bytes(step)).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Self, u64)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes).map_err(|k| Error::format(path, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut cfg = NetworkConfig::new(12, 22, 77);
        cfg.bptt_window = Some(16);
        let net = Network::<f32>::init(cfg).unwrap();
        let bytes = net.to_checkpoint_bytes(1234);
        let (back, step) = Network::<f32>::from_checkpoint_bytes(&bytes).unwrap();
        assert_eq!(step, 1234);
        assert_eq!(back.config(), net.config());
        assert!(back
            .params()
            .iter()
            .zip(net.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.to_checkpoint_bytes(1234), bytes);
    }

    #[test]
    fn rejects_damaged_files() {
        let net = Network::<f32>::init(NetworkConfig::new(9, 1, 1)).unwrap();
        let bytes = net.to_checkpoint_bytes(0);
        assert!(matches!(
            Network::<f32>::from_checkpoint_bytes(&bytes[..bytes.len() - 1]),
            Err(FormatError::Truncated { .. })
        ));
        assert!(matches!(
            Network::<f32>::from_checkpoint_bytes(b"devmimic-dataset 1\n"),
            Err(FormatError::BadMagic { .. })
        ));
        let text = String::from_utf8_lossy(&bytes).replace("params=", "params=1");
        assert!(Network::<f32>::from_checkpoint_bytes(text.as_bytes()).is_err());
    }
}
