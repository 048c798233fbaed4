//! Binary checkpoints.
//!
//! Layout, little-endian: magic `SRTS`, u32 version, u32 length + config text
//! (the run config followed by `state.*` lines), u32 tensor count, then per
//! tensor a u16 name length + name, u8 rank, u64 dims and raw floats. The
//! final four bytes are the CRC-32 of everything before them. Floats are
//! 4 bytes wide unless the run uses 64-bit precision.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::autodiff::ParamStore;
use crate::config::{Precision, RunConfig};
use crate::error::{Error, Result};
use crate::model::SrTsl;
use crate::rng::{ModelRng, RngState};
use crate::tensor::{Scalar, Tensor};
use crate::training::optim::Adam;
use crate::training::trainer::Trainer;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SRTS";
pub const CHECKPOINT_VERSION: u32 = 1;

const FIRST_MOMENT: &str = "adam.m/";
const SECOND_MOMENT: &str = "adam.v/";

/// A restored run: its configuration and trainer state.
#[derive(Clone, Debug)]
pub struct Checkpoint<F> {
    pub config: RunConfig,
    pub trainer: Trainer<F>,
}

fn checkpoint_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn write_tensor<F: Scalar>(out: &mut Vec<u8>, name: &str, t: &Tensor<F>) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| checkpoint_err(format!("name too long: {name}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
    Ok(())
}

/// Serializes `trainer` together with the run configuration.
pub fn checkpoint_bytes<F: Scalar>(config: &RunConfig, trainer: &Trainer<F>) -> Result<Vec<u8>> {
    let expected = match config.precision {
        Precision::F32 => 4,
        Precision::F64 => 8,
    };
    if F::BYTES != expected {
        return Err(checkpoint_err(format!(
            "run precision is {} but the model uses {}",
            config.precision,
            F::NAME
        )));
    }
    let mut text = config.to_text();
    text.push_str(&format!("state.epoch = {}\n", trainer.epoch));
    text.push_str(&format!("state.step = {}\n", trainer.optimizer.step));
    text.push_str(&format!("state.rng = {}\n", trainer.model.rng.state().encode()));

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());

    let params = &trainer.model.params;
    let count = params.len() + trainer.optimizer.first.len() + trainer.optimizer.second.len();
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for (name, p) in params.iter() {
        write_tensor(&mut out, name, &p.value)?;
    }
    for (name, t) in &trainer.optimizer.first {
        write_tensor(&mut out, &format!("{FIRST_MOMENT}{name}"), t)?;
    }
    for (name, t) in &trainer.optimizer.second {
        write_tensor(&mut out, &format!("{SECOND_MOMENT}{name}"), t)?;
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn save_checkpoint<F: Scalar>(path: &Path, config: &RunConfig, trainer: &Trainer<F>) -> Result<()> {
    let bytes = checkpoint_bytes(config, trainer)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            checkpoint_err(format!("truncated file: {what} at byte {} needs {n} bytes", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Checks magic and version and splits the config text into the run config and `state.*` values.
fn read_header<'a>(r: &mut Reader<'a>) -> Result<(RunConfig, BTreeMap<String, String>)> {
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(checkpoint_err(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(magic),
            "SRTS"
        )));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(checkpoint_err(format!(
            "unsupported version {version}, this build reads version {CHECKPOINT_VERSION}"
        )));
    }
    let len = r.u32("config length")? as usize;
    let text = std::str::from_utf8(r.take(len, "config text")?)
        .map_err(|_| checkpoint_err("config text is not UTF-8"))?;
    let mut config_text = String::new();
    let mut state = BTreeMap::new();
    for line in text.lines() {
        match line.strip_prefix("state.").and_then(|l| l.split_once('=')) {
            Some((k, v)) => {
                state.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => {
                config_text.push_str(line);
                config_text.push('\n');
            }
        }
    }
    let config = RunConfig::parse(&config_text)?;
    Ok((config, state))
}

/// Run configuration stored in a checkpoint, without reading the tensors.
pub fn read_checkpoint_config(path: &Path) -> Result<RunConfig> {
    let bytes = fs::read(path)?;
    Ok(read_header(&mut Reader { bytes: &bytes, pos: 0 })?.0)
}

pub fn checkpoint_from_bytes<F: Scalar>(bytes: &[u8]) -> Result<Checkpoint<F>> {
    let mut r = Reader { bytes, pos: 0 };
    let (config, state) = read_header(&mut r)?;
    let wanted = match config.precision {
        Precision::F32 => 4,
        Precision::F64 => 8,
    };
    if wanted != F::BYTES {
        return Err(checkpoint_err(format!(
            "checkpoint holds {} values, requested {}",
            config.precision,
            F::NAME
        )));
    }

    let count = r.u32("tensor count")?;
    let mut tensors = Vec::new();
    for i in 0..count {
        let what = format!("tensor {i}");
        let len = r.u16(&what)? as usize;
        let name = std::str::from_utf8(r.take(len, &what)?)
            .map_err(|_| checkpoint_err(format!("{what}: name is not UTF-8")))?
            .to_string();
        let rank = r.u8(&name)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64(&name)? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.saturating_mul(F::BYTES), &name)?;
        let data: Vec<F> = raw.chunks_exact(F::BYTES).map(F::read_le).collect();
        let t = Tensor::new(shape, data).map_err(|e| checkpoint_err(format!("{name}: {e}")))?;
        tensors.push((name, t));
    }
    let body_end = r.pos;
    let stored = r.u32("checksum")?;
    if r.pos != bytes.len() {
        return Err(checkpoint_err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let actual = crc32fast::hash(&bytes[..body_end]);
    if stored != actual {
        return Err(checkpoint_err(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }

    let mut params = ParamStore::new();
    let mut first = BTreeMap::new();
    let mut second = BTreeMap::new();
    for (name, t) in tensors {
        if let Some(p) = name.strip_prefix(FIRST_MOMENT) {
            first.insert(p.to_string(), t);
        } else if let Some(p) = name.strip_prefix(SECOND_MOMENT) {
            second.insert(p.to_string(), t);
        } else {
            params.insert(name, t)?;
        }
    }

    let get = |k: &str| state.get(k).ok_or_else(|| checkpoint_err(format!("missing state.{k}")));
    let epoch: usize = get("epoch")?.parse().map_err(|_| checkpoint_err("bad state.epoch"))?;
    let step: u64 = get("step")?.parse().map_err(|_| checkpoint_err("bad state.step"))?;
    let rng = ModelRng::from_state(RngState::decode(get("rng")?)?);

    let model = SrTsl::from_parts(config.model.clone(), params, rng)?;
    let mut optimizer = Adam::new(&model.params);
    for (kind, stored) in [("first", &first), ("second", &second)] {
        if stored.len() != optimizer.first.len() {
            return Err(checkpoint_err(format!(
                "{} {kind} moments stored, {} parameters",
                stored.len(),
                optimizer.first.len()
            )));
        }
        for (name, t) in stored {
            let p = model
                .params
                .get(name)
                .ok_or_else(|| checkpoint_err(format!("{kind} moment for unknown parameter {name}")))?;
            if p.shape() != t.shape() {
                return Err(checkpoint_err(format!(
                    "{kind} moment {name} has shape {:?}, parameter has {:?}",
                    t.shape(),
                    p.shape()
                )));
            }
        }
    }
    optimizer.first = first;
    optimizer.second = second;
    optimizer.step = step;

    let mut trainer = Trainer::new(model, config.train)?;
    trainer.optimizer = optimizer;
    trainer.epoch = epoch;
    Ok(Checkpoint { config, trainer })
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<Checkpoint<F>> {
    checkpoint_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn run_config() -> RunConfig {
        let mut c = RunConfig::default();
        c.model = ModelConfig {
            parts: c.model.parts.clone(),
            ..ModelConfig::micro()
        };
        c.model.part_feature = 4;
        c.model.rgnn_hidden = 4;
        c
    }

    fn trainer(c: &RunConfig) -> Trainer<f32> {
        let mut t = Trainer::new(SrTsl::new(c.model.clone(), 4).unwrap(), c.train).unwrap();
        t.epoch = 7;
        t.optimizer.step = 70;
        t.model.rng.unit();
        for m in t.optimizer.first.values_mut() {
            m.data_mut()[0] = 0.125;
        }
        t
    }

    #[test]
    fn round_trip_is_exact() {
        let c = run_config();
        let t = trainer(&c);
        let bytes = checkpoint_bytes(&c, &t).unwrap();
        let back = checkpoint_from_bytes::<f32>(&bytes).unwrap();
        assert_eq!(back.config, c);
        assert_eq!(back.trainer.model, t.model);
        assert_eq!(back.trainer.optimizer, t.optimizer);
        assert_eq!(back.trainer.epoch, 7);
        assert_eq!(checkpoint_bytes(&back.config, &back.trainer).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let c = run_config();
        let bytes = checkpoint_bytes(&c, &trainer(&c)).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        let e = checkpoint_from_bytes::<f32>(&bad).unwrap_err().to_string();
        assert!(e.contains("magic") && e.contains("XRTS"), "{e}");

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(checkpoint_from_bytes::<f32>(&bad).unwrap_err().to_string().contains("version"));

        let e = checkpoint_from_bytes::<f32>(&bytes[..bytes.len() - 9]).unwrap_err().to_string();
        assert!(e.contains("truncated"), "{e}");

        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 20] ^= 1;
        assert!(checkpoint_from_bytes::<f32>(&bad).unwrap_err().to_string().contains("checksum"));

        assert!(checkpoint_from_bytes::<f64>(&bytes).is_err());
    }

    #[test]
    fn rejects_config_mismatch() {
        let c = run_config();
        let t = trainer(&c);
        let mut other = c.clone();
        other.model.lstm_hidden = 6;
        // Parameters were built for width 8; a config claiming 6 must not load.
        let bytes = checkpoint_bytes(&other, &t).unwrap();
        let e = checkpoint_from_bytes::<f32>(&bytes).unwrap_err().to_string();
        assert!(e.contains("shape"), "{e}");
    }
}
