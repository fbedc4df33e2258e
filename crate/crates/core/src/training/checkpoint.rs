//! Binary checkpoints.
//!
//! Layout (little-endian): the 8-byte magic `HLTCKPT1`, a `u32` format
//! version, a `u32` entry count, the entries, then an FNV-1a 64-bit checksum
//! of every preceding byte. Each entry is a `u16` name length, the UTF-8
//! name, a one-byte tag and a payload:
//!
//! | tag | payload                                           |
//! |-----|---------------------------------------------------|
//! | 1   | matrix: `u32` rows, `u32` cols, row-major `f64`s  |
//! | 2   | bytes: `u32` length, raw bytes                    |
//! | 3   | `u64`                                             |
//!
//! Entries: `param/<name>` for every model parameter, `velocity/<name>` for
//! every optimizer buffer, `rng/<stream>` (seed, stream, word position),
//! `epoch`, `config` (the `key = value` text) and `records` (JSON).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::EpochRecord;
use super::trainer::Trainer;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 8] = b"HLTCKPT1";
pub const FORMAT_VERSION: u32 = 1;

const TAG_MATRIX: u8 = 1;
const TAG_BYTES: u8 = 2;
const TAG_U64: u8 = 3;

const RNG_STREAMS: [&str; 3] = ["sc", "ce", "views"];

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn bad(field: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::Checkpoint {
        field: field.into(),
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Matrix(Matrix),
    Bytes(Vec<u8>),
    U64(u64),
}

struct Writer {
    buf: Vec<u8>,
    count: u32,
}

impl Writer {
    fn new() -> Self {
        let mut buf = MAGIC.to_vec();
        buf.extend(FORMAT_VERSION.to_le_bytes());
        buf.extend(0u32.to_le_bytes());
        Self { buf, count: 0 }
    }

    fn name(&mut self, name: &str, tag: u8) {
        let len = u16::try_from(name.len()).expect("entry names are short");
        self.buf.extend(len.to_le_bytes());
        self.buf.extend(name.as_bytes());
        self.buf.push(tag);
        self.count += 1;
    }

    fn matrix(&mut self, name: &str, m: &Matrix) {
        self.name(name, TAG_MATRIX);
        self.buf.extend((m.rows() as u32).to_le_bytes());
        self.buf.extend((m.cols() as u32).to_le_bytes());
        for v in m.data() {
            self.buf.extend(v.to_le_bytes());
        }
    }

    fn bytes(&mut self, name: &str, b: &[u8]) {
        self.name(name, TAG_BYTES);
        self.buf.extend((b.len() as u32).to_le_bytes());
        self.buf.extend(b);
    }

    fn u64(&mut self, name: &str, v: u64) {
        self.name(name, TAG_U64);
        self.buf.extend(v.to_le_bytes());
    }

    fn finish(mut self) -> Vec<u8> {
        self.buf[12..16].copy_from_slice(&self.count.to_le_bytes());
        let sum = fnv1a(&self.buf);
        self.buf.extend(sum.to_le_bytes());
        self.buf
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(bad(
                field,
                format!("truncated at byte {} (needed {n} more bytes)", self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }
}

fn encode_rng(rng: &ChaCha8Rng) -> Vec<u8> {
    let mut out = rng.get_seed().to_vec();
    out.extend(rng.get_stream().to_le_bytes());
    out.extend(rng.get_word_pos().to_le_bytes());
    out
}

fn decode_rng(field: &str, bytes: &[u8]) -> Result<ChaCha8Rng> {
    if bytes.len() != 56 {
        return Err(bad(field, format!("expected 56 bytes, got {}", bytes.len())));
    }
    let mut rng = ChaCha8Rng::from_seed(bytes[..32].try_into().unwrap());
    rng.set_stream(u64::from_le_bytes(bytes[32..40].try_into().unwrap()));
    rng.set_word_pos(u128::from_le_bytes(bytes[40..56].try_into().unwrap()));
    Ok(rng)
}

/// Serializes the trainer's full resumable state.
pub fn encode(trainer: &Trainer<'_>) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    for (name, p) in trainer.model.params() {
        w.matrix(&format!("param/{name}"), &p.value);
    }
    for (name, v) in &trainer.optimizer.velocities {
        w.matrix(&format!("velocity/{name}"), v);
    }
    let rngs = [&trainer.sc_rng, &trainer.ce_rng, &trainer.view_rng];
    for (stream, rng) in RNG_STREAMS.iter().zip(rngs) {
        w.bytes(&format!("rng/{stream}"), &encode_rng(rng));
    }
    w.u64("epoch", trainer.epoch as u64);
    w.bytes("config", trainer.cfg.to_kv().as_bytes());
    w.bytes("records", &serde_json::to_vec(&trainer.records)?);
    Ok(w.finish())
}

/// Writes the checkpoint through a temporary file and a rename, so a crash
/// mid-write leaves the previous checkpoint intact.
pub fn save(trainer: &Trainer<'_>, path: &Path) -> Result<()> {
    let bytes = encode(trainer)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Everything read from a checkpoint, validated for internal consistency but
/// not yet applied to a trainer.
#[derive(Debug, Clone)]
pub struct CheckpointState {
    pub params: BTreeMap<String, Matrix>,
    pub velocities: BTreeMap<String, Matrix>,
    pub epoch: usize,
    pub config: String,
    pub records: Vec<EpochRecord>,
    rngs: Vec<ChaCha8Rng>,
}

pub fn decode(bytes: &[u8]) -> Result<CheckpointState> {
    if bytes.len() < 24 {
        return Err(bad("header", format!("file is only {} bytes", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("magic", "not a checkpoint file"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let mut r = Reader { bytes: body, pos: 8 };
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(bad(
            "version",
            format!("format version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if stored != fnv1a(body) {
        return Err(bad("checksum", "checksum mismatch (file truncated or corrupted)"));
    }
    let count = r.u32("entry count")?;

    let mut entries = BTreeMap::new();
    for i in 0..count {
        let field = format!("entry {i}");
        let len = r.u16(&field)? as usize;
        let name = std::str::from_utf8(r.take(len, &field)?)
            .map_err(|_| bad(&field, "name is not UTF-8"))?
            .to_string();
        let tag = r.take(1, &name)?[0];
        let value = match tag {
            TAG_MATRIX => {
                let rows = r.u32(&name)? as usize;
                let cols = r.u32(&name)? as usize;
                let raw = r.take(rows * cols * 8, &name)?;
                let data = raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Value::Matrix(Matrix::new(rows, cols, data).map_err(|e| bad(&name, e.to_string()))?)
            }
            TAG_BYTES => {
                let n = r.u32(&name)? as usize;
                Value::Bytes(r.take(n, &name)?.to_vec())
            }
            TAG_U64 => Value::U64(r.u64(&name)?),
            other => return Err(bad(&name, format!("unknown entry tag {other}"))),
        };
        if entries.insert(name.clone(), value).is_some() {
            return Err(bad(&name, "duplicate entry"));
        }
    }
    if r.pos != body.len() {
        return Err(bad("trailer", format!("{} unexpected bytes", body.len() - r.pos)));
    }

    let mut take_bytes = |name: &str| match entries.remove(name) {
        Some(Value::Bytes(b)) => Ok(b),
        Some(_) => Err(bad(name, "wrong entry type")),
        None => Err(bad(name, "missing")),
    };
    let config = String::from_utf8(take_bytes("config")?).map_err(|_| bad("config", "not UTF-8"))?;
    let records = serde_json::from_slice(&take_bytes("records")?)
        .map_err(|e| bad("records", e.to_string()))?;
    let rngs = RNG_STREAMS
        .iter()
        .map(|s| {
            let name = format!("rng/{s}");
            decode_rng(&name, &take_bytes(&name)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let epoch = match entries.remove("epoch") {
        Some(Value::U64(e)) => e as usize,
        Some(_) => return Err(bad("epoch", "wrong entry type")),
        None => return Err(bad("epoch", "missing")),
    };

    let mut params = BTreeMap::new();
    let mut velocities = BTreeMap::new();
    for (name, value) in entries {
        let Value::Matrix(m) = value else {
            return Err(bad(&name, "wrong entry type"));
        };
        if let Some(p) = name.strip_prefix("param/") {
            params.insert(p.to_string(), m);
        } else if let Some(v) = name.strip_prefix("velocity/") {
            velocities.insert(v.to_string(), m);
        } else {
            return Err(bad(&name, "unknown entry"));
        }
    }
    Ok(CheckpointState {
        params,
        velocities,
        epoch,
        config,
        records,
        rngs,
    })
}

pub fn load(path: &Path) -> Result<CheckpointState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

impl CheckpointState {
    /// Checks every field against `trainer` and only then overwrites its
    /// state. On error the trainer is untouched.
    pub fn apply(self, trainer: &mut Trainer<'_>) -> Result<()> {
        if self.config != trainer.cfg.to_kv() {
            return Err(bad(
                "config",
                "checkpoint was written under a different configuration",
            ));
        }
        if self.epoch > trainer.cfg.epochs || self.records.len() != self.epoch {
            return Err(bad(
                "epoch",
                format!(
                    "epoch {} with {} records does not fit a {}-epoch run",
                    self.epoch,
                    self.records.len(),
                    trainer.cfg.epochs
                ),
            ));
        }
        let current = trainer.model.params();
        if current.len() != self.params.len() {
            return Err(bad(
                "param",
                format!("expected {} tensors, found {}", current.len(), self.params.len()),
            ));
        }
        let mut shapes = BTreeMap::new();
        for (name, p) in &current {
            let field = format!("param/{name}");
            let stored = self.params.get(name).ok_or_else(|| bad(&field, "missing"))?;
            if stored.shape() != p.value.shape() {
                return Err(bad(
                    &field,
                    format!("shape {:?}, model has {:?}", stored.shape(), p.value.shape()),
                ));
            }
            shapes.insert(name.clone(), p.value.shape());
        }
        for (name, v) in &self.velocities {
            let field = format!("velocity/{name}");
            match shapes.get(name) {
                Some(&s) if s == v.shape() => {}
                Some(&s) => {
                    return Err(bad(&field, format!("shape {:?}, expected {s:?}", v.shape())))
                }
                None => return Err(bad(&field, "no such parameter")),
            }
        }

        for (name, p) in trainer.model.params_mut(&crate::model::ParamGroup::ALL) {
            p.value = self.params[&name].clone();
            p.zero_grad();
        }
        trainer.optimizer.velocities = self.velocities;
        let mut rngs = self.rngs.into_iter();
        trainer.sc_rng = rngs.next().unwrap();
        trainer.ce_rng = rngs.next().unwrap();
        trainer.view_rng = rngs.next().unwrap();
        trainer.epoch = self.epoch;
        trainer.records = self.records;
        Ok(())
    }
}
