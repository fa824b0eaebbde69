//! Binary checkpoint: config, counters, parameters and optimizer moments.
//!
//! Layout (little endian): magic `b"MLMCKPT\0"`, version u32, the config
//! (dimensions as u64, rates as f64), counters, then for each of params, m
//! and v every tensor as (name length u32, name, element count u64,
//! values f64). A trailing FNV-1a hash over all previous bytes guards
//! against corruption.

use std::path::Path;

use super::config::ModelConfig;
use super::error::ModelError;
use super::params::ModelParams;
use super::trainer::{DataCursor, TrainerState};
use crate::optim::{OptimizerState, Parameters};
use crate::rng::fnv1a;

const MAGIC: &[u8; 8] = b"MLMCKPT\0";
const VERSION: u32 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensors<'a>(out: &mut Vec<u8>, tensors: impl Iterator<Item = (String, &'a [f64])>) {
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        put_u64(out, t.len() as u64);
        for &x in t {
            put_f64(out, x);
        }
    }
}

pub fn encode_checkpoint(cfg: &ModelConfig, state: &TrainerState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        cfg.num_layers,
        cfg.hidden_size,
        cfg.num_heads,
        cfg.ffn_size,
        cfg.vocab_size,
        cfg.seq_len,
    ] {
        put_u64(&mut out, v as u64);
    }
    for v in [cfg.dropout, cfg.attention_dropout, cfg.layer_norm_eps, cfg.init_std] {
        put_f64(&mut out, v);
    }
    put_u64(&mut out, state.step);
    put_u64(&mut out, state.optimizer.t);
    put_u64(&mut out, state.cursor.epoch);
    put_u64(&mut out, state.cursor.position);
    put_u64(&mut out, state.samples_seen);
    put_f64(&mut out, state.elapsed_seconds);
    let names: Vec<String> = state.params.tensors().into_iter().map(|(n, _)| n).collect();
    put_tensors(&mut out, state.params.tensors().into_iter());
    put_tensors(
        &mut out,
        names
            .iter()
            .cloned()
            .zip(state.optimizer.m.iter().map(|v| v.as_slice())),
    );
    put_tensors(
        &mut out,
        names
            .iter()
            .cloned()
            .zip(state.optimizer.v.iter().map(|v| v.as_slice())),
    );
    let h = fnv1a(&out);
    put_u64(&mut out, h);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelError> {
        if self.buf.len() - self.pos < n {
            return Err(ModelError::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensors_into(&mut self, dst: Vec<(String, &mut [f64])>) -> Result<(), ModelError> {
        for (name, t) in dst {
            let len = self.u32()? as usize;
            let got = String::from_utf8_lossy(self.take(len)?).into_owned();
            if got != name {
                return Err(ModelError::Checkpoint(format!(
                    "expected tensor `{name}`, found `{got}`"
                )));
            }
            let n = self.u64()? as usize;
            if n != t.len() {
                return Err(ModelError::Checkpoint(format!(
                    "shape mismatch for `{name}`: checkpoint has {n} values, config needs {}",
                    t.len()
                )));
            }
            for x in t.iter_mut() {
                *x = self.f64()?;
            }
        }
        Ok(())
    }
}

/// Decodes a checkpoint, insisting its shapes match `cfg`.
pub fn decode_checkpoint(bytes: &[u8], cfg: &ModelConfig) -> Result<TrainerState, ModelError> {
    let fail = |m: String| Err(ModelError::Checkpoint(m));
    if bytes.len() < MAGIC.len() + 12 || &bytes[..8] != MAGIC {
        return fail("not a checkpoint (bad magic)".into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return fail("checksum mismatch (corrupt file)".into());
    }
    let mut r = Reader { buf: body, pos: 8 };
    let version = r.u32()?;
    if version != VERSION {
        return fail(format!("unsupported version {version}"));
    }
    let mut dims = [0usize; 6];
    for d in dims.iter_mut() {
        *d = r.u64()? as usize;
    }
    let want = [
        cfg.num_layers,
        cfg.hidden_size,
        cfg.num_heads,
        cfg.ffn_size,
        cfg.vocab_size,
        cfg.seq_len,
    ];
    if dims != want {
        return fail(format!(
            "shape mismatch: checkpoint (layers, hidden, heads, ffn, vocab, seq_len) = {dims:?}, config = {want:?}"
        ));
    }
    for _ in 0..4 {
        r.f64()?;
    }
    let step = r.u64()?;
    let t = r.u64()?;
    let cursor = DataCursor {
        epoch: r.u64()?,
        position: r.u64()?,
    };
    let samples_seen = r.u64()?;
    let elapsed_seconds = r.f64()?;
    let mut params = ModelParams::zeros(cfg);
    r.tensors_into(params.tensors_mut())?;
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let mut optimizer = OptimizerState::zeros_like(&params);
    optimizer.t = t;
    r.tensors_into(
        names
            .iter()
            .cloned()
            .zip(optimizer.m.iter_mut().map(|v| v.as_mut_slice()))
            .collect(),
    )?;
    r.tensors_into(
        names
            .iter()
            .cloned()
            .zip(optimizer.v.iter_mut().map(|v| v.as_mut_slice()))
            .collect(),
    )?;
    if r.pos != body.len() {
        return fail(format!("{} trailing bytes", body.len() - r.pos));
    }
    Ok(TrainerState {
        params,
        optimizer,
        step,
        cursor,
        samples_seen,
        elapsed_seconds,
    })
}

pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, state: &TrainerState) -> Result<(), ModelError> {
    let tmp = path.with_extension("tmp");
    let io = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    std::fs::write(&tmp, encode_checkpoint(cfg, state)).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: &Path, cfg: &ModelConfig) -> Result<TrainerState, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes, cfg)
}
