//! Binary model file: magic, header length, JSON header, then `E` and `w` as
//! little-endian `f64`.

use serde::{Deserialize, Serialize};

use super::model::SentimentModel;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HMAXSENT";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "W")]
    vocab_size: usize,
    d: usize,
    n: usize,
    #[serde(rename = "K")]
    depth: usize,
    tau: f64,
    alpha: f64,
    v: f64,
    #[serde(rename = "logAlpha")]
    log_alpha: f64,
}

pub fn model_to_bytes(model: &SentimentModel) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        vocab_size: model.vocab_size(),
        d: model.dim(),
        n: model.review_len(),
        depth: model.depth(),
        tau: model.tau(),
        alpha: model.alpha(),
        v: model.v,
        log_alpha: model.log_alpha,
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * (model.e.len() + model.w.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for x in model.e.iter().chain(&model.w) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], len: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < len {
        return Err(Error::Format(format!("model file truncated in {what}")));
    }
    let (head, tail) = bytes.split_at(len);
    *bytes = tail;
    Ok(head)
}

fn floats(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
}

pub fn model_from_bytes(mut bytes: &[u8]) -> Result<SentimentModel> {
    if take(&mut bytes, 8, "magic")? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8, "header length")?.try_into().expect("8 bytes"));
    let len = usize::try_from(len).map_err(|_| Error::Format("header length overflows".into()))?;
    let h: Header = serde_json::from_slice(take(&mut bytes, len, "header")?)?;
    let e_len = h
        .vocab_size
        .checked_mul(h.d)
        .and_then(|x| x.checked_mul(8))
        .ok_or_else(|| Error::Format("encoder size overflows".into()))?;
    let e = floats(take(&mut bytes, e_len, "encoder")?);
    let w = floats(take(&mut bytes, h.d * 8, "decoder")?);
    if !bytes.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after model", bytes.len())));
    }
    SentimentModel::from_parts(h.vocab_size, h.d, h.n, h.depth, h.tau, e, w, h.v, h.log_alpha)
}
