//! `MCGN` container: magic, version, JSON metadata, then a named tensor table.

use std::io::{ErrorKind, Read, Write};

use crate::backend::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MCGN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes a container; `meta` gains a `tensor_count` entry.
pub fn write_container<W: Write>(w: &mut W, meta: &serde_json::Value, tensors: &[(String, &Tensor<f32>)]) -> Result<()> {
    let mut meta = meta.clone();
    if let Some(obj) = meta.as_object_mut() {
        obj.insert("tensor_count".into(), tensors.len().into());
    } else {
        return Err(Error::Format("checkpoint metadata must be a JSON object".into()));
    }
    let meta_bytes = serde_json::to_vec(&meta)?;
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(meta_bytes.len()).map_err(|_| Error::Format("metadata too large".into()))?.to_le_bytes())?;
    w.write_all(&meta_bytes)?;
    for (name, t) in tensors {
        let name_len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("tensor name too long: {name}")))?;
        let rank = u8::try_from(t.rank()).map_err(|_| Error::Format(format!("tensor `{name}` rank too large")))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: impl FnOnce() -> String) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Truncated(what())
        } else {
            Error::Io(e)
        }
    })
}

/// Reads a container written by [`write_container`].
pub fn read_container<R: Read>(r: &mut R) -> Result<(serde_json::Value, Vec<(String, Tensor<f32>)>)> {
    let mut magic = [0u8; 4];
    read_exact_or(r, &mut magic, || "header magic".into())?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(&CHECKPOINT_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let mut word = [0u8; 4];
    read_exact_or(r, &mut word, || "format version".into())?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    read_exact_or(r, &mut word, || "metadata length".into())?;
    let mut meta_bytes = vec![0u8; u32::from_le_bytes(word) as usize];
    read_exact_or(r, &mut meta_bytes, || "metadata".into())?;
    let meta: serde_json::Value = serde_json::from_slice(&meta_bytes)?;
    let count = meta
        .get("tensor_count")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Format("metadata lacks tensor_count".into()))? as usize;
    let mut tensors = Vec::with_capacity(count);
    for i in 0..count {
        let at = || format!("tensor table entry {i} of {count}");
        let mut len = [0u8; 2];
        read_exact_or(r, &mut len, at)?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or(r, &mut name, at)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format(format!("tensor {i} name is not UTF-8")))?;
        let mut rank = [0u8; 1];
        read_exact_or(r, &mut rank, at)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut d = [0u8; 8];
            read_exact_or(r, &mut d, at)?;
            shape.push(u64::from_le_bytes(d) as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        read_exact_or(r, &mut raw, || format!("values of tensor `{name}`"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok((meta, tensors))
}
