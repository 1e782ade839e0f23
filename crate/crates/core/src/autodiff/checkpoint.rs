//! Checkpoint container: a length-prefixed JSON manifest followed by raw
//! little-endian f32 payloads. Round-trips are bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CKPT_VERSION: &str = "pg-ckpt-1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the payload section.
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// Free-form metadata: config echo, vocabulary, epoch, optimizer step.
    #[serde(default)]
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f32])> {
        self.tensors
            .get(name)
            .map(|(s, d)| (s.as_slice(), d.as_slice()))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name:?} not present")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }
}

/// Write tensors sorted by name so identical inputs produce identical bytes.
pub fn save(
    path: &Path,
    tensors: &[(String, &[usize], &[f32])],
    meta: serde_json::Value,
) -> Result<()> {
    let mut sorted: Vec<&(String, &[usize], &[f32])> = tensors.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));

    let mut entries = Vec::with_capacity(sorted.len());
    let mut offset = 0u64;
    for (name, shape, data) in &sorted {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: shape.to_vec(),
            dtype: "f32".into(),
            offset,
        });
        offset += (data.len() * 4) as u64;
    }
    let manifest = Manifest { version: CKPT_VERSION.into(), meta, tensors: entries };
    let manifest_bytes = serde_json::to_vec(&manifest)?;

    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&manifest_bytes)?;
    for (_, _, data) in &sorted {
        for v in *data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut len_buf = [0u8; 8];
    reader.read_exact(&mut len_buf)?;
    let manifest_len = u64::from_le_bytes(len_buf) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    reader.read_exact(&mut manifest_bytes)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.version != CKPT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {:?} (expected {CKPT_VERSION:?})",
            manifest.version
        )));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;

    let mut tensors = BTreeMap::new();
    for entry in &manifest.tensors {
        let numel: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + numel * 4;
        if entry.dtype != "f32" {
            return Err(Error::Checkpoint(format!("unsupported dtype {:?}", entry.dtype)));
        }
        if end > payload.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {:?} extends past the payload ({} > {})",
                entry.name,
                end,
                payload.len()
            )));
        }
        let data = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.insert(entry.name.clone(), (entry.shape.clone(), data));
    }
    Ok(Checkpoint { meta: manifest.meta, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgck");
        let a = vec![1.5f32, -0.25, 3.0e-8, 1234.5678];
        let b = vec![f32::MIN_POSITIVE, 0.1 + 0.2];
        save(
            &path,
            &[("b".into(), &[2][..], &b), ("a".into(), &[2, 2][..], &a)],
            serde_json::json!({"epoch": 3}),
        )
        .unwrap();
        let ck = load(&path).unwrap();
        let (shape_a, data_a) = ck.tensor("a").unwrap();
        assert_eq!(shape_a, &[2, 2]);
        for (x, y) in data_a.iter().zip(&a) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let (_, data_b) = ck.tensor("b").unwrap();
        assert_eq!(data_b[0].to_bits(), b[0].to_bits());
        assert_eq!(ck.meta["epoch"], 3);
    }

    #[test]
    fn version_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgck");
        let manifest = serde_json::to_vec(&Manifest {
            version: "pg-ckpt-0".into(),
            meta: serde_json::Value::Null,
            tensors: vec![],
        })
        .unwrap();
        let mut bytes = (manifest.len() as u64).to_le_bytes().to_vec();
        bytes.extend(manifest);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn identical_saves_produce_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.pgck");
        let p2 = dir.path().join("two.pgck");
        let data = vec![0.5f32; 7];
        for p in [&p1, &p2] {
            save(p, &[("w".into(), &[7][..], &data)], serde_json::json!({"seed": 1})).unwrap();
        }
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
