//! On-disk containers: a single-file "JSON header + float64 blobs" format
//! shared by basis caches, parameter checkpoints and weight fields, plus the
//! dataset directory layout (`header.json`, `a.bin`, `u.bin`).
//!
//! Blob files start with a little-endian u64 giving the JSON header length,
//! followed by the header bytes, followed by the raw little-endian f64 blobs
//! in the order the header declares. All readers validate declared sizes
//! against the actual input before allocating, so malformed or adversarial
//! files fail with an error instead of aborting.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::reduction::SnapshotTensor;
use crate::train::MappingKind;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Serialize, Deserialize)]
struct BlobFileHeader<H> {
    header: H,
    blobs: Vec<BlobDecl>,
}

#[derive(Serialize, Deserialize)]
struct BlobDecl {
    name: String,
    len: u64,
}

/// Serialize `header` plus named f64 blobs into the single-file format.
pub fn write_blob_bytes<H: Serialize>(header: &H, blobs: &[(&str, &[f64])]) -> Result<Vec<u8>> {
    let decl = BlobFileHeader {
        header,
        blobs: blobs
            .iter()
            .map(|(name, data)| BlobDecl {
                name: name.to_string(),
                len: data.len() as u64,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&decl)?;
    let mut out = Vec::with_capacity(8 + json.len() + blobs.iter().map(|(_, d)| d.len() * 8).sum::<usize>());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, data) in blobs {
        for v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_blob_file<H: Serialize>(
    path: impl AsRef<Path>,
    header: &H,
    blobs: &[(&str, &[f64])],
) -> Result<()> {
    let bytes = write_blob_bytes(header, blobs)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Named f64 blobs in file order.
pub type Blobs = Vec<(String, Vec<f64>)>;

/// Parse the single-file format. Returns the header and the blobs as
/// (name, values) pairs in file order.
pub fn read_blob_bytes<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Blobs)> {
    if bytes.len() < 8 {
        return Err(Error::Container("file shorter than header length field".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let header_len = usize::try_from(header_len)
        .ok()
        .filter(|&l| l <= bytes.len() - 8)
        .ok_or_else(|| Error::Container("declared header length exceeds file size".into()))?;
    let header_bytes = &bytes[8..8 + header_len];
    let decl: BlobFileHeader<H> = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Container(format!("bad header json: {e}")))?;
    let mut rest = &bytes[8 + header_len..];
    let mut blobs = Vec::with_capacity(decl.blobs.len());
    for b in &decl.blobs {
        let n = usize::try_from(b.len)
            .ok()
            .and_then(|n| n.checked_mul(8))
            .filter(|&sz| sz <= rest.len())
            .ok_or_else(|| {
                Error::Container(format!("blob '{}' declares {} values, file too short", b.name, b.len))
            })?;
        let mut data = Vec::with_capacity(n / 8);
        for chunk in rest[..n].chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        blobs.push((b.name.clone(), data));
        rest = &rest[n..];
    }
    if !rest.is_empty() {
        return Err(Error::Container(format!("{} trailing bytes after blobs", rest.len())));
    }
    Ok((decl.header, blobs))
}

pub fn read_blob_file<H: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(H, Blobs)> {
    let bytes = std::fs::read(path)?;
    read_blob_bytes(&bytes)
}

/// Pull a named blob out of the list, enforcing an exact length.
pub fn take_blob(blobs: &mut Blobs, name: &str, expect_len: usize) -> Result<Vec<f64>> {
    let pos = blobs
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Container(format!("missing blob '{name}'")))?;
    let (_, data) = blobs.remove(pos);
    if data.len() != expect_len {
        return Err(Error::Container(format!(
            "blob '{name}' has {} values, expected {expect_len}",
            data.len()
        )));
    }
    Ok(data)
}

/// Channel counts of input and output functions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Channels {
    pub a: usize,
    pub u: usize,
}

/// Dataset directory header (`header.json`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub mapping_kind: MappingKind,
    pub case: String,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub channels: Channels,
    pub dt: f64,
    /// Mesh provenance: checksum of the canonical mesh text.
    pub mesh: MeshProvenance,
    pub grf: Option<serde_json::Value>,
    pub seed: u64,
    #[serde(default)]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshProvenance {
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub checksum: String,
}

/// A labelled operator-learning dataset: input tensor `a`, output tensor `u`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub a: SnapshotTensor,
    pub u: SnapshotTensor,
}

impl DatasetHeader {
    /// (n_x, n_t) extents of the input tensor implied by the mapping kind.
    pub fn a_extent(&self) -> (usize, usize) {
        match self.mapping_kind {
            MappingKind::IncreaseFromSpace => (self.n_x, 1),
            MappingKind::IncreaseFromTime => (1, self.n_t),
            MappingKind::DecreaseToSpace | MappingKind::DecreaseToTime => (self.n_x, self.n_t),
        }
    }

    /// (n_x, n_t) extents of the output tensor implied by the mapping kind.
    pub fn u_extent(&self) -> (usize, usize) {
        match self.mapping_kind {
            MappingKind::IncreaseFromSpace | MappingKind::IncreaseFromTime => (self.n_x, self.n_t),
            MappingKind::DecreaseToSpace => (self.n_x, 1),
            MappingKind::DecreaseToTime => (1, self.n_t),
        }
    }
}

fn read_f64_bin(path: &Path, expect_len: usize) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    let want = expect_len
        .checked_mul(8)
        .ok_or_else(|| Error::Container("tensor size overflows".into()))?;
    if bytes.len() != want {
        return Err(Error::Container(format!(
            "{} is {} bytes, expected {want}",
            path.display(),
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(expect_len);
    for chunk in bytes.chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(data)
}

fn write_f64_bin(path: &Path, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

impl Dataset {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.header)?;
        std::fs::write(dir.join("header.json"), json)?;
        write_f64_bin(&dir.join("a.bin"), self.a.data())?;
        write_f64_bin(&dir.join("u.bin"), self.u.data())?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Dataset> {
        let dir = dir.as_ref();
        let json = std::fs::read_to_string(dir.join("header.json"))?;
        let header = parse_dataset_header(&json)?;
        let (ax, at) = header.a_extent();
        let (ux, ut) = header.u_extent();
        let a_len = checked_tensor_len(header.n_samples, ax, at, header.channels.a)?;
        let u_len = checked_tensor_len(header.n_samples, ux, ut, header.channels.u)?;
        let a_data = read_f64_bin(&dir.join("a.bin"), a_len)?;
        let u_data = read_f64_bin(&dir.join("u.bin"), u_len)?;
        let a = SnapshotTensor::new(a_data, header.n_samples, ax, at, header.channels.a, header.dt)?;
        let u = SnapshotTensor::new(u_data, header.n_samples, ux, ut, header.channels.u, header.dt)?;
        Ok(Dataset { header, a, u })
    }
}

/// Parse and sanity-check a dataset header from JSON text.
pub fn parse_dataset_header(json: &str) -> Result<DatasetHeader> {
    let header: DatasetHeader =
        serde_json::from_str(json).map_err(|e| Error::Container(format!("bad dataset header: {e}")))?;
    if header.schema_version != 1 {
        return Err(Error::Container(format!(
            "unsupported schema_version {}",
            header.schema_version
        )));
    }
    if header.n_samples == 0 || header.n_x == 0 || header.n_t == 0 {
        return Err(Error::Container("dataset extents must be positive".into()));
    }
    if header.channels.a == 0 || header.channels.u == 0 {
        return Err(Error::Container("channel counts must be positive".into()));
    }
    if !(header.dt.is_finite() && header.dt > 0.0) {
        return Err(Error::Container("dt must be finite and positive".into()));
    }
    let (ax, at) = header.a_extent();
    checked_tensor_len(header.n_samples, ax, at, header.channels.a)?;
    let (ux, ut) = header.u_extent();
    checked_tensor_len(header.n_samples, ux, ut, header.channels.u)?;
    Ok(header)
}

fn checked_tensor_len(n: usize, n_x: usize, n_t: usize, c: usize) -> Result<usize> {
    n.checked_mul(n_x)
        .and_then(|v| v.checked_mul(n_t))
        .and_then(|v| v.checked_mul(c))
        .filter(|&v| v <= (1usize << 40))
        .ok_or_else(|| Error::Container("tensor extent overflow".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct ToyHeader {
        kind: String,
        k: usize,
    }

    #[test]
    fn blob_roundtrip() {
        let header = ToyHeader {
            kind: "toy".into(),
            k: 3,
        };
        let a = vec![1.0, -2.5, 3.25];
        let b = vec![0.0; 5];
        let bytes = write_blob_bytes(&header, &[("a", &a), ("b", &b)]).unwrap();
        let (back, mut blobs): (ToyHeader, _) = read_blob_bytes(&bytes).unwrap();
        assert_eq!(back, header);
        assert_eq!(take_blob(&mut blobs, "a", 3).unwrap(), a);
        assert_eq!(take_blob(&mut blobs, "b", 5).unwrap(), b);
    }

    #[test]
    fn blob_rejects_truncation_and_oversize() {
        let header = ToyHeader {
            kind: "toy".into(),
            k: 1,
        };
        let a = vec![1.0; 16];
        let bytes = write_blob_bytes(&header, &[("a", &a)]).unwrap();
        assert!(read_blob_bytes::<ToyHeader>(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_blob_bytes::<ToyHeader>(&bytes[..10]).is_err());
        assert!(read_blob_bytes::<ToyHeader>(&[]).is_err());
        // header length pointing past the end
        let mut corrupt = bytes.clone();
        corrupt[..8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(read_blob_bytes::<ToyHeader>(&corrupt).is_err());
        // trailing junk
        let mut extra = bytes;
        extra.push(0);
        assert!(read_blob_bytes::<ToyHeader>(&extra).is_err());
    }

    #[test]
    fn sha256_known_value() {
        // sha256 of the empty string
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn dataset_header_rejects_bad_extents() {
        let json = r#"{
            "schema_version": 1,
            "mapping_kind": "increase_from_space",
            "case": "heat_ic",
            "N": 0,
            "n_x": 3, "n_t": 2,
            "channels": {"a": 1, "u": 1},
            "dt": 0.1,
            "mesh": {"n_vertices": 3, "n_triangles": 1, "checksum": "x"},
            "grf": null,
            "seed": 0
        }"#;
        assert!(parse_dataset_header(json).is_err());
    }
}
