//! Parameter checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "TXNCKPT\0"
//! version    u32       1
//! arch_len   u16       followed by arch_len bytes of UTF-8 architecture name
//! input      3 × u32   height, width, channels
//! entries    u32       number of tensors
//! manifest   entries × {
//!              layer     u32   layer index (0-based)
//!              name_len  u16   followed by name_len bytes of UTF-8 tensor name
//!              precision u8    bytes per value: 4 (f32) or 8 (f64)
//!              flags     u8    bit 0 = trainable
//!              rank      u8    followed by rank × u64 extents
//!            }
//! values     for each manifest entry in order, product(extents) values of
//!            the declared precision
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::engine::{Precision, Scalar, Tensor};
use crate::{Error, Result};

use super::params::ParameterStore;
use super::spec::{Architecture, NetworkSpec};

pub const MAGIC: &[u8; 8] = b"TXNCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub layer: u32,
    pub name: String,
    pub precision: Precision,
    pub trainable: bool,
    pub shape: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub architecture: String,
    pub input_shape: [u32; 3],
    pub entries: Vec<ManifestEntry>,
}

pub fn write_checkpoint<T: Scalar, W: Write>(
    mut w: W,
    spec: &NetworkSpec,
    store: &ParameterStore<T>,
) -> Result<()> {
    store.check_layout(spec)?;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let arch = spec.name.as_str().as_bytes();
    w.write_u16::<LittleEndian>(arch.len() as u16)?;
    w.write_all(arch)?;
    for &d in &spec.input_shape {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    let params: Vec<_> = store.iter().collect();
    w.write_u32::<LittleEndian>(params.len() as u32)?;
    for (layer, p) in &params {
        w.write_u32::<LittleEndian>(*layer as u32)?;
        w.write_u16::<LittleEndian>(p.name.len() as u16)?;
        w.write_all(p.name.as_bytes())?;
        w.write_u8(T::PRECISION.byte_width() as u8)?;
        w.write_u8(u8::from(p.trainable))?;
        let shape = p.pair.value.shape();
        w.write_u8(shape.len() as u8)?;
        for &d in shape {
            w.write_u64::<LittleEndian>(d as u64)?;
        }
    }
    for (_, p) in &params {
        for &v in p.pair.value.data() {
            match T::PRECISION {
                Precision::F32 => w.write_f32::<LittleEndian>(v.to_f32().expect("f32 value"))?,
                Precision::F64 => w.write_f64::<LittleEndian>(v.to_f64().expect("f64 value"))?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn read_header<R: Read>(r: &mut R) -> Result<CheckpointHeader> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(corrupt("not a checkpoint file (bad magic)"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let read_string = |r: &mut R| -> Result<String> {
        let len = r.read_u16::<LittleEndian>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| corrupt("name is not UTF-8"))
    };
    let architecture = read_string(r)?;
    let mut input_shape = [0u32; 3];
    for d in &mut input_shape {
        *d = r.read_u32::<LittleEndian>()?;
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let layer = r.read_u32::<LittleEndian>()?;
        let name = read_string(r)?;
        let precision = match r.read_u8()? {
            4 => Precision::F32,
            8 => Precision::F64,
            other => return Err(corrupt(format!("unknown precision width {other}"))),
        };
        let trainable = r.read_u8()? & 1 == 1;
        let rank = r.read_u8()? as usize;
        let shape = (0..rank)
            .map(|_| r.read_u64::<LittleEndian>())
            .collect::<std::io::Result<Vec<_>>>()?;
        entries.push(ManifestEntry {
            layer,
            name,
            precision,
            trainable,
            shape,
        });
    }
    Ok(CheckpointHeader {
        architecture,
        input_shape,
        entries,
    })
}

/// Reads a checkpoint into a store for `spec`, converting precision if needed.
pub fn read_checkpoint<T: Scalar, R: Read>(
    mut r: R,
    spec: &NetworkSpec,
) -> Result<ParameterStore<T>> {
    let header = read_header(&mut r)?;
    let arch: Architecture = header.architecture.parse()?;
    if arch != spec.name {
        return Err(corrupt(format!(
            "checkpoint holds `{arch}`, expected `{}`",
            spec.name
        )));
    }
    let mut store = ParameterStore::<T>::zeros(spec);
    let expected: Vec<(usize, String, Vec<usize>)> = store
        .iter()
        .map(|(l, p)| (l, p.name.clone(), p.pair.value.shape().to_vec()))
        .collect();
    if expected.len() != header.entries.len() {
        return Err(corrupt(format!(
            "{} tensors in file, network needs {}",
            header.entries.len(),
            expected.len()
        )));
    }
    for ((layer, name, shape), entry) in expected.iter().zip(&header.entries) {
        let file_shape: Vec<usize> = entry.shape.iter().map(|&d| d as usize).collect();
        if *layer != entry.layer as usize || *name != entry.name || *shape != file_shape {
            return Err(corrupt(format!(
                "entry {}/{} {:?} does not match network tensor {}/{} {:?}",
                entry.layer, entry.name, file_shape, layer, name, shape
            )));
        }
    }
    for ((layer, name, shape), entry) in expected.iter().zip(&header.entries) {
        let n: usize = shape.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let v = match entry.precision {
                Precision::F32 => r.read_f32::<LittleEndian>()? as f64,
                Precision::F64 => r.read_f64::<LittleEndian>()?,
            };
            values.push(v);
        }
        *store.value_mut(*layer, name)? = Tensor::from_f64(shape, &values)?;
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", rest.len())));
    }
    Ok(store)
}

pub fn save_checkpoint<T: Scalar>(
    path: &std::path::Path,
    spec: &NetworkSpec,
    store: &ParameterStore<T>,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(file), spec, store)
}

pub fn load_checkpoint<T: Scalar>(
    path: &std::path::Path,
    spec: &NetworkSpec,
) -> Result<ParameterStore<T>> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file), spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builders::{build_tcnn, build_tcnn_inception};
    use crate::model::params::init_parameters;

    #[test]
    fn round_trip_both_precisions() {
        let spec = build_tcnn();
        let store = init_parameters::<f32>(&spec, 5);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &spec, &store).unwrap();
        let back: ParameterStore<f32> = read_checkpoint(&buf[..], &spec).unwrap();
        assert_eq!(back, store);

        let wide = init_parameters::<f64>(&spec, 5);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &spec, &wide).unwrap();
        let narrowed: ParameterStore<f32> = read_checkpoint(&buf[..], &spec).unwrap();
        assert_eq!(narrowed, store);
    }

    #[test]
    fn header_layout_is_stable() {
        let spec = build_tcnn();
        let store = init_parameters::<f32>(&spec, 5);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &spec, &store).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..14], &4u16.to_le_bytes());
        assert_eq!(&buf[14..18], b"tcnn");
        assert_eq!(&buf[18..22], &230u32.to_le_bytes());
        assert_eq!(&buf[22..26], &350u32.to_le_bytes());
        assert_eq!(&buf[26..30], &3u32.to_le_bytes());
        assert_eq!(&buf[30..34], &10u32.to_le_bytes());
        // first entry: layer 0 "kernel" f32 trainable rank 4
        assert_eq!(&buf[34..38], &0u32.to_le_bytes());
        assert_eq!(&buf[38..40], &6u16.to_le_bytes());
        assert_eq!(&buf[40..46], b"kernel");
        assert_eq!(&buf[46..49], &[4, 1, 4]);
        let header = read_header(&mut &buf[..]).unwrap();
        let manifest_len: usize = header
            .entries
            .iter()
            .map(|e| 4 + 2 + e.name.len() + 3 + 8 * e.shape.len())
            .sum();
        assert_eq!(buf.len(), 34 + manifest_len + 4 * 11_762);
    }

    #[test]
    fn wrong_architecture_rejected() {
        let spec = build_tcnn();
        let store = init_parameters::<f32>(&spec, 5);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &spec, &store).unwrap();
        assert!(read_checkpoint::<f32, _>(&buf[..], &build_tcnn_inception()).is_err());
    }

    #[test]
    fn truncated_file_rejected() {
        let spec = build_tcnn();
        let store = init_parameters::<f32>(&spec, 5);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &spec, &store).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint::<f32, _>(&buf[..], &spec).is_err());
        assert!(read_checkpoint::<f32, _>(&b"garbage!"[..], &spec).is_err());
    }
}
