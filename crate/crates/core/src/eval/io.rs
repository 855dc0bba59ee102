//! On-disk formats.
//!
//! Dataset files (`TDK1`): the magic bytes, then little-endian `u32 K`,
//! `u32 dims[K]`, `u64 N`, `u32 C`, `N * prod(dims)` `f64` sample values in
//! storage order (first mode fastest), and `N` `u32` labels.
//!
//! Model files are JSON documents tagged with a format name and version.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::pipeline::Decoder;
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 4] = b"TDK1";
pub const MODEL_FORMAT: &str = "bttda-decoder";
pub const MODEL_VERSION: u32 = 1;

pub fn write_dataset<W: Write>(data: &LabeledDataset, mut w: W) -> Result<()> {
    let dims = data.dims();
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&u32::try_from(dims.len()).map_err(to_format)?.to_le_bytes())?;
    for &d in dims {
        w.write_all(&u32::try_from(d).map_err(to_format)?.to_le_bytes())?;
    }
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    w.write_all(&u32::try_from(data.classes()).map_err(to_format)?.to_le_bytes())?;
    for s in data.samples() {
        for v in s.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for &l in data.labels() {
        w.write_all(&(l as u32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn to_format(e: impl std::fmt::Display) -> Error {
    Error::Format(e.to_string())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated dataset file".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<LabeledDataset> {
    if &read_array::<4>(&mut r)? != DATASET_MAGIC {
        return Err(Error::Format("missing TDK1 header".into()));
    }
    let order = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if order == 0 {
        return Err(Error::Format("tensor order must be positive".into()));
    }
    let dims = (0..order)
        .map(|_| Ok(u32::from_le_bytes(read_array(&mut r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let classes = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let len: usize = dims.iter().product();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let values = (0..len)
            .map(|_| Ok(f64::from_le_bytes(read_array(&mut r)?)))
            .collect::<Result<Vec<_>>>()?;
        samples.push(Tensor::new(dims.clone(), values)?);
    }
    let labels = (0..n)
        .map(|_| Ok(u32::from_le_bytes(read_array(&mut r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    LabeledDataset::new(samples, labels, classes)
}

pub fn save_dataset(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(data, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    decoder: Decoder,
}

pub fn write_model<W: Write>(decoder: &Decoder, w: W) -> Result<()> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        decoder: decoder.clone(),
    };
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<Decoder> {
    let value: serde_json::Value = serde_json::from_reader(r)?;
    match (value.get("format").and_then(|v| v.as_str()), value.get("version").and_then(|v| v.as_u64())) {
        (Some(MODEL_FORMAT), Some(v)) if v == MODEL_VERSION as u64 => {}
        (Some(MODEL_FORMAT), Some(v)) => {
            return Err(Error::Format(format!("unsupported model version {v}")))
        }
        _ => return Err(Error::Format("not a bttda model file".into())),
    }
    let file: ModelFile = serde_json::from_value(value)?;
    Ok(file.decoder)
}

pub fn save_model(decoder: &Decoder, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(decoder, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Decoder> {
    read_model(BufReader::new(File::open(path)?))
}
