//! Self-describing parameter container: magic, version, a JSON header with
//! the config snapshot and tensor layout, then little-endian f32 payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VBCK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: serde_json::Value,
    tensors: Vec<(String, Vec<usize>)>,
}

/// Named parameter groups (e.g. "student", "teacher") with a config snapshot.
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub groups: Vec<(String, ParamStore)>,
}

impl Checkpoint {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut tensors = Vec::new();
        for (group, store) in &self.groups {
            for (n, s) in store.names.iter().zip(&store.shapes) {
                tensors.push((format!("{group}/{n}"), s.clone()));
            }
        }
        let header = serde_json::to_vec(&Header { config: self.config.clone(), tensors })?;
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(MAGIC).map_err(io)?;
        w.write_u32::<LittleEndian>(VERSION).map_err(io)?;
        w.write_u64::<LittleEndian>(header.len() as u64).map_err(io)?;
        w.write_all(&header).map_err(io)?;
        for (_, store) in &self.groups {
            for v in store.values.iter().flatten() {
                w.write_f32::<LittleEndian>(*v).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::MalformedHeader("not a checkpoint file".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != VERSION {
            return Err(Error::MalformedHeader(format!("unsupported checkpoint version {version}")));
        }
        let len = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(io)?;
        let header: Header = serde_json::from_slice(&buf)?;
        let mut groups: Vec<(String, ParamStore)> = Vec::new();
        for (full, shape) in header.tensors {
            let (group, name) = full.split_once('/').ok_or_else(|| Error::MalformedHeader(format!("tensor name {full}")))?;
            if groups.last().is_none_or(|(g, _)| g != group) {
                groups.push((group.to_string(), ParamStore::default()));
            }
            let n: usize = shape.iter().product();
            let mut values = vec![0f32; n];
            r.read_f32_into::<LittleEndian>(&mut values).map_err(io)?;
            let store = &mut groups.last_mut().expect("pushed above").1;
            store.names.push(name.to_string());
            store.shapes.push(shape);
            store.values.push(values);
        }
        Ok(Checkpoint { config: header.config, groups })
    }

    pub fn group(&self, name: &str) -> Option<&ParamStore> {
        self.groups.iter().find(|(g, _)| g == name).map(|(_, s)| s)
    }
}
