use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("bad magic {0:?}, expected \"EMB1\"")]
    BadMagic([u8; 4]),
    #[error("vector {id:?} has {got} components, table dim is {dim}")]
    DimensionMismatch { id: String, dim: usize, got: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("file truncated while reading {0}")]
    TruncatedFile(String),
    #[error("id {0:?} is not valid UTF-8 or longer than 65535 bytes")]
    BadId(String),
    #[error("vector {0:?} has a non-finite component")]
    NonFinite(String),
    #[error(transparent)]
    Io(std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    VideoSpan,
}

/// Immutable id → vector map with a fixed dimension. Insertion order is
/// preserved so a written table is byte-stable.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    modality: Modality,
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(modality: Modality, dim: usize) -> Self {
        Self {
            modality,
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<(), EmbeddingError> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                id,
                dim: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite(id));
        }
        if id.len() > u16::MAX as usize {
            return Err(EmbeddingError::BadId(id));
        }
        if self.index.contains_key(&id) {
            return Err(EmbeddingError::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// The vector widened to `f64`.
    pub fn get_f64(&self, id: &str) -> Option<Vec<f64>> {
        self.get(id).map(|v| v.iter().map(|&x| x as f64).collect())
    }

    pub fn write(&self, mut w: impl Write) -> Result<(), EmbeddingError> {
        let io = EmbeddingError::Io;
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(self.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        for (i, id) in self.ids.iter().enumerate() {
            w.write_all(&(id.len() as u16).to_le_bytes()).map_err(io)?;
            w.write_all(id.as_bytes()).map_err(io)?;
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read(mut r: impl Read, modality: Modality) -> Result<Self, EmbeddingError> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(EmbeddingError::BadMagic(magic));
        }
        let mut word = [0u8; 4];
        read_exact(&mut r, &mut word, "count")?;
        let count = u32::from_le_bytes(word) as usize;
        read_exact(&mut r, &mut word, "dim")?;
        let dim = u32::from_le_bytes(word) as usize;

        let mut table = Self::new(modality, dim);
        let mut row = vec![0u8; dim * 4];
        let mut vector = vec![0f32; dim];
        for i in 0..count {
            let mut len = [0u8; 2];
            read_exact(&mut r, &mut len, &format!("record {i} id length"))?;
            let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(&mut r, &mut id, &format!("record {i} id"))?;
            let id = String::from_utf8(id).map_err(|e| EmbeddingError::BadId(String::from_utf8_lossy(e.as_bytes()).into()))?;
            read_exact(&mut r, &mut row, &format!("vector {id:?}"))?;
            for (v, chunk) in vector.iter_mut().zip(row.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            }
            table.insert(id, &vector)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path, modality: Modality) -> Result<Self, EmbeddingError> {
        let file = std::fs::File::open(path).map_err(EmbeddingError::Io)?;
        Self::read(std::io::BufReader::new(file), modality)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let file = std::fs::File::create(path).map_err(EmbeddingError::Io)?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w)?;
        w.flush().map_err(EmbeddingError::Io)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<(), EmbeddingError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => EmbeddingError::TruncatedFile(what.to_string()),
        _ => EmbeddingError::Io(e),
    })
}
