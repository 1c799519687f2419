//! Little-endian binary snapshots: graphs (`MMGF`), encoder weights
//! (`MMGW`) and embedding tables (`MMGE`). Every file ends with a CRC32 of
//! all preceding bytes.

use std::fs;
use std::io;
use std::path::Path;

use mmgraph_core::encoder::{EncoderConfig, EncoderDims, EncoderParams, Model};
use mmgraph_core::index::EmbeddingTable;
use mmgraph_core::matrix::Matrix;
use mmgraph_core::{EdgeKind, MultiModalGraph, NodeId, NodeKind};

pub const GRAPH_MAGIC: [u8; 4] = *b"MMGF";
pub const WEIGHTS_MAGIC: [u8; 4] = *b"MMGW";
pub const EMBEDDINGS_MAGIC: [u8; 4] = *b"MMGE";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("file is truncated")]
    Truncated,
    #[error("{0} trailing bytes before the checksum")]
    TrailingBytes(usize),
    #[error("malformed contents: {0}")]
    Malformed(String),
    #[error(transparent)]
    Core(#[from] mmgraph_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(magic: [u8; 4]) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(&magic);
        w.u32(VERSION);
        w
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn len_u32(&mut self, n: usize) -> Result<()> {
        let n = u32::try_from(n).map_err(|_| FormatError::Malformed(format!("length {n} exceeds u32")))?;
        self.u32(n);
        Ok(())
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

struct Reader<'a> {
    body: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Check the checksum, magic and version, leaving the cursor after them.
    fn open(bytes: &'a [u8], magic: [u8; 4]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(FormatError::Truncated);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(FormatError::ChecksumMismatch { stored, computed });
        }
        let mut r = Self { body, pos: 0 };
        let found: [u8; 4] = r.take(4)?.try_into().unwrap();
        if found != magic {
            return Err(FormatError::BadMagic { expected: magic, found });
        }
        match r.u32()? {
            VERSION => Ok(r),
            v => Err(FormatError::UnsupportedVersion(v)),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.body.len())
            .ok_or(FormatError::Truncated)?;
        let s = &self.body[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    /// Element count checked against the bytes left, so corrupt headers
    /// cannot trigger huge allocations.
    fn count(&mut self, min_elem_bytes: usize) -> Result<usize> {
        let n = self.u64()?;
        let left = (self.body.len() - self.pos) as u64;
        if n.saturating_mul(min_elem_bytes as u64) > left {
            return Err(FormatError::Truncated);
        }
        Ok(n as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(FormatError::Truncated)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn done(&self) -> Result<()> {
        match self.body.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

fn node_kind(v: u8) -> Result<NodeKind> {
    NodeKind::from_u8(v).ok_or_else(|| FormatError::Malformed(format!("unknown node kind {v}")))
}

pub fn encode_graph(g: &MultiModalGraph) -> Result<Vec<u8>> {
    let mut w = Writer::new(GRAPH_MAGIC);
    w.u64(g.node_count() as u64);
    w.len_u32(g.d_in())?;
    for v in g.node_ids() {
        let key = g.key(v)?;
        w.len_u32(key.len())?;
        w.buf.extend_from_slice(key.as_bytes());
        w.u8(g.kind(v)?.as_u8());
        w.f32s(g.feature(v)?);
    }
    w.u64(g.edge_count() as u64);
    for (u, v, kind) in g.edges() {
        w.u64(u.0);
        w.u64(v.0);
        w.u8(kind.as_u8());
    }
    Ok(w.finish())
}

pub fn decode_graph(bytes: &[u8]) -> Result<MultiModalGraph> {
    let mut r = Reader::open(bytes, GRAPH_MAGIC)?;
    let n = r.count(5)?;
    let d_in = r.usize32()?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.usize32()?;
        let key = std::str::from_utf8(r.take(len)?)
            .map_err(|_| FormatError::Malformed("node key is not UTF-8".into()))?
            .to_string();
        let kind = node_kind(r.u8()?)?;
        nodes.push((key, kind, r.f32s(d_in)?));
    }
    let m = r.count(17)?;
    let mut edges = Vec::with_capacity(m);
    let mut prev: Option<(u64, u64)> = None;
    for _ in 0..m {
        let (u, v) = (r.u64()?, r.u64()?);
        let kind = EdgeKind::from_u8(r.u8()?).ok_or_else(|| FormatError::Malformed("unknown edge kind".into()))?;
        if u >= v || prev.is_some_and(|p| p >= (u, v)) {
            return Err(FormatError::Malformed("edges must be sorted with u < v".into()));
        }
        prev = Some((u, v));
        edges.push((NodeId(u), NodeId(v), kind));
    }
    r.done()?;
    Ok(MultiModalGraph::from_parts(d_in, nodes, &edges)?)
}

pub fn encode_model(m: &Model<f32>) -> Result<Vec<u8>> {
    let mut w = Writer::new(WEIGHTS_MAGIC);
    w.f32s(&[m.config.dropout]);
    w.u8(m.config.final_l2_normalize as u8);
    let dims = m.params.dims();
    w.len_u32(dims.input)?;
    w.len_u32(dims.hidden[0])?;
    w.len_u32(dims.hidden[1])?;
    w.len_u32(m.fanouts[0])?;
    w.len_u32(m.fanouts[1])?;
    for mat in m.params.matrices() {
        w.f32s(mat.as_slice());
    }
    Ok(w.finish())
}

pub fn decode_model(bytes: &[u8]) -> Result<Model<f32>> {
    let mut r = Reader::open(bytes, WEIGHTS_MAGIC)?;
    let dropout = r.f32s(1)?[0];
    let final_l2_normalize = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(FormatError::Malformed(format!("bad normalize flag {v}"))),
    };
    let config = EncoderConfig {
        dropout,
        final_l2_normalize,
    };
    config.validate()?;
    let dims = EncoderDims {
        input: r.usize32()?,
        hidden: [r.usize32()?, r.usize32()?],
    };
    let fanouts = [r.usize32()?, r.usize32()?];
    let mut params = EncoderParams::<f32>::zeros(dims);
    for mat in params.matrices_mut() {
        let (rows, cols) = mat.shape();
        *mat = Matrix::from_vec(rows, cols, r.f32s(rows * cols)?).expect("shape matches length");
    }
    r.done()?;
    if !params.is_finite() {
        return Err(FormatError::Malformed("non-finite weight".into()));
    }
    Ok(Model {
        config,
        fanouts,
        params,
    })
}

pub fn encode_embeddings(t: &EmbeddingTable) -> Result<Vec<u8>> {
    let mut w = Writer::new(EMBEDDINGS_MAGIC);
    w.u64(t.len() as u64);
    w.len_u32(t.dim())?;
    for i in 0..t.len() {
        w.u64(t.ids()[i].0);
        w.u8(t.kinds()[i].as_u8());
        w.f32s(t.row(i));
    }
    Ok(w.finish())
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingTable> {
    let mut r = Reader::open(bytes, EMBEDDINGS_MAGIC)?;
    let rows = r.count(9)?;
    let dim = r.usize32()?;
    let mut t = EmbeddingTable::new(dim);
    for _ in 0..rows {
        let id = NodeId(r.u64()?);
        let kind = node_kind(r.u8()?)?;
        t.push(id, kind, &r.f32s(dim)?)?;
    }
    r.done()?;
    Ok(t)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_graph(path: &Path, g: &MultiModalGraph) -> Result<()> {
    write_atomic(path, &encode_graph(g)?)
}

pub fn load_graph(path: &Path) -> Result<MultiModalGraph> {
    decode_graph(&fs::read(path)?)
}

pub fn save_model(path: &Path, m: &Model<f32>) -> Result<()> {
    write_atomic(path, &encode_model(m)?)
}

pub fn load_model(path: &Path) -> Result<Model<f32>> {
    decode_model(&fs::read(path)?)
}

pub fn save_embeddings(path: &Path, t: &EmbeddingTable) -> Result<()> {
    write_atomic(path, &encode_embeddings(t)?)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    decode_embeddings(&fs::read(path)?)
}
