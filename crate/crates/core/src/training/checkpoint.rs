//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"FRED"
//! version  u32
//! config   u32 byte length, UTF-8 `key = value` text
//! count    u32 number of tensors
//! tensor*  u32 name length, UTF-8 name, u8 dtype (0 f32, 1 f64, 2 u64),
//!          u32 rank, rank x u64 extents, payload
//! crc32    u32 over every preceding byte
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FRED";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U64(Vec<u64>),
}

impl Payload {
    fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::U64(v) => v.len(),
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Payload::F32(_) => 0,
            Payload::F64(_) => 1,
            Payload::U64(_) => 2,
        }
    }

    fn dtype_name(&self) -> &'static str {
        ["f32", "f64", "u64"][self.tag() as usize]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl Entry {
    pub fn dtype(&self) -> &'static str {
        self.payload.dtype_name()
    }
}

fn table_err<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::Checkpoint { section: "tensor table".into(), message: message.into() })
}

/// Ordered named arrays; the body of a checkpoint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorTable {
    entries: Vec<Entry>,
}

impl TensorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], payload: Payload) {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), payload.len(), "extent mismatch for {name}");
        assert!(self.entries.iter().all(|e| e.name != name), "duplicate entry {name}");
        self.entries.push(Entry { name, shape: shape.to_vec(), payload });
    }

    pub fn push_f32(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) {
        self.push(name, shape, Payload::F32(data));
    }

    pub fn push_f64s(&mut self, name: impl Into<String>, data: Vec<f64>) {
        let n = data.len();
        self.push(name, &[n], Payload::F64(data));
    }

    pub fn push_u64s(&mut self, name: impl Into<String>, data: Vec<u64>) {
        let n = data.len();
        self.push(name, &[n], Payload::U64(data));
    }

    pub fn push_rng(&mut self, name: impl Into<String>, rng: &ChaCha8Rng) {
        let seed = rng.get_seed();
        let mut words: Vec<u64> = seed.chunks(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        let pos = rng.get_word_pos();
        words.push(rng.get_stream());
        words.push(pos as u64);
        words.push((pos >> 64) as u64);
        self.push_u64s(name, words);
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        match self.entries.iter().find(|e| e.name == name) {
            Some(e) => Ok(e),
            None => table_err(format!("missing entry {name}")),
        }
    }

    pub fn f32s(&self, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
        let e = self.get(name)?;
        match &e.payload {
            Payload::F32(v) if e.shape == shape => Ok(v.clone()),
            _ => table_err(format!("entry {name} is {} {:?}, expected f32 {:?}", e.dtype(), e.shape, shape)),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<Vec<f64>> {
        match &self.get(name)?.payload {
            Payload::F64(v) => Ok(v.clone()),
            p => table_err(format!("entry {name} is {}, expected f64", p.dtype_name())),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<Vec<u64>> {
        match &self.get(name)?.payload {
            Payload::U64(v) => Ok(v.clone()),
            p => table_err(format!("entry {name} is {}, expected u64", p.dtype_name())),
        }
    }

    pub fn f64_at(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        let v = self.f64s(name)?;
        if v.len() != len {
            return table_err(format!("entry {name} has {} values, expected {len}", v.len()));
        }
        Ok(v)
    }

    pub fn u64_at(&self, name: &str, len: usize) -> Result<Vec<u64>> {
        let v = self.u64s(name)?;
        if v.len() != len {
            return table_err(format!("entry {name} has {} values, expected {len}", v.len()));
        }
        Ok(v)
    }

    pub fn rng(&self, name: &str) -> Result<ChaCha8Rng> {
        let w = self.u64_at(name, 7)?;
        let mut seed = [0u8; 32];
        for (i, word) in w[..4].iter().enumerate() {
            seed[i * 8..][..8].copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(w[4]);
        rng.set_word_pos(((w[6] as u128) << 64) | w[5] as u128);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub config_text: String,
    pub table: TensorTable,
}

impl Checkpoint {
    pub fn new(config_text: String, table: TensorTable) -> Self {
        Self { version: VERSION, config_text, table }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.config_text.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_text.as_bytes());
        out.extend_from_slice(&(self.table.entries.len() as u32).to_le_bytes());
        for e in &self.table.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.payload.tag());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match &e.payload {
                Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Validates magic, version, and checksum before parsing anything else,
    /// so a damaged file never yields a partial checkpoint.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let err = |section: &str, message: String| Error::Checkpoint { section: section.into(), message };
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(err("header", "bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(err("header", format!("unsupported version {version}")));
        }
        if bytes.len() < 12 {
            return Err(err("tensor table", "checksum mismatch".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().unwrap()) {
            return Err(err("tensor table", "checksum mismatch".into()));
        }

        let mut r = Reader { bytes: body, pos: 8 };
        let clen = r.u32("config")? as usize;
        let config_text = String::from_utf8(r.take(clen, "config")?.to_vec())
            .map_err(|_| err("config", "config text is not UTF-8".into()))?;
        let count = r.u32("tensor table")?;
        let mut table = TensorTable::new();
        for _ in 0..count {
            let nlen = r.u32("tensor table")? as usize;
            let name = String::from_utf8(r.take(nlen, "tensor table")?.to_vec())
                .map_err(|_| err("tensor table", "tensor name is not UTF-8".into()))?;
            let tag = r.take(1, "tensor table")?[0];
            let rank = r.u32("tensor table")? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u64("tensor table")? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| err("tensor table", format!("extent overflow in {name}")))?;
            let payload = match tag {
                0 => Payload::F32(r.take(n * 4, "tensor table")?.chunks(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
                1 => Payload::F64(r.take(n * 8, "tensor table")?.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                2 => Payload::U64(r.take(n * 8, "tensor table")?.chunks(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
                t => return Err(err("tensor table", format!("unknown dtype tag {t} for {name}"))),
            };
            if table.entries.iter().any(|e| e.name == name) {
                return Err(err("tensor table", format!("duplicate entry {name}")));
            }
            table.entries.push(Entry { name, shape, payload });
        }
        if r.pos != body.len() {
            return Err(err("trailer", format!("{} unexpected bytes before checksum", body.len() - r.pos)));
        }
        Ok(Self { version, config_text, table })
    }

    /// Writes via a temporary sibling and rename, so readers never observe a
    /// half-written file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.encode())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint { section: section.into(), message: "unexpected end of data".into() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn u64(&mut self, section: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().unwrap()))
    }
}
