//! Binary shard container for masked instances.
//!
//! Little-endian layout:
//!
//! ```text
//! header  magic u32 (0x41423234) | version u16 | seq_len u16 | vocab_size u32
//!         | instance_count u64 | seed_fingerprint u64
//! record  true_length u16 | num_masked u16 | input_ids [u16; seq_len]
//!         | mask_positions [u16; num_masked] | labels [u16; num_masked]
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use super::error::{CorpusError, Result};
use super::mask::MaskedInstance;

pub const MAGIC: u32 = 0x4142_3234;
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 28;
pub const SHARD_EXT: &str = "bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub seq_len: u16,
    pub vocab_size: u32,
    pub instance_count: u64,
    pub seed_fingerprint: u64,
}

impl ShardHeader {
    fn encode(&self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..4].copy_from_slice(&MAGIC.to_le_bytes());
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[6..8].copy_from_slice(&self.seq_len.to_le_bytes());
        b[8..12].copy_from_slice(&self.vocab_size.to_le_bytes());
        b[12..20].copy_from_slice(&self.instance_count.to_le_bytes());
        b[20..28].copy_from_slice(&self.seed_fingerprint.to_le_bytes());
        b
    }

    pub fn record_len(&self, num_masked: usize) -> u64 {
        4 + 2 * self.seq_len as u64 + 4 * num_masked as u64
    }
}

/// What a writer needs to know beyond the records themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardSpec {
    pub seq_len: usize,
    pub vocab_size: usize,
    pub seed_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardFile {
    pub path: PathBuf,
    pub header: ShardHeader,
}

pub fn shard_name(index: usize) -> String {
    format!("shard-{index:05}.{SHARD_EXT}")
}

fn to_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| CorpusError::Config(format!("{what} {v} does not fit in u16")))
}

fn encode_record(inst: &MaskedInstance, spec: &ShardSpec, buf: &mut Vec<u8>) -> Result<()> {
    if inst.input_ids.len() != spec.seq_len {
        return Err(CorpusError::Config(format!(
            "instance has {} ids, shard seq_len is {}",
            inst.input_ids.len(),
            spec.seq_len
        )));
    }
    if inst.mask_positions.len() != inst.labels.len() {
        return Err(CorpusError::Config("mask positions and labels differ in length".into()));
    }
    buf.extend_from_slice(&to_u16(inst.true_length, "true_length")?.to_le_bytes());
    buf.extend_from_slice(&to_u16(inst.mask_positions.len(), "num_masked")?.to_le_bytes());
    for &id in inst.input_ids.iter().chain(&inst.mask_positions).chain(&inst.labels) {
        buf.extend_from_slice(&to_u16(id as usize, "token id")?.to_le_bytes());
    }
    Ok(())
}

/// Writes `instances` into `dir` as consecutive shards of at most
/// `shard_size` records. An empty input still produces one (empty) shard.
pub fn write_shards(
    instances: &[MaskedInstance],
    shard_size: usize,
    dir: &Path,
    spec: ShardSpec,
) -> Result<Vec<ShardFile>> {
    if shard_size == 0 {
        return Err(CorpusError::Config("shard_size must be at least 1".into()));
    }
    let seq_len = to_u16(spec.seq_len, "seq_len")?;
    let vocab_size =
        u32::try_from(spec.vocab_size).map_err(|_| CorpusError::Config("vocab_size out of range".into()))?;
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;

    let empty: [MaskedInstance; 0] = [];
    let chunks: Vec<&[MaskedInstance]> = if instances.is_empty() {
        vec![&empty[..]]
    } else {
        instances.chunks(shard_size).collect()
    };
    let mut files = Vec::with_capacity(chunks.len());
    let mut buf = Vec::new();
    for (i, chunk) in chunks.into_iter().enumerate() {
        let path = dir.join(shard_name(i));
        let header = ShardHeader {
            seq_len,
            vocab_size,
            instance_count: chunk.len() as u64,
            seed_fingerprint: spec.seed_fingerprint,
        };
        let file = File::create(&path).map_err(|e| CorpusError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&header.encode()).map_err(|e| CorpusError::io(&path, e))?;
        for inst in chunk {
            if inst.labels.iter().any(|&l| l as usize >= spec.vocab_size)
                || inst.input_ids.iter().any(|&t| t as usize >= spec.vocab_size)
            {
                return Err(CorpusError::Config("token id outside vocabulary".into()));
            }
            buf.clear();
            encode_record(inst, &spec, &mut buf)?;
            w.write_all(&buf).map_err(|e| CorpusError::io(&path, e))?;
        }
        w.flush().map_err(|e| CorpusError::io(&path, e))?;
        files.push(ShardFile { path, header });
    }
    Ok(files)
}

/// Shard files in `dir`, sorted by file name.
pub fn list_shards(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))? {
        let entry = entry.map_err(|e| CorpusError::io(dir, e))?;
        let p = entry.path();
        if p.is_file() && p.extension().and_then(|e| e.to_str()) == Some(SHARD_EXT) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Streaming reader over one shard file.
pub struct ShardReader {
    path: PathBuf,
    reader: BufReader<File>,
    header: ShardHeader,
    offset: u64,
    remaining: u64,
}

impl ShardReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
        let file_len = file.metadata().map_err(|e| CorpusError::io(path, e))?.len();
        let mut reader = BufReader::new(file);
        let mut h = [0u8; HEADER_LEN as usize];
        let fmt = |offset: u64, reason: String| CorpusError::Format {
            path: path.to_path_buf(),
            offset,
            reason,
        };
        read_exact_at(&mut reader, &mut h, path, 0)?;
        let magic = u32::from_le_bytes(h[0..4].try_into().unwrap());
        if magic != MAGIC {
            return Err(fmt(0, format!("bad magic {magic:#010x}")));
        }
        let version = u16::from_le_bytes(h[4..6].try_into().unwrap());
        if version != VERSION {
            return Err(fmt(4, format!("unsupported version {version}")));
        }
        let header = ShardHeader {
            seq_len: u16::from_le_bytes(h[6..8].try_into().unwrap()),
            vocab_size: u32::from_le_bytes(h[8..12].try_into().unwrap()),
            instance_count: u64::from_le_bytes(h[12..20].try_into().unwrap()),
            seed_fingerprint: u64::from_le_bytes(h[20..28].try_into().unwrap()),
        };
        if header.seq_len < 3 {
            return Err(fmt(6, format!("seq_len {} too small", header.seq_len)));
        }
        // Every record is at least 4 + 2*seq_len bytes; reject impossible counts early.
        let min_body = header.instance_count.saturating_mul(header.record_len(0));
        if min_body > file_len - HEADER_LEN {
            return Err(fmt(
                file_len,
                format!(
                    "truncated: {} records need at least {} bytes, file has {}",
                    header.instance_count,
                    min_body + HEADER_LEN,
                    file_len
                ),
            ));
        }
        Ok(Self {
            path: path.to_path_buf(),
            reader,
            header,
            offset: HEADER_LEN,
            remaining: header.instance_count,
        })
    }

    pub fn header(&self) -> ShardHeader {
        self.header
    }

    fn format_err(&self, offset: u64, reason: impl Into<String>) -> CorpusError {
        CorpusError::Format {
            path: self.path.clone(),
            offset,
            reason: reason.into(),
        }
    }

    fn read_u16s(&mut self, n: usize) -> Result<Vec<u32>> {
        let mut bytes = vec![0u8; 2 * n];
        read_exact_at(&mut self.reader, &mut bytes, &self.path, self.offset)?;
        self.offset += bytes.len() as u64;
        Ok(bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as u32)
            .collect())
    }

    fn next_record(&mut self) -> Result<MaskedInstance> {
        let start = self.offset;
        let head = self.read_u16s(2)?;
        let (true_length, num_masked) = (head[0] as usize, head[1] as usize);
        let seq_len = self.header.seq_len as usize;
        if true_length < 3 || true_length > seq_len {
            return Err(self.format_err(start, format!("true_length {true_length} out of range")));
        }
        if num_masked == 0 || num_masked > true_length - 2 {
            return Err(self.format_err(start + 2, format!("num_masked {num_masked} out of range")));
        }
        let input_ids = self.read_u16s(seq_len)?;
        let pos_offset = self.offset;
        let mask_positions = self.read_u16s(num_masked)?;
        let labels = self.read_u16s(num_masked)?;
        let v = self.header.vocab_size;
        if input_ids.iter().chain(&labels).any(|&t| t >= v) {
            return Err(self.format_err(start, "token id outside vocabulary"));
        }
        let ordered = mask_positions.windows(2).all(|w| w[0] < w[1]);
        let in_range = mask_positions
            .iter()
            .all(|&p| p >= 1 && (p as usize) <= true_length - 2);
        if !ordered || !in_range {
            return Err(self.format_err(pos_offset, "mask positions unsorted or out of range"));
        }
        Ok(MaskedInstance {
            input_ids,
            true_length,
            mask_positions,
            labels,
            copy_index: None,
        })
    }

    /// Fails if bytes remain after the declared records.
    fn check_trailing(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.reader.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.format_err(self.offset, "trailing bytes after last record")),
            Err(e) => Err(CorpusError::io(&self.path, e)),
        }
    }
}

impl Iterator for ShardReader {
    type Item = Result<MaskedInstance>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let rec = self.next_record();
        if rec.is_err() {
            self.remaining = 0;
            return Some(rec);
        }
        if self.remaining == 0 {
            if let Err(e) = self.check_trailing() {
                return Some(Err(e));
            }
        }
        Some(rec)
    }
}

fn read_exact_at(r: &mut impl Read, buf: &mut [u8], path: &Path, offset: u64) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            CorpusError::Format {
                path: path.to_path_buf(),
                offset,
                reason: format!("truncated: expected {} more bytes", buf.len()),
            }
        } else {
            CorpusError::io(path, e)
        }
    })
}

/// Streams every record of every shard in `dir`, in file-name order.
pub fn read_shards(dir: &Path) -> Result<impl Iterator<Item = Result<MaskedInstance>>> {
    let paths = list_shards(dir)?;
    if paths.is_empty() {
        return Err(CorpusError::Config(format!("no shards found in {}", dir.display())));
    }
    let mut first: Option<ShardHeader> = None;
    let mut readers = Vec::with_capacity(paths.len());
    for p in &paths {
        let r = ShardReader::open(p)?;
        let h = r.header();
        if let Some(f) = first {
            if (f.seq_len, f.vocab_size, f.seed_fingerprint) != (h.seq_len, h.vocab_size, h.seed_fingerprint) {
                return Err(CorpusError::Format {
                    path: p.clone(),
                    offset: 6,
                    reason: "header disagrees with earlier shards".into(),
                });
            }
        } else {
            first = Some(h);
        }
        readers.push(r);
    }
    Ok(readers.into_iter().flatten())
}

/// Loads a whole shard directory into memory.
pub fn load_shards(dir: &Path) -> Result<(ShardHeader, Vec<MaskedInstance>)> {
    let paths = list_shards(dir)?;
    let first = paths
        .first()
        .ok_or_else(|| CorpusError::Config(format!("no shards found in {}", dir.display())))?;
    let header = ShardReader::open(first)?.header();
    let instances = read_shards(dir)?.collect::<Result<Vec<_>>>()?;
    Ok((
        ShardHeader {
            instance_count: instances.len() as u64,
            ..header
        },
        instances,
    ))
}
