//! On-disk artifact formats: corpus store (JSON lines), vocabulary
//! files (piece<TAB>score), EMB1 tensor files, CKPT checkpoints, and
//! metrics logs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use adaptkit::corpus::{Corpus, Document};
use adaptkit::embed_init::{EmbeddingMatrix, VocabPartition};
use adaptkit::model::{build_model, GradTensor, ModelConfig, ModelParams, TensorMut, TensorRef};
use adaptkit::tokenizer::{SubwordModel, SPECIAL_PIECES};
use adaptkit::train::MetricsRecord;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

// ---------------------------------------------------------------- corpus

#[derive(Serialize, Deserialize)]
struct DocRecord {
    id: String,
    text: String,
    source: String,
    byte_len: usize,
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    for doc in corpus.iter() {
        let rec = DocRecord {
            id: doc.id.clone(),
            text: doc.text.clone(),
            source: doc.source.clone(),
            byte_len: doc.byte_len,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(w.flush()?)
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let r = BufReader::new(open(path)?);
    let mut docs = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocRecord = serde_json::from_str(&line).map_err(|e| {
            CliError::Io(format!("{}:{}: bad document record: {e}", path.display(), ln + 1))
        })?;
        docs.push(Document::new(&rec.id, &rec.text, &rec.source));
    }
    Ok(docs.into_iter().collect())
}

// ------------------------------------------------------------ vocabulary

fn escape_piece(p: &str) -> String {
    p.replace('\\', "\\\\")
        .replace('\t', "\\t")
        .replace('\n', "\\n")
        .replace('\r', "\\r")
}

fn unescape_piece(p: &str) -> Result<String> {
    let mut out = String::with_capacity(p.len());
    let mut chars = p.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(CliError::Io(format!(
                    "bad escape \\{} in vocabulary piece",
                    other.map(String::from).unwrap_or_default()
                )))
            }
        }
    }
    Ok(out)
}

/// One `piece<TAB>score` line per id, control pieces first; tab,
/// newline, carriage return, and backslash inside pieces are
/// backslash-escaped. Scores use the shortest round-trip decimal form.
pub fn write_vocab(path: &Path, model: &SubwordModel) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    for p in model.pieces() {
        writeln!(w, "{}\t{}", escape_piece(&p.piece), p.score)?;
    }
    Ok(w.flush()?)
}

pub fn read_vocab(path: &Path) -> Result<SubwordModel> {
    let r = BufReader::new(open(path)?);
    let mut pieces: Vec<(String, f64)> = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (piece, score) = line.split_once('\t').ok_or_else(|| {
            CliError::Io(format!("{}:{}: missing tab", path.display(), ln + 1))
        })?;
        let score: f64 = score.parse().map_err(|e| {
            CliError::Io(format!("{}:{}: bad score: {e}", path.display(), ln + 1))
        })?;
        pieces.push((unescape_piece(piece)?, score));
    }
    if pieces.len() < SPECIAL_PIECES.len()
        || pieces[..4].iter().map(|(p, _)| p.as_str()).ne(SPECIAL_PIECES)
    {
        return Err(CliError::Io(format!(
            "{}: vocabulary must start with the four control pieces",
            path.display()
        )));
    }
    let byte_fallback = pieces.len() > 4 && pieces[4].0 == "<0x00>";
    let regular_start = if byte_fallback { 4 + 256 } else { 4 };
    if pieces.len() < regular_start {
        return Err(CliError::Io(format!(
            "{}: truncated byte-piece block",
            path.display()
        )));
    }
    let regular = pieces.split_off(regular_start);
    Ok(SubwordModel::from_pieces(regular, byte_fallback)?)
}

// ----------------------------------------------------------------- EMB1

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB_VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

/// Write one tensor: magic "EMB1", u32 version, u64 rows, u64 cols,
/// u8 dtype (0 = f32), then little-endian row-major f32 data.
pub fn write_emb(w: &mut impl Write, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    debug_assert_eq!(rows * cols, data.len());
    w.write_all(EMB_MAGIC)?;
    w.write_all(&EMB_VERSION.to_le_bytes())?;
    w.write_all(&(rows as u64).to_le_bytes())?;
    w.write_all(&(cols as u64).to_le_bytes())?;
    w.write_all(&[DTYPE_F32])?;
    for &v in data {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_emb(r: &mut impl Read) -> Result<(usize, usize, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != EMB_MAGIC {
        return Err(CliError::Io("not an EMB1 tensor (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != EMB_VERSION {
        return Err(CliError::Io("unsupported EMB1 version".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let rows = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let cols = u64::from_le_bytes(b8) as usize;
    let mut dt = [0u8; 1];
    r.read_exact(&mut dt)?;
    if dt[0] != DTYPE_F32 {
        return Err(CliError::Io("unsupported EMB1 dtype".into()));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut b4)?;
        data.push(f32::from_le_bytes(b4) as f64);
    }
    Ok((rows, cols, data))
}

pub fn write_matrix(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    write_emb(
        &mut w,
        m.rows(),
        m.cols(),
        m.data.as_slice().expect("row-major"),
    )?;
    Ok(w.flush()?)
}

pub fn read_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    let mut r = BufReader::new(open(path)?);
    let (rows, cols, data) = read_emb(&mut r)?;
    let arr = ndarray::Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(EmbeddingMatrix::new(arr))
}

// ------------------------------------------------------------ checkpoint

pub const CKPT_MAGIC: &[u8; 4] = b"CKPT";
pub const CKPT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CkptMeta {
    cfg: ModelConfig,
    partition: Option<VocabPartition>,
}

/// Checkpoint: magic "CKPT", u32 version, 32-byte config hash, u64
/// step, JSON metadata block, then named tensors in EMB1 encoding
/// (vectors stored as 1×n).
pub fn write_checkpoint(
    path: &Path,
    params: &ModelParams,
    config_hash: &[u8; 32],
    step: u64,
) -> Result<()> {
    if params.lora.is_some() {
        return Err(CliError::step(
            "refusing to checkpoint with unmerged adapters",
        ));
    }
    let mut w = BufWriter::new(create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(config_hash)?;
    w.write_all(&step.to_le_bytes())?;
    let meta = serde_json::to_vec(&CkptMeta {
        cfg: params.cfg.clone(),
        partition: params.partition.clone(),
    })?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;

    let mut tensors: Vec<(String, GradTensor)> = Vec::new();
    params.visit(&mut |name, t| {
        let owned = match t {
            TensorRef::Mat(m) => GradTensor::Mat(m.clone()),
            TensorRef::Vec(v) => GradTensor::Vec(v.clone()),
        };
        tensors.push((name.to_string(), owned));
    });
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in &tensors {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        match t {
            GradTensor::Mat(m) => write_emb(
                &mut w,
                m.nrows(),
                m.ncols(),
                m.as_slice().expect("row-major"),
            )?,
            GradTensor::Vec(v) => {
                write_emb(&mut w, 1, v.len(), v.as_slice().expect("contiguous"))?
            }
        }
    }
    Ok(w.flush()?)
}

pub struct Checkpoint {
    pub params: ModelParams,
    pub config_hash: [u8; 32],
    pub step: u64,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(CliError::Io(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != CKPT_VERSION {
        return Err(CliError::Io("unsupported checkpoint version".into()));
    }
    let mut config_hash = [0u8; 32];
    r.read_exact(&mut config_hash)?;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let step = u64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let meta_len = u64::from_le_bytes(b8) as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let meta: CkptMeta = serde_json::from_slice(&meta)?;

    let mut params = build_model(&meta.cfg, 0).map_err(CliError::from)?;
    params.partition = meta.partition;

    r.read_exact(&mut b4)?;
    let count = u32::from_le_bytes(b4) as usize;
    let mut loaded: std::collections::BTreeMap<String, (usize, usize, Vec<f64>)> =
        Default::default();
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let name_len = u16::from_le_bytes(b2) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| CliError::Io(e.to_string()))?;
        loaded.insert(name, read_emb(&mut r)?);
    }

    let mut missing = Vec::new();
    params.visit_mut(&mut |name, t| match loaded.get(name) {
        None => missing.push(name.to_string()),
        Some((rows, cols, data)) => match t {
            TensorMut::Mat(m) => {
                if m.nrows() == *rows && m.ncols() == *cols {
                    m.assign(
                        &ndarray::Array2::from_shape_vec((*rows, *cols), data.clone()).unwrap(),
                    );
                } else {
                    missing.push(format!("{name} (shape mismatch)"));
                }
            }
            TensorMut::Vec(v) => {
                if *rows == 1 && v.len() == *cols {
                    v.assign(&ndarray::Array1::from_vec(data.clone()));
                } else {
                    missing.push(format!("{name} (shape mismatch)"));
                }
            }
        },
    });
    if !missing.is_empty() {
        return Err(CliError::Io(format!(
            "{}: bad or missing tensors: {missing:?}",
            path.display()
        )));
    }
    Ok(Checkpoint {
        params,
        config_hash,
        step,
    })
}

// -------------------------------------------------------------- metrics

pub fn append_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut w = BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?,
    );
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(w.flush()?)
}

// -------------------------------------------------------------- hashing

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = open(path)?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut f, &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().into()
}

// -------------------------------------------------------------- helpers

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        }
    }
    File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
