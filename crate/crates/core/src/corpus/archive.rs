use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const FBIN_EXTENSION: &str = "fbin";
pub const FTXT_EXTENSION: &str = "ftxt";

const MAGIC: &[u8; 4] = b"FEAT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// On-disk encoding of a feature archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFormat {
    #[serde(alias = "fbin")]
    Binary,
    #[serde(alias = "ftxt")]
    Text,
}

impl FeatureFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FeatureFormat::Binary => FBIN_EXTENSION,
            FeatureFormat::Text => FTXT_EXTENSION,
        }
    }
}

impl std::str::FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "fbin" => Ok(FeatureFormat::Binary),
            "text" | "ftxt" => Ok(FeatureFormat::Text),
            other => Err(Error::Argument(format!("unknown feature format `{other}`"))),
        }
    }
}

/// Row-major matrix of `nframes` frames with `dim` finite values each.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl FrameMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("frame dimension must be positive".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Data(format!(
                "{} values do not form a non-empty matrix with {dim} columns",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at frame {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(FrameMatrix { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != dim {
                return Err(Error::Consistency(format!(
                    "frame {i} has {} values, expected {dim}",
                    r.as_ref().len()
                )));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nframes(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Copy of the rows in `range`; the range must be non-empty and in bounds.
    pub fn slice_rows(&self, range: Range<usize>) -> FrameMatrix {
        assert!(range.start < range.end && range.end <= self.nframes());
        FrameMatrix {
            dim: self.dim,
            data: self.data[range.start * self.dim..range.end * self.dim].to_vec(),
        }
    }

    /// Applies `f` to every value, re-validating finiteness.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<FrameMatrix> {
        FrameMatrix::new(self.dim, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// Immutable set of per-utterance frame matrices sharing one dimension and
/// frame period.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureArchive {
    dim: usize,
    frame_period_us: u32,
    utterances: BTreeMap<String, FrameMatrix>,
}

impl FeatureArchive {
    pub fn new(
        dim: usize,
        frame_period_us: u32,
        utterances: impl IntoIterator<Item = (String, FrameMatrix)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("feature dimension must be positive".into()));
        }
        if frame_period_us == 0 {
            return Err(Error::Data("frame period must be positive".into()));
        }
        let mut map = BTreeMap::new();
        for (utt, m) in utterances {
            if m.dim() != dim {
                return Err(Error::Consistency(format!(
                    "utterance `{utt}` has dim {}, archive dim is {dim}",
                    m.dim()
                )));
            }
            if map.insert(utt.clone(), m).is_some() {
                return Err(Error::Consistency(format!("utterance `{utt}` appears twice")));
            }
        }
        Ok(FeatureArchive {
            dim,
            frame_period_us,
            utterances: map,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_period_us(&self) -> u32 {
        self.frame_period_us
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, utt: &str) -> Option<&FrameMatrix> {
        self.utterances.get(utt)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FrameMatrix)> {
        self.utterances.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.values().map(FrameMatrix::nframes).sum()
    }

    /// Applies `f` to every stored value.
    pub fn map_values(&self, f: impl Fn(f32) -> f32 + Copy) -> Result<FeatureArchive> {
        let utts = self
            .utterances
            .iter()
            .map(|(k, m)| Ok((k.clone(), m.map(f)?)))
            .collect::<Result<Vec<_>>>()?;
        FeatureArchive::new(self.dim, self.frame_period_us, utts)
    }

    /// Writes one file per utterance into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path, format: FeatureFormat) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (utt, m) in &self.utterances {
            let path = dir.join(format!("{utt}.{}", format.extension()));
            let bytes = match format {
                FeatureFormat::Binary => encode_fbin(m, self.frame_period_us),
                FeatureFormat::Text => encode_ftxt(m, self.frame_period_us).into_bytes(),
            };
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

pub fn encode_fbin(m: &FrameMatrix, frame_period_us: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(m.nframes() as u32).to_le_bytes());
    out.extend_from_slice(&frame_period_us.to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes one binary feature file, returning the matrix and frame period.
pub fn decode_fbin(path: &Path, bytes: &[u8]) -> Result<(FrameMatrix, u32)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic, expected `FEAT`"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let dim = word(8) as usize;
    let nframes = word(12) as usize;
    let period = word(16);
    if dim == 0 || nframes == 0 || period == 0 {
        return Err(Error::format(
            path,
            format!("dim={dim}, nframes={nframes}, period_us={period} must all be positive"),
        ));
    }
    let expected = dim * nframes * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = FrameMatrix::new(dim, data).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok((m, period))
}

fn encode_ftxt(m: &FrameMatrix, frame_period_us: u32) -> String {
    let mut out = format!("dim={} period_us={}\n", m.dim(), frame_period_us);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn decode_ftxt(path: &Path, text: &str) -> Result<(FrameMatrix, u32)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))?;
    let mut dim = None;
    let mut period = None;
    for tok in header.split_whitespace() {
        match tok.split_once('=') {
            Some(("dim", v)) => dim = v.parse::<usize>().ok(),
            Some(("period_us", v)) => period = v.parse::<u32>().ok(),
            _ => return Err(Error::row(path, 1, format!("unexpected header token `{tok}`"))),
        }
    }
    let (dim, period) = match (dim, period) {
        (Some(d), Some(p)) if d > 0 && p > 0 => (d, p),
        _ => {
            return Err(Error::row(
                path,
                1,
                "header must be `dim=<D> period_us=<P>` with positive values",
            ))
        }
    };
    let mut data = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f32 = tok
                .parse()
                .map_err(|_| Error::row(path, i + 1, format!("not a number: `{tok}`")))?;
            if !v.is_finite() {
                return Err(Error::row(path, i + 1, format!("non-finite value `{tok}`")));
            }
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(Error::row(
                path,
                i + 1,
                format!("expected {dim} values, found {}", data.len() - before),
            ));
        }
    }
    let m = FrameMatrix::new(dim, data).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((m, period))
}

fn feature_files(path: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_file() && p.extension().and_then(|e| e.to_str()) == Some(ext) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every `*.fbin` (binary) or `*.ftxt` (text) file in `path`.
///
/// `path` may also name a single feature file. Files are decoded in
/// parallel; the utterance id is the file stem.
pub fn load_feature_archive(path: &Path, format: FeatureFormat) -> Result<FeatureArchive> {
    let files = feature_files(path, format.extension())?;
    if files.is_empty() {
        return Err(Error::EmptyArchive(path.to_path_buf()));
    }
    let decoded = files
        .par_iter()
        .map(|p| {
            let utt = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::format(p, "file name is not valid UTF-8"))?
                .to_string();
            let (m, period) = match format {
                FeatureFormat::Binary => {
                    let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                    decode_fbin(p, &bytes)?
                }
                FeatureFormat::Text => {
                    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    decode_ftxt(p, &text)?
                }
            };
            Ok((p.clone(), utt, m, period))
        })
        .collect::<Result<Vec<_>>>()?;

    let (_, _, first, period) = &decoded[0];
    let (dim, period) = (first.dim(), *period);
    for (p, _, m, per) in &decoded {
        if m.dim() != dim {
            return Err(Error::Consistency(format!(
                "{}: dim {} differs from {dim}",
                p.display(),
                m.dim()
            )));
        }
        if *per != period {
            return Err(Error::Consistency(format!(
                "{}: frame period {per} us differs from {period} us",
                p.display()
            )));
        }
    }
    FeatureArchive::new(dim, period, decoded.into_iter().map(|(_, u, m, _)| (u, m)))
}
