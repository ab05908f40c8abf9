//! On-disk formats: binary embedding and codebook files, the trace CSV,
//! plain-point CSV, region JSON and the scatter export. Binary formats are
//! little-endian on every host; see `docs/formats.md` for byte layouts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::model::{Codebook, ConvergenceTrace, FeatureSet, Labels, ProjectionRegion, TraceRecord};
use crate::scalar::Scalar;

pub const EMBEDDING_MAGIC: &[u8; 6] = b"SQEMB1";
pub const CODEBOOK_MAGIC: &[u8; 6] = b"SQCBK1";
pub const TRACE_HEADER: &str = "iteration,objective,step_size,updated_center";

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let remaining = self.bytes.len() - self.offset;
        if remaining < n {
            return Err(FormatError::Truncated {
                offset: self.offset as u64,
                expected: n as u64,
                actual: remaining as u64,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 6]) -> Result<(), FormatError> {
        let found = &self.bytes[..self.bytes.len().min(6)];
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        self.offset = 6;
        Ok(())
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// `count` finite reals read as one block.
    fn reals(&mut self, count: usize) -> Result<Vec<f64>, FormatError> {
        let start = self.offset;
        let bytes = self.take(block_len(count, 8, start)?)?;
        bytes
            .chunks_exact(8)
            .enumerate()
            .map(|(j, b)| {
                let v = f64::from_le_bytes(b.try_into().unwrap());
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(FormatError::NonFinite {
                        offset: (start + 8 * j) as u64,
                    })
                }
            })
            .collect()
    }

    /// `count` labels where `-1` is unlabeled.
    fn labels(&mut self, count: usize, class_count: u32) -> Result<Vec<Option<u32>>, FormatError> {
        let start = self.offset;
        let bytes = self.take(block_len(count, 4, start)?)?;
        bytes
            .chunks_exact(4)
            .enumerate()
            .map(|(j, b)| match i32::from_le_bytes(b.try_into().unwrap()) {
                -1 => Ok(None),
                l if l >= 0 && (l as u32) < class_count => Ok(Some(l as u32)),
                l => Err(FormatError::LabelOutOfRange {
                    offset: (start + 4 * j) as u64,
                    label: l as i64,
                    class_count,
                }),
            })
            .collect()
    }

    fn finish(&self) -> Result<(), FormatError> {
        let extra = self.bytes.len() - self.offset;
        if extra > 0 {
            return Err(FormatError::TrailingData {
                offset: self.offset as u64,
                extra: extra as u64,
            });
        }
        Ok(())
    }
}

fn block_len(count: usize, width: usize, offset: usize) -> Result<usize, FormatError> {
    count.checked_mul(width).ok_or_else(|| {
        FormatError::Header(format!("block of {count} entries at byte {offset} overflows"))
    })
}

fn label_to_i32(label: Option<u32>) -> i32 {
    label.map_or(-1, |l| l as i32)
}

/// Serializes points (as `f64`) and labels. Weights are not stored; readers
/// assume uniform weights.
pub fn encode_embeddings<T: Scalar>(data: &FeatureSet<T>) -> Vec<u8> {
    let labels = data.labels();
    let mut out = Vec::with_capacity(23 + data.points().len() * 8 + data.len() * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(data.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    out.push(labels.is_some() as u8);
    out.extend_from_slice(&labels.map_or(0, Labels::class_count).to_le_bytes());
    for &x in data.points() {
        out.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    if let Some(labels) = labels {
        for &l in labels.values() {
            out.extend_from_slice(&label_to_i32(l).to_le_bytes());
        }
    }
    out
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<FeatureSet<f64>> {
    let mut c = Cursor::new(bytes);
    c.magic(EMBEDDING_MAGIC)?;
    let dim = c.u32()? as usize;
    let count = usize::try_from(c.u64()?)
        .map_err(|_| FormatError::Header("point count exceeds address space".into()))?;
    let flag = c.u8()?;
    let class_count = c.u32()?;
    if flag > 1 {
        return Err(FormatError::Header(format!("label flag {flag} at byte 18 is not 0 or 1")).into());
    }
    if dim == 0 || count == 0 {
        return Err(FormatError::Header(format!("empty embedding set (n = {dim}, I = {count})")).into());
    }
    let values = c.reals(block_len(count, dim, 23)?)?;
    let labels = if flag == 1 {
        Some(c.labels(count, class_count)?)
    } else {
        None
    };
    c.finish()?;
    let data = FeatureSet::new(values, dim)?;
    match labels {
        Some(l) => data.with_labels(Labels::new(l, class_count)?),
        None => Ok(data),
    }
}

pub fn write_embeddings<T: Scalar>(path: impl AsRef<Path>, data: &FeatureSet<T>) -> Result<()> {
    fs::write(path, encode_embeddings(data))?;
    Ok(())
}

/// Reads an embedding file; weights are uniform `1/I`.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<FeatureSet<f64>> {
    decode_embeddings(&fs::read(path)?)
}

/// A codebook together with the optional per-quant class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookFile {
    pub codebook: Codebook<f64>,
    pub quant_labels: Option<Vec<Option<u32>>>,
}

pub fn encode_codebook<T: Scalar>(
    codebook: &Codebook<T>,
    quant_labels: Option<&[Option<u32>]>,
) -> Result<Vec<u8>> {
    if let Some(l) = quant_labels {
        if l.len() != codebook.len() {
            return Err(Error::DimensionMismatch {
                expected: codebook.len(),
                found: l.len(),
            });
        }
    }
    let mut out = Vec::with_capacity(31 + codebook.centers().len() * 8 + codebook.len() * 4);
    out.extend_from_slice(CODEBOOK_MAGIC);
    out.extend_from_slice(&(codebook.len() as u32).to_le_bytes());
    out.extend_from_slice(&(codebook.dim() as u32).to_le_bytes());
    out.extend_from_slice(&codebook.rank().as_f64().to_le_bytes());
    out.extend_from_slice(&codebook.norm_order().as_f64().to_le_bytes());
    for &y in codebook.centers() {
        out.extend_from_slice(&y.as_f64().to_le_bytes());
    }
    out.push(quant_labels.is_some() as u8);
    for &l in quant_labels.unwrap_or_default() {
        out.extend_from_slice(&label_to_i32(l).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_codebook(bytes: &[u8]) -> Result<CodebookFile> {
    let mut c = Cursor::new(bytes);
    c.magic(CODEBOOK_MAGIC)?;
    let k = c.u32()? as usize;
    let dim = c.u32()? as usize;
    let rank = c.f64()?;
    let norm = c.f64()?;
    if k == 0 || dim == 0 {
        return Err(FormatError::Header(format!("empty codebook (K = {k}, n = {dim})")).into());
    }
    let centers = c.reals(block_len(k, dim, 30)?)?;
    let flag_offset = c.offset;
    let quant_labels = match c.u8()? {
        0 => None,
        1 => Some(c.labels(k, u32::MAX)?),
        f => {
            return Err(FormatError::Header(format!(
                "label flag {f} at byte {flag_offset} is not 0 or 1"
            ))
            .into())
        }
    };
    c.finish()?;
    Ok(CodebookFile {
        codebook: Codebook::new(centers, dim, rank, norm)?,
        quant_labels,
    })
}

pub fn write_codebook<T: Scalar>(
    path: impl AsRef<Path>,
    codebook: &Codebook<T>,
    quant_labels: Option<&[Option<u32>]>,
) -> Result<()> {
    fs::write(path, encode_codebook(codebook, quant_labels)?)?;
    Ok(())
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<CodebookFile> {
    decode_codebook(&fs::read(path)?)
}

/// One line per record; reals use the shortest representation that parses
/// back to the same `f64`. Updated centers are `;`-separated.
pub fn encode_trace<T: Scalar>(trace: &ConvergenceTrace<T>) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace.records() {
        let updated: Vec<String> = r.updated.iter().map(usize::to_string).collect();
        writeln!(
            out,
            "{},{},{},{}",
            r.iteration,
            r.objective.as_f64(),
            r.step_size.as_f64(),
            updated.join(";")
        )
        .expect("write to String");
    }
    out
}

/// Parses a trace; the stride is taken from the first two iterations after
/// the initial record, or 1.
pub fn parse_trace(text: &str) -> Result<ConvergenceTrace<f64>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRACE_HEADER => {}
        Some((_, h)) => {
            return Err(FormatError::Parse {
                line: 1,
                message: format!("expected header {TRACE_HEADER:?}, found {h:?}"),
            }
            .into())
        }
        None => {
            return Err(FormatError::Parse {
                line: 1,
                message: "empty trace".into(),
            }
            .into())
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let err = |message: String| FormatError::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())).into());
        }
        let iteration = fields[0]
            .parse::<u64>()
            .map_err(|e| err(format!("iteration: {e}")))?;
        let objective = fields[1]
            .parse::<f64>()
            .map_err(|e| err(format!("objective: {e}")))?;
        let step_size = fields[2]
            .parse::<f64>()
            .map_err(|e| err(format!("step_size: {e}")))?;
        let updated = if fields[3].is_empty() {
            Vec::new()
        } else {
            fields[3]
                .split(';')
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(format!("updated_center: {e}")))?
        };
        records.push((line_no, TraceRecord {
            iteration,
            objective,
            step_size,
            updated,
        }));
    }
    let stride = match records.as_slice() {
        [_, (_, a), (_, b), ..] if b.iteration > a.iteration => b.iteration - a.iteration,
        _ => 1,
    };
    let mut trace = ConvergenceTrace::new(stride);
    for (line, r) in records {
        trace.push(r).map_err(|e| FormatError::Parse {
            line,
            message: e.to_string(),
        })?;
    }
    Ok(trace)
}

pub fn write_trace<T: Scalar>(path: impl AsRef<Path>, trace: &ConvergenceTrace<T>) -> Result<()> {
    fs::write(path, encode_trace(trace))?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<ConvergenceTrace<f64>> {
    parse_trace(&fs::read_to_string(path)?)
}

/// Plain points: one comma-separated point per line. With `label_column`
/// the final column is an integer class id, `-1` for unlabeled, and the
/// class count is `max + 1`. Blank lines and lines starting with `#` are
/// skipped.
pub fn parse_points(text: &str, label_column: bool) -> Result<FeatureSet<f64>> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String| FormatError::Parse {
            line: i + 1,
            message,
        };
        let mut fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if label_column {
            let raw = fields.pop().filter(|_| !fields.is_empty());
            let l = raw
                .ok_or_else(|| err("missing label column".into()))?
                .parse::<i64>()
                .map_err(|e| err(format!("label: {e}")))?;
            labels.push(match l {
                -1 => None,
                l if (0..=i64::from(i32::MAX)).contains(&l) => Some(l as u32),
                l => return Err(err(format!("label {l} is neither -1 nor a class id")).into()),
            });
        }
        let expected = *dim.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(err(format!("expected {expected} coordinates, found {}", fields.len())).into());
        }
        for f in fields {
            let v = f.parse::<f64>().map_err(|e| err(format!("{f:?}: {e}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite coordinate {f:?}")).into());
            }
            values.push(v);
        }
    }
    let dim = dim.ok_or_else(|| FormatError::Parse {
        line: 0,
        message: "no points".into(),
    })?;
    let data = FeatureSet::new(values, dim)?;
    if !label_column {
        return Ok(data);
    }
    let class_count = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    data.with_labels(Labels::new(labels, class_count)?)
}

pub fn encode_points<T: Scalar>(data: &FeatureSet<T>) -> String {
    let mut out = String::new();
    for (i, row) in data.rows().enumerate() {
        let coords: Vec<String> = row.iter().map(|x| x.as_f64().to_string()).collect();
        out.push_str(&coords.join(","));
        if let Some(labels) = data.labels() {
            write!(out, ",{}", label_to_i32(labels.get(i))).expect("write to String");
        }
        out.push('\n');
    }
    out
}

pub fn read_points(path: impl AsRef<Path>, label_column: bool) -> Result<FeatureSet<f64>> {
    parse_points(&fs::read_to_string(path)?, label_column)
}

pub fn write_points<T: Scalar>(path: impl AsRef<Path>, data: &FeatureSet<T>) -> Result<()> {
    fs::write(path, encode_points(data))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BoxSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegionsSpec {
    regions: Vec<BoxSpec>,
}

/// `{"regions": [{"lower": [..], "upper": [..]}, ...]}`.
pub fn parse_regions(text: &str) -> Result<Vec<ProjectionRegion<f64>>> {
    let spec: RegionsSpec = serde_json::from_str(text).map_err(|e| FormatError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    spec.regions
        .into_iter()
        .map(|b| ProjectionRegion::new_box(b.lower, b.upper))
        .collect()
}

pub fn encode_regions(regions: &[ProjectionRegion<f64>]) -> Result<String> {
    let regions = regions
        .iter()
        .map(|r| match r {
            ProjectionRegion::Box { lower, upper } => Ok(BoxSpec {
                lower: lower.clone(),
                upper: upper.clone(),
            }),
            ProjectionRegion::Unbounded => {
                Err(Error::InvalidRegion("unbounded regions cannot be serialized".into()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(serde_json::to_string_pretty(&RegionsSpec { regions }).expect("serializable"))
}

pub fn read_regions(path: impl AsRef<Path>) -> Result<Vec<ProjectionRegion<f64>>> {
    parse_regions(&fs::read_to_string(path)?)
}

/// Points and centers in one CSV for external plotting:
/// `kind,index,label,x0,..,x{n-1}` with `kind` either `point` or `center`
/// and an empty label where none is known.
pub fn encode_scatter<T: Scalar>(
    data: &FeatureSet<T>,
    codebook: &Codebook<T>,
    quant_labels: Option<&[Option<u32>]>,
) -> String {
    let mut out = String::from("kind,index,label");
    for j in 0..data.dim() {
        write!(out, ",x{j}").expect("write to String");
    }
    out.push('\n');
    let mut row = |kind: &str, i: usize, label: Option<u32>, coords: &[T]| {
        write!(out, "{kind},{i},").expect("write to String");
        if let Some(l) = label {
            write!(out, "{l}").expect("write to String");
        }
        for x in coords {
            write!(out, ",{}", x.as_f64()).expect("write to String");
        }
        out.push('\n');
    };
    for (i, x) in data.rows().enumerate() {
        row("point", i, data.label(i), x);
    }
    for (k, y) in codebook.rows().enumerate() {
        row("center", k, quant_labels.and_then(|l| l.get(k).copied().flatten()), y);
    }
    out
}
