//! Document-embedding files.
//!
//! The text file holds one `doc_id<TAB>v1,v2,...` line per document. The
//! binary sidecar (`<path>.bin`) stores the same data losslessly:
//!
//! ```text
//! magic   8 bytes  "SEGCLEMB"
//! version u32 LE   1
//! rows    u64 LE
//! dims    u64 LE
//! rows ×  { id_len u32 LE, id bytes (UTF-8), empty u8, dims × f64 LE }
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::encoder::DocEmbedding;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SEGCLEMB";
pub const BINARY_VERSION: u32 = 1;

pub fn sidecar_path(text_path: &Path) -> PathBuf {
    let mut s = text_path.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

pub fn to_text(embeddings: &[DocEmbedding]) -> String {
    let mut out = String::new();
    for e in embeddings {
        out.push_str(&e.doc_id);
        out.push('\t');
        for (i, v) in e.vector.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Parses the text format. The `empty` flag is not stored there and is
/// reported as `false`.
pub fn from_text(text: &str, origin: &Path) -> Result<Vec<DocEmbedding>> {
    let mut out: Vec<DocEmbedding> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected `doc_id<TAB>values`"))?;
        let vector = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(origin, i + 1, format!("invalid number {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = out.first() {
            if first.vector.len() != vector.len() {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!(
                        "expected {} values, found {}",
                        first.vector.len(),
                        vector.len()
                    ),
                ));
            }
        }
        out.push(DocEmbedding {
            doc_id: id.to_string(),
            vector,
            empty: false,
        });
    }
    Ok(out)
}

pub fn to_binary(embeddings: &[DocEmbedding]) -> Result<Vec<u8>> {
    let dims = embeddings.first().map_or(0, |e| e.vector.len());
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(embeddings.len() as u64).to_le_bytes());
    out.extend_from_slice(&(dims as u64).to_le_bytes());
    for e in embeddings {
        if e.vector.len() != dims {
            return Err(Error::Shape {
                context: "embedding export",
                expected: format!("{dims} values"),
                got: format!("{} values for {}", e.vector.len(), e.doc_id),
            });
        }
        out.extend_from_slice(&(e.doc_id.len() as u32).to_le_bytes());
        out.extend_from_slice(e.doc_id.as_bytes());
        out.push(u8::from(e.empty));
        for v in &e.vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::invalid(
                    "embedding sidecar",
                    format!("{}: truncated at byte {}", self.origin.display(), self.pos),
                )
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn from_binary(bytes: &[u8], origin: &Path) -> Result<Vec<DocEmbedding>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        origin,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::invalid(
            "embedding sidecar",
            format!("{}: bad magic", origin.display()),
        ));
    }
    let version = r.u32()?;
    if version != BINARY_VERSION {
        return Err(Error::Version {
            what: "embedding sidecar",
            found: version,
            expected: BINARY_VERSION,
        });
    }
    let rows = r.u64()? as usize;
    let dims = r.u64()? as usize;
    let mut out = Vec::with_capacity(rows.min(1 << 20));
    for _ in 0..rows {
        let len = r.u32()? as usize;
        let doc_id = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::invalid("embedding sidecar", "document id is not UTF-8"))?
            .to_string();
        let empty = r.take(1)?[0] != 0;
        let vector = (0..dims)
            .map(|_| {
                r.take(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(DocEmbedding {
            doc_id,
            vector,
            empty,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::invalid(
            "embedding sidecar",
            format!("{}: trailing bytes", origin.display()),
        ));
    }
    Ok(out)
}

/// Writes the text file and its binary sidecar.
pub fn save(path: impl AsRef<Path>, embeddings: &[DocEmbedding]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_text(embeddings)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    std::fs::write(&side, to_binary(embeddings)?).map_err(|e| Error::io(&side, e))
}

/// Loads the binary sidecar when present, otherwise the text file.
pub fn load(path: impl AsRef<Path>) -> Result<Vec<DocEmbedding>> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    if side.exists() {
        let bytes = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        return from_binary(&bytes, &side);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}
