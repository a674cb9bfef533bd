//! Minimal NPY v1.0 reader and writer for 2-D little-endian float arrays.
//!
//! Layout: the magic `\x93NUMPY`, version bytes `1 0`, a little-endian
//! `u16` header length, then an ASCII dict such as
//! `{'descr': '<f8', 'fortran_order': False, 'shape': (3, 4), }` padded
//! with spaces and a final `\n` so the preamble is a multiple of 64 bytes.
//! The payload follows in row-major order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NpyError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("malformed NPY data: {0}")]
    Format(String),
}

fn bad<T>(msg: impl Into<String>) -> Result<T, NpyError> {
    Err(NpyError::Format(msg.into()))
}

/// Encodes `a` as NPY bytes.
pub fn to_bytes(a: &Array2<f64>, dtype: Dtype) -> Vec<u8> {
    let (rows, cols) = a.dim();
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({rows}, {cols}), }}",
        dtype.descr()
    );
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let total = unpadded.div_ceil(ALIGN) * ALIGN;
    let header_len = total - MAGIC.len() - 4;

    let mut out = Vec::with_capacity(total + a.len() * dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.resize(total - 1, b' ');
    out.push(b'\n');
    for &v in a.iter() {
        match dtype {
            Dtype::F4 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F8 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn write(path: &Path, a: &Array2<f64>, dtype: Dtype) -> Result<(), NpyError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(a, dtype))?;
    Ok(())
}

struct Header {
    dtype: Dtype,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Value text following `'key':` in the header dict.
fn dict_value<'a>(dict: &'a str, key: &str) -> Result<&'a str, NpyError> {
    let needle = format!("'{key}':");
    match dict.find(&needle) {
        Some(at) => Ok(dict[at + needle.len()..].trim_start()),
        None => bad(format!("header lacks '{key}'")),
    }
}

fn parse_header(dict: &str) -> Result<Header, NpyError> {
    let dict = dict.trim_end();
    if !(dict.starts_with('{') && dict.ends_with('}')) {
        return bad("header is not a dict");
    }
    let descr = dict_value(dict, "descr")?;
    let dtype = if descr.starts_with("'<f8'") {
        Dtype::F8
    } else if descr.starts_with("'<f4'") {
        Dtype::F4
    } else {
        return bad(format!(
            "unsupported dtype {}",
            descr.split(',').next().unwrap_or("")
        ));
    };
    let order = dict_value(dict, "fortran_order")?;
    let fortran_order = if order.starts_with("False") {
        false
    } else if order.starts_with("True") {
        true
    } else {
        return bad("fortran_order is not a boolean");
    };
    let shape = dict_value(dict, "shape")?;
    let close = match (shape.starts_with('('), shape.find(')')) {
        (true, Some(close)) => close,
        _ => return bad("shape is not a tuple"),
    };
    let shape = shape[1..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| NpyError::Format(format!("bad dimension {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Header {
        dtype,
        fortran_order,
        shape,
    })
}

/// Decodes a 2-D `<f4` or `<f8` array.
pub fn from_bytes(bytes: &[u8]) -> Result<Array2<f64>, NpyError> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return bad("missing NPY magic");
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (
            u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
            12,
        ),
        _ => return bad(format!("unsupported NPY version {major}.{minor}")),
    };
    let end = start + header_len;
    if bytes.len() < end {
        return bad("truncated header");
    }
    let dict =
        std::str::from_utf8(&bytes[start..end]).map_err(|_| NpyError::Format("header is not text".into()))?;
    let header = parse_header(dict)?;
    if header.fortran_order {
        return bad("Fortran-ordered arrays are not supported");
    }
    let (rows, cols) = match header.shape[..] {
        [rows, cols] => (rows, cols),
        _ => return bad(format!("expected a 2-D array, got shape {:?}", header.shape)),
    };
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| NpyError::Format("shape overflows".into()))?;
    let payload = &bytes[end..];
    if Some(payload.len()) != count.checked_mul(header.dtype.size()) {
        return bad(format!(
            "payload has {} bytes, shape ({rows}, {cols}) needs {}",
            payload.len(),
            count * header.dtype.size()
        ));
    }
    let values: Vec<f64> = match header.dtype {
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Array2::from_shape_vec((rows, cols), values).map_err(|e| NpyError::Format(e.to_string()))
}

pub fn read(path: &Path) -> Result<Array2<f64>, NpyError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}
