//! Minimal NPY (format 1.0 to 3.0) reader and writer for dense C-order arrays.
//!
//! Volumes are written as little-endian `float32`; `float32` and `float64`
//! are accepted on read. A stack's plane positions travel in a JSON sidecar
//! next to the array (`name.npy` → `name.meta.json`).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{MicroscopeConfig, PsfStack};
use crate::zernike::AmplitudeVector;

const MAGIC: &[u8] = b"\x93NUMPY";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// A decoded array: shape plus row-major values widened to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub data: Vec<f64>,
}

fn header_text(dtype: Dtype, shape: &[usize]) -> String {
    let dims = match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        dims
    )
}

/// Encode `data` as NPY 1.0 bytes, stored as little-endian float32.
pub fn encode_f32(shape: &[usize], data: &[f32]) -> Result<Vec<u8>> {
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "shape {shape:?} holds {count} values, got {}",
            data.len()
        )));
    }
    let mut header = header_text(Dtype::F32, shape);
    // magic + version + u16 length + header + '\n' must be a multiple of 64
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Value of `'key': <value>` in a Python dict literal, up to the next top-level comma.
fn dict_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let start = header
        .find(&pat)
        .ok_or_else(|| format_err(format!("NPY header lacks '{key}'")))?
        + pat.len();
    let rest = header[start..].trim_start();
    let mut depth = 0i32;
    for (i, ch) in rest.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' | '}' if depth == 0 => return Ok(rest[..i].trim()),
            _ => {}
        }
    }
    Err(format_err("unterminated NPY header"))
}

pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(format_err("not an NPY file"));
    }
    let (hlen, hstart) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(format_err("truncated NPY header"));
            }
            (u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize, 12)
        }
        v => return Err(format_err(format!("unsupported NPY version {v}"))),
    };
    let body = hstart + hlen;
    let header = bytes
        .get(hstart..body)
        .and_then(|h| std::str::from_utf8(h).ok())
        .ok_or_else(|| format_err("truncated NPY header"))?;

    let dtype = match dict_value(header, "descr")?.trim_matches(|c| c == '\'' || c == '"') {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        other => return Err(format_err(format!("unsupported dtype {other}"))),
    };
    if dict_value(header, "fortran_order")? != "False" {
        return Err(format_err("Fortran-order arrays are not supported"));
    }
    let shape: Vec<usize> = dict_value(header, "shape")?
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format_err(format!("bad shape entry {s:?}"))))
        .collect::<Result<_>>()?;
    let count: usize = shape.iter().product();
    let raw = &bytes[body..];
    if raw.len() != count * dtype.size() {
        return Err(format_err(format!(
            "expected {} data bytes, found {}",
            count * dtype.size(),
            raw.len()
        )));
    }
    let data = match dtype {
        Dtype::F32 => raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(NpyArray { shape, dtype, data })
}

pub fn write_f32(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let bytes = encode_f32(shape, data)?;
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<NpyArray> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Sidecar metadata stored next to a volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackMeta {
    pub z_offsets_um: Vec<f64>,
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<MicroscopeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<AmplitudeVector>,
}

/// `dir/name.npy` → `dir/name.meta.json`.
pub fn meta_path(npy: &Path) -> PathBuf {
    npy.with_extension("meta.json")
}

/// Round a stack to the stored precision, as a write/read cycle would.
pub fn quantize(stack: &PsfStack) -> PsfStack {
    let mut out = stack.clone();
    out.data.mapv_inplace(|v| v as f32 as f64);
    out
}

/// Write a stack as float32 NPY, plus its sidecar when `meta` is given.
pub fn write_stack(path: &Path, stack: &PsfStack, meta: Option<&StackMeta>) -> Result<()> {
    let data: Vec<f32> = stack.data.iter().map(|&v| v as f32).collect();
    write_f32(path, &[stack.nz(), stack.ny(), stack.nx()], &data)?;
    if let Some(meta) = meta {
        fs::write(meta_path(path), serde_json::to_string_pretty(meta)?)?;
    }
    Ok(())
}

/// Read a 3D stack. Plane positions come from the sidecar when present,
/// otherwise from `config`.
pub fn read_stack(path: &Path, config: Option<&MicroscopeConfig>) -> Result<PsfStack> {
    let arr = read(path)?;
    let [nz, ny, nx] = arr.shape[..] else {
        return Err(Error::DimensionMismatch(format!(
            "expected a 3D volume, got shape {:?}",
            arr.shape
        )));
    };
    let data = Array3::from_shape_vec((nz, ny, nx), arr.data).expect("size checked on decode");
    let side = meta_path(path);
    let (zs, digest) = if side.exists() {
        let meta: StackMeta = serde_json::from_str(&fs::read_to_string(&side)?)?;
        (meta.z_offsets_um, meta.config_digest)
    } else if let Some(c) = config {
        if c.nz != nz {
            return Err(Error::DimensionMismatch(format!(
                "volume has {nz} planes, config expects {}",
                c.nz
            )));
        }
        (c.z_offsets(), c.digest())
    } else {
        return Err(invalid_meta(&side));
    };
    PsfStack::new(data, zs, digest)
}

fn invalid_meta(side: &Path) -> Error {
    Error::InvalidArgument(format!(
        "no sidecar {} and no config to infer plane positions",
        side.display()
    ))
}
