//! MetaImage (`.mhd` header + `.raw` payload) reading and writing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{Volume, VolumeKind};
use crate::error::{Error, Result};
use crate::kv::KeyValues;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementType {
    Short,
    UShort,
    UChar,
    Float,
}

impl ElementType {
    pub fn size(self) -> usize {
        match self {
            ElementType::UChar => 1,
            ElementType::Short | ElementType::UShort => 2,
            ElementType::Float => 4,
        }
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementType::Short => "MET_SHORT",
            ElementType::UShort => "MET_USHORT",
            ElementType::UChar => "MET_UCHAR",
            ElementType::Float => "MET_FLOAT",
        })
    }
}

impl FromStr for ElementType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "MET_SHORT" => Ok(ElementType::Short),
            "MET_USHORT" => Ok(ElementType::UShort),
            "MET_UCHAR" => Ok(ElementType::UChar),
            "MET_FLOAT" => Ok(ElementType::Float),
            other => Err(format!("unsupported element type {other:?}")),
        }
    }
}

fn triple<T: FromStr>(kv: &KeyValues, key: &str, path: &Path) -> Result<[T; 3]> {
    let raw = kv
        .get(key)
        .ok_or_else(|| Error::parse(path, key, "missing"))?;
    let items: Vec<T> = raw
        .split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| Error::parse(path, key, format!("cannot parse {s:?}")))
        })
        .collect::<Result<_>>()?;
    <[T; 3]>::try_from(items)
        .map_err(|_| Error::parse(path, key, format!("expected 3 values, got {raw:?}")))
}

fn flag(kv: &KeyValues, key: &str, path: &Path) -> Result<Option<bool>> {
    match kv.get(key) {
        None => Ok(None),
        Some(v) => match v.to_ascii_lowercase().as_str() {
            "true" | "1" => Ok(Some(true)),
            "false" | "0" => Ok(Some(false)),
            _ => Err(Error::parse(
                path,
                key,
                format!("expected True or False, got {v:?}"),
            )),
        },
    }
}

/// Reads a 3D MetaImage volume.
///
/// `DimSize` and `ElementSpacing` are given in `(x, y, z)` order and stored as
/// `(d, h, w)` / `(sz, sy, sx)`. The kind is [`VolumeKind::Mask`] when the
/// payload is `MET_UCHAR` and only contains 0 and 1.
pub fn load_mhd(header: impl AsRef<Path>) -> Result<Volume> {
    let path = header.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let kv = KeyValues::parse(&text, path)?;

    let ndims: usize = kv
        .get("NDims")
        .ok_or_else(|| Error::parse(path, "NDims", "missing"))?
        .parse()
        .map_err(|_| Error::parse(path, "NDims", "not an integer"))?;
    if ndims != 3 {
        return Err(Error::parse(
            path,
            "NDims",
            format!("only 3D volumes are supported, got {ndims}"),
        ));
    }
    if flag(&kv, "CompressedData", path)? == Some(true) {
        return Err(Error::parse(
            path,
            "CompressedData",
            "compressed payloads are not supported",
        ));
    }
    let [x, y, z]: [usize; 3] = triple(&kv, "DimSize", path)?;
    let spacing_key = if kv.get("ElementSpacing").is_some() {
        "ElementSpacing"
    } else {
        "ElementSize"
    };
    let [sx, sy, sz]: [f64; 3] = if kv.get(spacing_key).is_some() {
        triple(&kv, spacing_key, path)?
    } else {
        [1.0; 3]
    };
    let et: ElementType = kv
        .get("ElementType")
        .ok_or_else(|| Error::parse(path, "ElementType", "missing"))?
        .parse()
        .map_err(|m: String| Error::parse(path, "ElementType", m))?;
    let msb = match kv.get_any(&["BinaryDataByteOrderMSB", "ElementByteOrderMSB"]) {
        Some((key, _)) => flag(&kv, key, path)?.unwrap_or(false),
        None => false,
    };
    let data_file = kv
        .get("ElementDataFile")
        .ok_or_else(|| Error::parse(path, "ElementDataFile", "missing"))?;
    if data_file.eq_ignore_ascii_case("LOCAL") || data_file.starts_with("LIST") {
        return Err(Error::parse(
            path,
            "ElementDataFile",
            format!("{data_file:?} payloads are not supported"),
        ));
    }
    let raw_path = path.parent().unwrap_or(Path::new(".")).join(data_file);
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let count = x * y * z;
    let expected = count * et.size();
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            "DimSize",
            format!(
                "{x}x{y}x{z} {et} needs {expected} bytes but {} holds {}",
                raw_path.display(),
                bytes.len()
            ),
        ));
    }
    let data: Vec<f32> = match et {
        ElementType::UChar => bytes.iter().map(|&b| b as f32).collect(),
        ElementType::Short => bytes
            .chunks_exact(2)
            .map(|c| {
                let a = [c[0], c[1]];
                (if msb {
                    i16::from_be_bytes(a)
                } else {
                    i16::from_le_bytes(a)
                }) as f32
            })
            .collect(),
        ElementType::UShort => bytes
            .chunks_exact(2)
            .map(|c| {
                let a = [c[0], c[1]];
                (if msb {
                    u16::from_be_bytes(a)
                } else {
                    u16::from_le_bytes(a)
                }) as f32
            })
            .collect(),
        ElementType::Float => bytes
            .chunks_exact(4)
            .map(|c| {
                let a = [c[0], c[1], c[2], c[3]];
                if msb {
                    f32::from_be_bytes(a)
                } else {
                    f32::from_le_bytes(a)
                }
            })
            .collect(),
    };
    let kind = if et == ElementType::UChar && data.iter().all(|&v| v == 0.0 || v == 1.0) {
        VolumeKind::Mask
    } else {
        VolumeKind::Intensity
    };
    Volume::new([z, y, x], [sz, sy, sx], data, kind).map_err(|e| match e {
        Error::Geometry(m) => Error::parse(path, spacing_key, m),
        Error::Shape(m) => Error::parse(path, "DimSize", m),
        other => other,
    })
}

/// Writes `header` and a sibling `.raw` payload, little-endian.
///
/// Masks are written as `MET_UCHAR`, intensities as `MET_FLOAT`. Spacing is
/// printed with round-trip precision so a reload reproduces it exactly.
pub fn save_mhd(header: impl AsRef<Path>, volume: &Volume) -> Result<PathBuf> {
    let path = header.as_ref();
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::config(format!("bad header path {}", path.display())))?;
    let raw_name = format!("{stem}.raw");
    let raw_path = path.with_file_name(&raw_name);
    let [d, h, w] = volume.dims();
    let [sz, sy, sx] = volume.spacing();
    let (et, payload) = match volume.kind() {
        VolumeKind::Mask => (
            ElementType::UChar,
            volume.data().iter().map(|&v| v as u8).collect::<Vec<u8>>(),
        ),
        VolumeKind::Intensity => (
            ElementType::Float,
            volume.data().iter().flat_map(|v| v.to_le_bytes()).collect(),
        ),
    };
    let mut kv = KeyValues::new();
    kv.set("ObjectType", "Image");
    kv.set("NDims", "3");
    kv.set("BinaryData", "True");
    kv.set("BinaryDataByteOrderMSB", "False");
    kv.set("CompressedData", "False");
    kv.set("ElementSpacing", format!("{sx} {sy} {sz}"));
    kv.set("DimSize", format!("{w} {h} {d}"));
    kv.set("ElementType", et.to_string());
    kv.set("ElementDataFile", raw_name);
    fs::write(&raw_path, payload).map_err(|e| Error::io(&raw_path, e))?;
    fs::write(path, kv.render()).map_err(|e| Error::io(path, e))?;
    Ok(raw_path)
}
