//! Volume file formats.
//!
//! **MetaImage** (`.mha` with the payload after the header, or `.mhd` with a
//! sibling `.raw`). The writer emits these keys, in this order:
//!
//! ```text
//! ObjectType = Image
//! NDims = 3
//! BinaryData = True
//! BinaryDataByteOrderMSB = False
//! CompressedData = False
//! ElementSpacing = sx sy sz
//! DimSize = W H D
//! ElementType = MET_DOUBLE
//! ElementDataFile = LOCAL
//! ```
//!
//! Spacing and sizes are listed x first, as MetaImage does; in memory they
//! are `(z, y, x)`. Payloads are little-endian. The reader accepts
//! `MET_FLOAT`, `MET_DOUBLE`, `MET_UCHAR` and `MET_SHORT`; a `MET_UCHAR` file
//! whose values are all 0 or 1 loads as a [`BinaryMask`].
//!
//! **Raw + JSON**: `name.raw` holds little-endian `f64` values in C order and
//! `name.json` holds `{"shape": [D, H, W], "spacing": [sz, sy, sx], "kind":
//! "image" | "mask"}`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    Float,
    Double,
    UChar,
    Short,
}

impl ElementType {
    pub fn met_name(self) -> &'static str {
        match self {
            ElementType::Float => "MET_FLOAT",
            ElementType::Double => "MET_DOUBLE",
            ElementType::UChar => "MET_UCHAR",
            ElementType::Short => "MET_SHORT",
        }
    }

    fn from_met_name(s: &str) -> Option<Self> {
        match s {
            "MET_FLOAT" => Some(ElementType::Float),
            "MET_DOUBLE" => Some(ElementType::Double),
            "MET_UCHAR" => Some(ElementType::UChar),
            "MET_SHORT" => Some(ElementType::Short),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::Float => 4,
            ElementType::Double => 8,
            ElementType::UChar => 1,
            ElementType::Short => 2,
        }
    }
}

impl std::str::FromStr for ElementType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "float" | "f32" | "met_float" => Ok(ElementType::Float),
            "double" | "f64" | "met_double" => Ok(ElementType::Double),
            "uchar" | "u8" | "met_uchar" => Ok(ElementType::UChar),
            "short" | "i16" | "met_short" => Ok(ElementType::Short),
            other => Err(Error::Config(format!("unknown element type '{other}'"))),
        }
    }
}

/// What a reader produced.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedVolume {
    Image(Volume),
    Mask(BinaryMask),
}

impl LoadedVolume {
    /// Masks become 0/1 images.
    pub fn into_volume(self) -> Volume {
        match self {
            LoadedVolume::Image(v) => v,
            LoadedVolume::Mask(m) => m.to_volume(),
        }
    }

    /// Images convert only if every value is 0 or 1.
    pub fn into_mask(self) -> Result<BinaryMask> {
        match self {
            LoadedVolume::Image(v) => BinaryMask::from_volume(&v),
            LoadedVolume::Mask(m) => Ok(m),
        }
    }
}

/// Parsed MetaImage header.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaHeader {
    pub dim_size_xyz: [usize; 3],
    pub spacing_xyz: [f64; 3],
    pub element_type: ElementType,
    pub data_file: String,
}

/// Header keys that carry no information this reader needs.
const IGNORED_KEYS: &[&str] = &[
    "Comment",
    "ObjectSubType",
    "TransformType",
    "Name",
    "ID",
    "ParentID",
    "Offset",
    "Origin",
    "Position",
    "TransformMatrix",
    "Rotation",
    "Orientation",
    "CenterOfRotation",
    "AnatomicalOrientation",
    "ElementSize",
    "Modality",
];

fn parse_list<T: std::str::FromStr>(path: &Path, key: &str, value: &str) -> Result<[T; 3]> {
    let items: Vec<T> = value
        .split_whitespace()
        .map(|t| t.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::corrupt(path, format!("cannot parse {key} = {value}")))?;
    items
        .try_into()
        .map_err(|_| Error::corrupt(path, format!("{key} needs three values, got '{value}'")))
}

fn is_true(value: &str) -> bool {
    value.eq_ignore_ascii_case("true")
}

/// Parses header lines up to and including `ElementDataFile`. Returns the
/// header and the byte offset where the header ends.
fn parse_header(path: &Path, bytes: &[u8]) -> Result<(MetaHeader, usize)> {
    let mut dims = None;
    let mut spacing = None;
    let mut element = None;
    let mut pos = 0;
    loop {
        let rest = &bytes[pos..];
        let line_end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::corrupt(path, "header ended before ElementDataFile"))?;
        let line = std::str::from_utf8(&rest[..line_end])
            .map_err(|_| Error::corrupt(path, "header is not valid UTF-8"))?
            .trim_end_matches('\r');
        pos += line_end + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::corrupt(path, format!("malformed header line '{line}'")))?;
        match key {
            "ObjectType" if value != "Image" => {
                return Err(Error::unsupported(path, format!("ObjectType = {value}")));
            }
            "NDims" if value != "3" => {
                return Err(Error::unsupported(path, format!("NDims = {value}")));
            }
            "ObjectType" | "NDims" => {}
            "BinaryData" if !is_true(value) => {
                return Err(Error::unsupported(path, "ASCII payloads are not supported"));
            }
            "BinaryData" => {}
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" if is_true(value) => {
                return Err(Error::unsupported(path, "big-endian payloads are not supported"));
            }
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" => {}
            "CompressedData" if is_true(value) => {
                return Err(Error::unsupported(path, "compressed payloads are not supported"));
            }
            "CompressedData" | "CompressedDataSize" => {}
            "HeaderSize" if value != "0" => {
                return Err(Error::unsupported(path, format!("HeaderSize = {value}")));
            }
            "HeaderSize" => {}
            "ElementNumberOfChannels" if value != "1" => {
                return Err(Error::unsupported(path, "multi-channel images are not supported"));
            }
            "ElementNumberOfChannels" => {}
            "DimSize" => dims = Some(parse_list::<usize>(path, key, value)?),
            "ElementSpacing" => spacing = Some(parse_list::<f64>(path, key, value)?),
            "ElementType" => {
                element = Some(ElementType::from_met_name(value).ok_or_else(|| {
                    Error::unsupported(path, format!("ElementType = {value}"))
                })?)
            }
            "ElementDataFile" => {
                let dim_size_xyz =
                    dims.ok_or_else(|| Error::corrupt(path, "missing DimSize"))?;
                let element_type =
                    element.ok_or_else(|| Error::corrupt(path, "missing ElementType"))?;
                let header = MetaHeader {
                    dim_size_xyz,
                    spacing_xyz: spacing.unwrap_or([1.0; 3]),
                    element_type,
                    data_file: value.to_string(),
                };
                return Ok((header, pos));
            }
            k if IGNORED_KEYS.contains(&k) => {}
            other => log::warn!("{}: skipping unknown header key '{other}'", path.display()),
        }
    }
}

fn decode(path: &Path, payload: &[u8], element: ElementType) -> Vec<f64> {
    let _ = path;
    match element {
        ElementType::Double => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        ElementType::Float => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        ElementType::Short => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        ElementType::UChar => payload.iter().map(|&b| b as f64).collect(),
    }
}

fn encode(values: &[f64], element: ElementType) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(values.len() * element.size());
    for &v in values {
        match element {
            ElementType::Double => out.extend_from_slice(&v.to_le_bytes()),
            ElementType::Float => {
                if v.is_finite() && v.abs() > f32::MAX as f64 {
                    return Err(Error::Range(format!("{v} overflows MET_FLOAT")));
                }
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
            ElementType::Short => {
                let r = v.round();
                if !(r >= i16::MIN as f64 && r <= i16::MAX as f64) {
                    return Err(Error::Range(format!("{v} does not fit MET_SHORT")));
                }
                out.extend_from_slice(&(r as i16).to_le_bytes());
            }
            ElementType::UChar => {
                let r = v.round();
                if !(0.0..=255.0).contains(&r) {
                    return Err(Error::Range(format!("{v} does not fit MET_UCHAR")));
                }
                out.push(r as u8);
            }
        }
    }
    Ok(out)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_mhd(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("mhd"))
}

pub fn read_mha(path: impl AsRef<Path>) -> Result<LoadedVolume> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (header, end) = parse_header(path, &bytes)?;
    let sibling;
    let payload: &[u8] = if header.data_file == "LOCAL" {
        &bytes[end..]
    } else {
        let raw_path = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&header.data_file);
        sibling = read_bytes(&raw_path)?;
        &sibling
    };
    let [w, h, d] = header.dim_size_xyz;
    let count = w * h * d;
    let expected = count * header.element_type.size();
    if payload.len() != expected {
        return Err(Error::corrupt(
            path,
            format!(
                "DimSize {w}x{h}x{d} of {} needs {expected} payload bytes, found {}",
                header.element_type.met_name(),
                payload.len()
            ),
        ));
    }
    let values = decode(path, payload, header.element_type);
    let [sx, sy, sz] = header.spacing_xyz;
    let shape = [d, h, w];
    let spacing = [sz, sy, sx];
    let geometry_err = |e: Error| Error::corrupt(path, e.to_string());
    if header.element_type == ElementType::UChar && values.iter().all(|&v| v == 0.0 || v == 1.0) {
        let mask = BinaryMask::new(values.iter().map(|&v| v == 1.0).collect(), shape, spacing)
            .map_err(geometry_err)?;
        return Ok(LoadedVolume::Mask(mask));
    }
    let v = Volume::new(values, shape, spacing).map_err(geometry_err)?;
    Ok(LoadedVolume::Image(v))
}

fn header_text(v: &Volume, element: ElementType, data_file: &str) -> String {
    let [d, h, w] = v.shape();
    let [sz, sy, sx] = v.spacing();
    let mut s = String::new();
    let _ = writeln!(s, "ObjectType = Image");
    let _ = writeln!(s, "NDims = 3");
    let _ = writeln!(s, "BinaryData = True");
    let _ = writeln!(s, "BinaryDataByteOrderMSB = False");
    let _ = writeln!(s, "CompressedData = False");
    let _ = writeln!(s, "ElementSpacing = {sx:?} {sy:?} {sz:?}");
    let _ = writeln!(s, "DimSize = {w} {h} {d}");
    let _ = writeln!(s, "ElementType = {}", element.met_name());
    let _ = writeln!(s, "ElementDataFile = {data_file}");
    s
}

fn raw_sibling(path: &Path) -> PathBuf {
    path.with_extension("raw")
}

/// Writes an image. `.mhd` paths get a sibling `.raw` payload; anything else
/// gets the payload inline.
pub fn write_mha(v: &Volume, path: impl AsRef<Path>, element: ElementType) -> Result<()> {
    let path = path.as_ref();
    let payload = encode(v.data(), element)?;
    if is_mhd(path) {
        let raw = raw_sibling(path);
        let name = raw
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Config(format!("bad output path {}", path.display())))?
            .to_string();
        write_bytes(&raw, &payload)?;
        write_bytes(path, header_text(v, element, &name).as_bytes())
    } else {
        let mut bytes = header_text(v, element, "LOCAL").into_bytes();
        bytes.extend_from_slice(&payload);
        write_bytes(path, &bytes)
    }
}

/// Masks are always written as `MET_UCHAR`.
pub fn write_mask_mha(m: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_mha(&m.to_volume(), path, ElementType::UChar)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Image,
    Mask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub kind: VolumeKind,
}

/// `(payload, sidecar)` paths for any of `name`, `name.raw`, `name.json`.
pub fn raw_json_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let p = path.as_ref();
    (p.with_extension("raw"), p.with_extension("json"))
}

fn write_raw_json_values(
    values: &[f64],
    sidecar: &RawSidecar,
    path: &Path,
) -> Result<()> {
    let (raw, json) = raw_json_paths(path);
    let mut payload = Vec::with_capacity(values.len() * 8);
    for v in values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(&raw, &payload)?;
    let text = serde_json::to_string_pretty(sidecar)
        .map_err(|e| Error::Config(format!("cannot encode sidecar: {e}")))?;
    write_bytes(&json, format!("{text}\n").as_bytes())
}

pub fn write_raw_json(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    write_raw_json_values(
        v.data(),
        &RawSidecar {
            shape: v.shape(),
            spacing: v.spacing(),
            kind: VolumeKind::Image,
        },
        path.as_ref(),
    )
}

pub fn write_mask_raw_json(m: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_raw_json_values(
        m.to_volume().data(),
        &RawSidecar {
            shape: m.shape(),
            spacing: m.spacing(),
            kind: VolumeKind::Mask,
        },
        path.as_ref(),
    )
}

pub fn read_raw_json(path: impl AsRef<Path>) -> Result<LoadedVolume> {
    let (raw, json) = raw_json_paths(path);
    let text = read_bytes(&json)?;
    let sidecar: RawSidecar = serde_json::from_slice(&text)
        .map_err(|e| Error::corrupt(&json, format!("bad sidecar: {e}")))?;
    let payload = read_bytes(&raw)?;
    let count: usize = sidecar.shape.iter().product();
    if payload.len() != count * 8 {
        return Err(Error::corrupt(
            &raw,
            format!(
                "shape {:?} needs {} payload bytes, found {}",
                sidecar.shape,
                count * 8,
                payload.len()
            ),
        ));
    }
    let values = decode(&raw, &payload, ElementType::Double);
    let geometry_err = |e: Error| Error::corrupt(&json, e.to_string());
    match sidecar.kind {
        VolumeKind::Image => Ok(LoadedVolume::Image(
            Volume::new(values, sidecar.shape, sidecar.spacing).map_err(geometry_err)?,
        )),
        VolumeKind::Mask => {
            if let Some(bad) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::corrupt(&raw, format!("mask payload holds {bad}")));
            }
            Ok(LoadedVolume::Mask(
                BinaryMask::new(values.iter().map(|&v| v == 1.0).collect(), sidecar.shape, sidecar.spacing)
                    .map_err(geometry_err)?,
            ))
        }
    }
}

/// File formats recognized by extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeFormat {
    MetaImage,
    RawJson,
}

impl VolumeFormat {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("mha") | Some("mhd") => Ok(VolumeFormat::MetaImage),
            Some("json") | Some("raw") => Ok(VolumeFormat::RawJson),
            _ => Err(Error::unsupported(
                path,
                "expected a .mha, .mhd, .json or .raw extension",
            )),
        }
    }
}

/// Reads either format, chosen by extension.
pub fn read_volume(path: impl AsRef<Path>) -> Result<LoadedVolume> {
    let path = path.as_ref();
    match VolumeFormat::from_path(path)? {
        VolumeFormat::MetaImage => read_mha(path),
        VolumeFormat::RawJson => read_raw_json(path),
    }
}

/// Writes an image in the format implied by the extension (`MET_DOUBLE`
/// for MetaImage).
pub fn write_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match VolumeFormat::from_path(path)? {
        VolumeFormat::MetaImage => write_mha(v, path, ElementType::Double),
        VolumeFormat::RawJson => write_raw_json(v, path),
    }
}

pub fn write_mask(m: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match VolumeFormat::from_path(path)? {
        VolumeFormat::MetaImage => write_mask_mha(m, path),
        VolumeFormat::RawJson => write_mask_raw_json(m, path),
    }
}
