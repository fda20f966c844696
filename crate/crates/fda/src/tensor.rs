//! Raw tensor files with a JSON header next to them.
//!
//! `name.bin` holds the little-endian payload, `name.bin.json` the header.
//! Layout is row-major with the channel (or class) axis last.

use std::fs;
use std::path::{Path, PathBuf};

use fda_core::{LabelMap, PredictionMap, RasterImage, IGNORE_LABEL};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FORMAT: &str = "fda-tensor";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Float32,
    Int32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    /// `[H, W, K]` class probabilities.
    Prediction,
    /// `[H, W]` class indices, 255 = ignore.
    Labels,
    /// `[H, W, C]` pixel values.
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub format: String,
    pub version: u32,
    pub kind: TensorKind,
    pub dims: Vec<usize>,
    pub dtype: DType,
    pub endianness: String,
    pub layout: String,
}

impl TensorHeader {
    pub fn new(kind: TensorKind, dims: Vec<usize>, dtype: DType) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            kind,
            dims,
            dtype,
            endianness: "little".into(),
            layout: "row-major-channel-last".into(),
        }
    }

    pub fn elements(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn payload_len(&self) -> usize {
        self.elements() * 4
    }

    fn check(&self, path: &Path) -> Result<()> {
        let bad = |m: String| Err(Error::format(path, m));
        if self.format != FORMAT {
            return bad(format!("format is {:?}, expected {FORMAT:?}", self.format));
        }
        if self.version != VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.endianness != "little" {
            return bad(format!("unsupported endianness {:?}", self.endianness));
        }
        if self.layout != "row-major-channel-last" {
            return bad(format!("unsupported layout {:?}", self.layout));
        }
        if self.dims.contains(&0) {
            return bad(format!("dims {:?} must be positive", self.dims));
        }
        let (rank, dtype) = match self.kind {
            TensorKind::Prediction => (3, DType::Float32),
            TensorKind::Labels => (2, DType::Int32),
            TensorKind::Image => (3, DType::Float32),
        };
        if self.dims.len() != rank || self.dtype != dtype {
            return bad(format!("{:?} tensors need rank {rank} {dtype:?}", self.kind));
        }
        Ok(())
    }
}

/// Sidecar path for a payload path.
pub fn header_path(payload: &Path) -> PathBuf {
    let mut name = payload.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Accepts either the payload or its sidecar and returns the payload path.
pub fn payload_path(path: &Path) -> PathBuf {
    match path.to_str().and_then(|s| s.strip_suffix(".json")) {
        Some(stripped) if stripped.ends_with(".bin") => PathBuf::from(stripped),
        _ => path.to_path_buf(),
    }
}

pub fn read_header(path: &Path) -> Result<TensorHeader> {
    let hp = header_path(&payload_path(path));
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: TensorHeader =
        serde_json::from_str(&text).map_err(|e| Error::format(&hp, format!("bad header: {e}")))?;
    header.check(&hp)?;
    Ok(header)
}

fn write_raw(path: &Path, header: &TensorHeader, payload: &[u8]) -> Result<()> {
    debug_assert_eq!(payload.len(), header.payload_len());
    fs::write(path, payload).map_err(|e| Error::io(path, e))?;
    let hp = header_path(path);
    let json = serde_json::to_string_pretty(header).expect("header serializes");
    fs::write(&hp, json + "\n").map_err(|e| Error::io(&hp, e))
}

/// Header and payload bytes, with the payload length checked.
pub fn read_raw(path: &Path) -> Result<(TensorHeader, Vec<u8>)> {
    let payload = payload_path(path);
    let header = read_header(&payload)?;
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    if bytes.len() != header.payload_len() {
        return Err(Error::format(
            &payload,
            format!("payload is {} bytes, header dims {:?} need {}", bytes.len(), header.dims, header.payload_len()),
        ));
    }
    Ok((header, bytes))
}

fn f32_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(|v| (v as f32).to_le_bytes()).collect()
}

fn words(bytes: &[u8]) -> impl Iterator<Item = [u8; 4]> + '_ {
    bytes.chunks_exact(4).map(|w| [w[0], w[1], w[2], w[3]])
}

pub fn write_prediction(path: &Path, pred: &PredictionMap) -> Result<()> {
    let header =
        TensorHeader::new(TensorKind::Prediction, vec![pred.height(), pred.width(), pred.classes()], DType::Float32);
    write_raw(path, &header, &f32_bytes(pred.probs().iter().copied()))
}

pub fn read_prediction(path: &Path) -> Result<PredictionMap> {
    let (header, bytes) = read_raw(path)?;
    let payload = payload_path(path);
    if header.kind != TensorKind::Prediction {
        return Err(Error::format(&payload, format!("expected a prediction tensor, found {:?}", header.kind)));
    }
    let probs: Vec<f64> = words(&bytes).map(|w| f64::from(f32::from_le_bytes(w))).collect();
    if let Some(i) = probs.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(&payload, format!("non-finite probability at element {i}")));
    }
    let (h, w, k) = (header.dims[0], header.dims[1], header.dims[2]);
    PredictionMap::new(h, w, k, probs).map_err(|e| Error::format(&payload, e.to_string()))
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    let header = TensorHeader::new(TensorKind::Labels, vec![labels.height(), labels.width()], DType::Int32);
    let bytes: Vec<u8> = labels.labels().iter().flat_map(|&l| i32::from(l).to_le_bytes()).collect();
    write_raw(path, &header, &bytes)
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let (header, bytes) = read_raw(path)?;
    let payload = payload_path(path);
    if header.kind != TensorKind::Labels {
        return Err(Error::format(&payload, format!("expected a label tensor, found {:?}", header.kind)));
    }
    let mut labels = Vec::with_capacity(bytes.len() / 4);
    for (i, w) in words(&bytes).enumerate() {
        let v = i32::from_le_bytes(w);
        match u8::try_from(v) {
            Ok(l) => labels.push(l),
            Err(_) => {
                return Err(Error::format(&payload, format!("label {v} at pixel {i} is not in 0..{IGNORE_LABEL}")))
            }
        }
    }
    Ok(LabelMap::new(header.dims[0], header.dims[1], labels)?)
}

/// Float image output; values are written as they are (not quantized).
pub fn write_image(path: &Path, image: &RasterImage) -> Result<()> {
    let (h, w, c) = image.dims();
    let header = TensorHeader::new(TensorKind::Image, vec![h, w, c], DType::Float32);
    write_raw(path, &header, &f32_bytes(image.samples().iter().copied()))
}

pub fn read_image(path: &Path) -> Result<RasterImage> {
    let (header, bytes) = read_raw(path)?;
    let payload = payload_path(path);
    if header.kind != TensorKind::Image {
        return Err(Error::format(&payload, format!("expected an image tensor, found {:?}", header.kind)));
    }
    let samples: Vec<f64> = words(&bytes).map(|w| f64::from(f32::from_le_bytes(w))).collect();
    RasterImage::new(header.dims[0], header.dims[1], header.dims[2], samples)
        .map_err(|e| Error::format(&payload, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_prediction(h: usize, w: usize, k: usize) -> PredictionMap {
        let scores = (0..h * w * k).map(|i| ((i * 7919) % 97) as f64 + 1.0).collect();
        let p = PredictionMap::from_scores(h, w, k, scores).unwrap();
        // snap to f32 so the round trip can be exact
        PredictionMap::new(h, w, k, p.probs().iter().map(|&v| f64::from(v as f32)).collect()).unwrap()
    }

    #[test]
    fn prediction_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let p = sample_prediction(4, 6, 5);
        write_prediction(&path, &p).unwrap();
        let back = read_prediction(&path).unwrap();
        assert!(back.probs().iter().zip(p.probs()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(read_prediction(&header_path(&path)).unwrap(), back);
    }

    #[test]
    fn payload_size_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.bin");
        let p = PredictionMap::new(512, 1024, 19, vec![1.0 / 19.0; 512 * 1024 * 19]).unwrap();
        write_prediction(&path, &p).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 512 * 1024 * 19 * 4);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        write_prediction(&path, &sample_prediction(2, 2, 3)).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        let err = read_prediction(&path).unwrap_err();
        assert!(err.to_string().contains("payload is 44 bytes"), "{err}");
    }

    #[test]
    fn nan_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        write_prediction(&path, &sample_prediction(1, 2, 2)).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(read_prediction(&path).unwrap_err().to_string().contains("non-finite"));
    }

    #[test]
    fn labels_round_trip_and_kind_checks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.bin");
        let labels = LabelMap::new(2, 3, vec![0, 1, IGNORE_LABEL, 4, 2, 0]).unwrap();
        write_labels(&path, &labels).unwrap();
        assert_eq!(read_labels(&path).unwrap(), labels);
        assert!(read_prediction(&path).is_err());
        let mut bytes = fs::read(&path).unwrap();
        bytes[0..4].copy_from_slice(&(-1i32).to_le_bytes());
        fs::write(&path, bytes).unwrap();
        assert!(read_labels(&path).is_err());
    }

    #[test]
    fn image_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.bin");
        let img = RasterImage::from_fn(3, 4, 3, |h, w, c| (h * 12 + w * 3 + c) as f64 + 0.25).unwrap();
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn header_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.bin");
        write_labels(&path, &LabelMap::new(1, 1, vec![0]).unwrap()).unwrap();
        let hp = header_path(&path);
        let text = fs::read_to_string(&hp).unwrap().replace("\"little\"", "\"big\"");
        fs::write(&hp, text).unwrap();
        assert!(read_header(&path).unwrap_err().to_string().contains("endianness"));
        fs::write(&hp, "{").unwrap();
        assert!(matches!(read_header(&path), Err(Error::Format { .. })));
    }
}
