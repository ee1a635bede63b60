//! Frame images: loading from disk and resolution changes.

use std::fmt;
use std::io::Cursor;
use std::path::PathBuf;
use std::str::FromStr;

use disco_core::corpus::Frame;
use disco_core::detectors::FrameSource;
use disco_core::query::{GatewayError, ImagePayload};
use image::imageops::FilterType;
use image::{ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

/// Target frame size: exact pixel dimensions or a scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Exact { width: u32, height: u32 },
    Scale(f64),
}

impl Resolution {
    /// Output dimensions for a `width × height` source. Scaled sizes round to
    /// the nearest pixel, never below one.
    pub fn dimensions(self, width: u32, height: u32) -> (u32, u32) {
        match self {
            Resolution::Exact { width, height } => (width, height),
            Resolution::Scale(s) => {
                let f = |x: u32| ((f64::from(x) * s).round() as u32).max(1);
                (f(width), f(height))
            }
        }
    }

    fn check(self) -> Result<(), String> {
        match self {
            Resolution::Exact { width, height } if width == 0 || height == 0 => {
                Err("target dimensions must be positive".into())
            }
            Resolution::Scale(s) if !(s > 0.0 && s.is_finite()) => Err("scale must be positive".into()),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Exact { width, height } => write!(f, "{width}x{height}"),
            Resolution::Scale(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for Resolution {
    type Err = String;

    /// `WIDTHxHEIGHT` or a bare scale factor.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let r = match s.split_once(['x', 'X']) {
            Some((w, h)) => Resolution::Exact {
                width: w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?,
                height: h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?,
            },
            None => Resolution::Scale(s.trim().parse().map_err(|_| format!("bad resolution `{s}`"))?),
        };
        r.check()?;
        Ok(r)
    }
}

fn decode_err(e: impl fmt::Display) -> GatewayError {
    GatewayError::Decode(e.to_string())
}

/// Resizes an encoded frame to `target`, keeping its encoding. A target equal
/// to the source size returns the input bytes untouched.
pub fn preprocess_frame(image: &ImagePayload, target: Resolution) -> Result<ImagePayload, GatewayError> {
    target.check().map_err(GatewayError::Decode)?;
    let reader = ImageReader::new(Cursor::new(&image.bytes))
        .with_guessed_format()
        .map_err(decode_err)?;
    let format = reader.format().ok_or_else(|| decode_err("unrecognised image format"))?;
    let decoded = reader.decode().map_err(decode_err)?;
    let (w, h) = target.dimensions(decoded.width(), decoded.height());
    if (w, h) == (decoded.width(), decoded.height()) {
        return Ok(image.clone());
    }
    let resized = decoded.resize_exact(w, h, FilterType::Lanczos3);
    let (out_format, media_type) = match format {
        ImageFormat::Jpeg => (ImageFormat::Jpeg, "image/jpeg"),
        _ => (ImageFormat::Png, "image/png"),
    };
    let resized = if out_format == ImageFormat::Jpeg {
        image::DynamicImage::ImageRgb8(resized.to_rgb8())
    } else {
        resized
    };
    let mut out = Cursor::new(Vec::new());
    resized.write_to(&mut out, out_format).map_err(decode_err)?;
    Ok(ImagePayload::new(media_type, out.into_inner()))
}

pub fn media_type_for(bytes: &[u8]) -> &'static str {
    match image::guess_format(bytes) {
        Ok(ImageFormat::Jpeg) => "image/jpeg",
        _ => "image/png",
    }
}

/// Reads frames from disk relative to the manifest directory, optionally
/// resizing them.
#[derive(Debug, Clone)]
pub struct DiskImages {
    pub root: PathBuf,
    pub resolution: Option<Resolution>,
}

impl FrameSource for DiskImages {
    fn image(&self, frame: &Frame) -> Result<ImagePayload, GatewayError> {
        let path = self.root.join(&frame.image_path);
        let bytes = std::fs::read(&path).map_err(|e| GatewayError::Decode(format!("{}: {e}", path.display())))?;
        let payload = ImagePayload::new(media_type_for(&bytes), bytes);
        match self.resolution {
            Some(r) => preprocess_frame(&payload, r),
            None => Ok(payload),
        }
    }
}
