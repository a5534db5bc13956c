use std::collections::HashMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{DynamicImage, ImageReader, RgbImage};

use super::DatasetError;

/// Shorter-side length every source and edited image is normalised to.
pub const DEFAULT_SHORTER_SIDE: u32 = 512;

/// Resolves image references to decoded 8-bit RGB images.
pub trait ImageProvider: Send + Sync {
    /// Checks that the reference resolves to a decodable image and returns its dimensions.
    fn probe(&self, reference: &str) -> Result<(u32, u32), DatasetError>;

    fn load(&self, reference: &str) -> Result<RgbImage, DatasetError>;
}

/// Resolves references as paths relative to a root directory.
#[derive(Debug, Clone)]
pub struct DirImageProvider {
    root: PathBuf,
}

impl DirImageProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirImageProvider { root: root.into() }
    }

    pub fn resolve(&self, reference: &str) -> PathBuf {
        let p = Path::new(reference);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }
}

impl ImageProvider for DirImageProvider {
    fn probe(&self, reference: &str) -> Result<(u32, u32), DatasetError> {
        let path = self.resolve(reference);
        let reader = ImageReader::open(&path)
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?
            .with_guessed_format()
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        reader.into_dimensions().map_err(|e| DatasetError::Decode {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    fn load(&self, reference: &str) -> Result<RgbImage, DatasetError> {
        let path = self.resolve(reference);
        let bytes = std::fs::read(&path)
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        decode_rgb(&bytes).map_err(|e| match e {
            DatasetError::Decode { message, .. } => {
                DatasetError::Decode { path: path.display().to_string(), message }
            }
            other => other,
        })
    }
}

/// In-memory images keyed by reference; used by tests and synthetic data.
#[derive(Debug, Clone, Default)]
pub struct MemoryImageProvider {
    images: HashMap<String, RgbImage>,
}

impl MemoryImageProvider {
    pub fn insert(&mut self, reference: &str, image: RgbImage) {
        self.images.insert(reference.to_string(), image);
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl ImageProvider for MemoryImageProvider {
    fn probe(&self, reference: &str) -> Result<(u32, u32), DatasetError> {
        self.images
            .get(reference)
            .map(|i| i.dimensions())
            .ok_or_else(|| DatasetError::Decode { path: reference.to_string(), message: "not found".into() })
    }

    fn load(&self, reference: &str) -> Result<RgbImage, DatasetError> {
        self.images
            .get(reference)
            .cloned()
            .ok_or_else(|| DatasetError::Decode { path: reference.to_string(), message: "not found".into() })
    }
}

/// Decodes an encoded image to 8-bit RGB. Alpha is dropped with a warning.
pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage, DatasetError> {
    let img = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| DatasetError::Decode { path: "<memory>".into(), message: e.to_string() })?
        .decode()
        .map_err(|e| DatasetError::Decode { path: "<memory>".into(), message: e.to_string() })?;
    Ok(to_rgb(img))
}

pub(crate) fn to_rgb(img: DynamicImage) -> RgbImage {
    if img.color().has_alpha() {
        log::warn!("dropping alpha channel from {:?} image", img.color());
    }
    img.into_rgb8()
}

/// Output dimensions that bring the shorter side to `target`.
///
/// The long side is scaled by `target / short` and rounded half-up in exact integer
/// arithmetic, so `1024x768 -> 683x512`.
pub fn shorter_side_dims(width: u32, height: u32, target: u32) -> Result<(u32, u32), DatasetError> {
    if width == 0 || height == 0 || target == 0 {
        return Err(DatasetError::ZeroDimension { width, height });
    }
    let (short, long) = if width <= height { (width, height) } else { (height, width) };
    let (short, long, target) = (short as u64, long as u64, target as u64);
    // round_half_up(long * target / short) = floor((2 * long * target + short) / (2 * short))
    let scaled = ((2 * long * target + short) / (2 * short)) as u32;
    Ok(if width <= height { (target as u32, scaled) } else { (scaled, target as u32) })
}

/// Rescales so the shorter side equals `target`, preserving aspect ratio (bicubic).
///
/// Images already at the target size pass through untouched.
pub fn resize_shorter_side(image: &RgbImage, target: u32) -> Result<RgbImage, DatasetError> {
    let (w, h) = image.dimensions();
    let (nw, nh) = shorter_side_dims(w, h, target)?;
    if (nw, nh) == (w, h) {
        return Ok(image.clone());
    }
    Ok(image::imageops::resize(image, nw, nh, FilterType::CatmullRom))
}

/// Lossless PNG bytes for an RGB image.
pub fn encode_png(image: &RgbImage) -> Result<Vec<u8>, DatasetError> {
    let mut buf = Vec::new();
    image
        .write_to(&mut Cursor::new(&mut buf), image::ImageFormat::Png)
        .map_err(|e| DatasetError::Decode { path: "<png encoder>".into(), message: e.to_string() })?;
    Ok(buf)
}
