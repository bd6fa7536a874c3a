//! sRGB → CIE-Lab conversion and the Individual Typology Angle (ITA) skin
//! tone proxy used to derive the sensitive attribute from images.

use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::RgbImage;

use crate::data::LabeledBatch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// ITA at or below this many degrees is labeled dark (`s = 1`).
pub const DARK_ITA_THRESHOLD: f64 = 19.0;

/// Pixels whose channels are all below this are treated as background.
pub const BACKGROUND_LEVEL: f64 = 0.08;

/// Linear sRGB → XYZ under D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// D65 reference white as the image of sRGB white, so the gray axis maps to
/// `a = b = 0`.
fn white() -> [f64; 3] {
    RGB_TO_XYZ.map(|row| row.iter().sum())
}

fn srgb_decode(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts an sRGB triple with channels in `[0, 1]` to `(L, a, b)`.
pub fn srgb_to_lab(rgb: [f64; 3]) -> Result<[f64; 3]> {
    if rgb.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::InvalidArgument(format!("sRGB channels must lie in [0, 1], got {rgb:?}")));
    }
    let lin = rgb.map(srgb_decode);
    let w = white();
    let xyz: [f64; 3] = std::array::from_fn(|i| {
        RGB_TO_XYZ[i].iter().zip(&lin).map(|(m, c)| m * c).sum::<f64>() / w[i]
    });
    let [fx, fy, fz] = xyz.map(lab_f);
    Ok([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)])
}

/// `(180/π) arctan((L - 50) / b)` in degrees.
///
/// Evaluated with the two-argument arctangent so that `b = 0` yields ±90°
/// (and 0° when `L = 50` as well) instead of dividing by zero.
pub fn ita(l: f64, b: f64) -> f64 {
    let sign = if b < 0.0 { -1.0 } else { 1.0 };
    ((l - 50.0) * sign).atan2(b.abs()).to_degrees()
}

/// `1` (dark) iff `ita_degrees <= 19`.
pub fn binarize_ita(ita_degrees: f64) -> u8 {
    (ita_degrees <= DARK_ITA_THRESHOLD) as u8
}

/// Median ITA of the non-background pixels, binarized.
///
/// `pixels` are sRGB triples in `[0, 1]`.
pub fn image_ita_label(pixels: &[[f64; 3]]) -> Result<u8> {
    Ok(binarize_ita(median_ita(pixels)?))
}

pub fn median_ita(pixels: &[[f64; 3]]) -> Result<f64> {
    if pixels.is_empty() {
        return Err(Error::InvalidData("empty image".into()));
    }
    let mut angles = Vec::with_capacity(pixels.len());
    for px in pixels {
        if px.iter().all(|&c| c < BACKGROUND_LEVEL) {
            continue;
        }
        let [l, _, b] = srgb_to_lab(*px)?;
        angles.push(ita(l, b));
    }
    if angles.is_empty() {
        return Err(Error::InvalidData("every pixel is background".into()));
    }
    angles.sort_by(f64::total_cmp);
    let n = angles.len();
    Ok(if n % 2 == 1 {
        angles[n / 2]
    } else {
        0.5 * (angles[n / 2 - 1] + angles[n / 2])
    })
}

fn rgb_pixels(img: &RgbImage) -> Vec<[f64; 3]> {
    img.pixels()
        .map(|p| p.0.map(|c| c as f64 / 255.0))
        .collect()
}

/// One `(path, y)` row of an image manifest.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub y: u8,
}

/// Image list read from a `path,y` CSV. Relative paths are resolved
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageManifest {
    pub rows: Vec<ManifestRow>,
}

impl ImageManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        let mut rdr = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let mut row: ManifestRow = rec?;
            if row.y > 1 {
                return Err(Error::InvalidData(format!("y must be 0 or 1 in {}", row.path.display())));
            }
            if row.path.is_relative() {
                row.path = base.join(&row.path);
            }
            if !row.path.exists() {
                return Err(Error::InvalidData(format!("missing image {}", row.path.display())));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::InvalidData("manifest has no rows".into()));
        }
        Ok(Self { rows })
    }

    /// Decodes every image, derives `s` from its ITA and flattens a
    /// `side × side` RGB thumbnail into the input features.
    pub fn to_batch(&self, side: usize) -> Result<LabeledBatch> {
        if side == 0 {
            return Err(Error::InvalidArgument("thumbnail side must be positive".into()));
        }
        let width = 3 * side * side;
        let mut xs = Vec::with_capacity(self.rows.len() * width);
        let (mut ys, mut ss) = (Vec::new(), Vec::new());
        for row in &self.rows {
            let img = image::open(&row.path)?.to_rgb8();
            let s = image_ita_label(&rgb_pixels(&img))
                .map_err(|e| Error::InvalidData(format!("{}: {e}", row.path.display())))?;
            let thumb = image::imageops::resize(&img, side as u32, side as u32, FilterType::Triangle);
            xs.extend(thumb.as_raw().iter().map(|&c| c as f64 / 255.0));
            ys.push(row.y);
            ss.push(s);
        }
        LabeledBatch::new(Tensor::matrix(ys.len(), width, xs)?, ys, ss)
    }
}
