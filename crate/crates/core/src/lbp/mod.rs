//! Uniform LBP(8,2) codes and the block-histogram feature families built
//! on them.
//!
//! Three extractors share the same code-image core:
//!
//! * [`extract_lbp`]: one 90x90 face, 10x10 grid of 9x9-pixel blocks,
//!   5900 values.
//! * [`extract_mslbp`]: the same face at five scales (90, 72, 54, 36, 18),
//!   220 blocks, 12980 values.
//! * [`extract_highdim_lbp`]: a 300x300 frame sampled around 27 landmarks
//!   at five scale factors, 40x40 patches in sixteen 10x10 blocks,
//!   127440 values.
//!
//! Histograms are raw counts (no normalization): every segment over a
//! 9x9 block sums to 81, over a 10x10 block to 100.

mod io;
mod pca;

pub use io::{
    load_landmarks, read_feature_file, read_feature_records_csv, save_landmarks,
    write_feature_file, write_feature_records_csv, FeatureRecord,
};
pub use pca::{pca_fit, pca_project, PcaModel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::img::{bicubic_resize, ColorSpace, Image, ImageError};

#[derive(Debug, Error)]
pub enum LbpError {
    #[error("expected single-channel input")]
    NotGray,
    #[error("expected {want}x{want} input, got {got_w}x{got_h}")]
    WrongSize {
        want: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("block {block_w}x{block_h} does not tile plane {plane_w}x{plane_h}")]
    BadBlocks {
        block_w: usize,
        block_h: usize,
        plane_w: usize,
        plane_h: usize,
    },
    #[error("expected {LANDMARK_COUNT} landmarks, got {0}")]
    LandmarkCount(usize),
    #[error("non-finite landmark coordinate")]
    BadLandmark,
    #[error("scaled frame {0}x{0} is smaller than a landmark patch")]
    FrameTooSmall(usize),
    #[error("feature vector length {got} does not match layout ({segments} segments)")]
    LayoutMismatch { got: usize, segments: usize },
    #[error("pca: {0}")]
    Pca(String),
    #[error("feature file {path}: {msg}")]
    FileFormat { path: String, msg: String },
    #[error("feature file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Histogram bins per block: 58 uniform patterns plus one catch-all.
pub const SEGMENT_BINS: usize = 59;
/// Landmark count expected by the high-dimensional extractor.
pub const LANDMARK_COUNT: usize = 27;
/// Side of the face crop the single- and multi-scale extractors consume.
pub const FACE_SIZE: usize = 90;
/// Side of the frame the landmark extractor consumes.
pub const HIGHDIM_FRAME: usize = 300;
/// Downscaled face sides used by the multi-scale extractor.
pub const MSLBP_SIZES: [usize; 5] = [90, 72, 54, 36, 18];
/// Default frame scale factors for the landmark extractor.
pub const HIGHDIM_SCALES: [f64; 5] = [1.0, 0.84, 0.7, 0.59, 0.5];
/// Side of the square patch cut around each landmark.
pub const PATCH_SIZE: usize = 40;
/// Side of the blocks a landmark patch is split into.
pub const PATCH_BLOCK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbpParams {
    /// Sampling ring radius in pixels.
    pub radius: f64,
}

impl Default for LbpParams {
    fn default() -> LbpParams {
        LbpParams { radius: 2.0 }
    }
}

/// Feature families the pipeline knows how to extract and report on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "lbp")]
    Lbp,
    #[serde(rename = "mslbp")]
    MsLbp,
    #[serde(rename = "highdim")]
    HighDim,
    #[serde(rename = "highdim_pca")]
    HighDimPca,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Lbp => "lbp",
            FeatureKind::MsLbp => "mslbp",
            FeatureKind::HighDim => "highdim",
            FeatureKind::HighDimPca => "highdim_pca",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureKind> {
        match s {
            "lbp" => Some(FeatureKind::Lbp),
            "mslbp" => Some(FeatureKind::MsLbp),
            "highdim" => Some(FeatureKind::HighDim),
            "highdim_pca" => Some(FeatureKind::HighDimPca),
            _ => None,
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One 59-bin histogram's place in a concatenated feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub scale_index: u32,
    pub block_row: u32,
    pub block_col: u32,
    /// Start of this segment's bins within the value vector.
    pub offset: u32,
}

/// Concatenated block histograms plus the layout that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f32>,
    layout: Vec<Segment>,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>, layout: Vec<Segment>) -> Result<FeatureVector, LbpError> {
        if values.len() != layout.len() * SEGMENT_BINS {
            return Err(LbpError::LayoutMismatch {
                got: values.len(),
                segments: layout.len(),
            });
        }
        Ok(FeatureVector { values, layout })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment_values(&self, i: usize) -> &[f32] {
        let off = self.layout[i].offset as usize;
        &self.values[off..off + SEGMENT_BINS]
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Plane of 8-bit LBP codes, same dimensions as the source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodePlane {
    pub width: usize,
    pub height: usize,
    pub codes: Vec<u8>,
}

/// 27 landmark positions, conventionally in the 300x300 frame; the first
/// three are left eye, right eye, mouth center.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmarks {
    points: Vec<(f64, f64)>,
}

impl Landmarks {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Landmarks, LbpError> {
        if points.len() != LANDMARK_COUNT {
            return Err(LbpError::LandmarkCount(points.len()));
        }
        if points
            .iter()
            .any(|&(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(LbpError::BadLandmark);
        }
        Ok(Landmarks { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Multiply every coordinate, e.g. to follow an image rescale.
    pub fn scaled(&self, sx: f64, sy: f64) -> Landmarks {
        Landmarks {
            points: self.points.iter().map(|&(x, y)| (x * sx, y * sy)).collect(),
        }
    }
}

/// Neighbor offsets for the 8-point ring: k = 0 points along +x, the ring
/// proceeds counter-clockwise (y axis points down, so k = 2 is straight
/// up at (0, -r)). Diagonals use r/sqrt(2) exactly.
fn ring_offsets(radius: f64) -> [(f64, f64); 8] {
    let s = radius / std::f64::consts::SQRT_2;
    [
        (radius, 0.0),
        (s, -s),
        (0.0, -radius),
        (-s, -s),
        (-radius, 0.0),
        (-s, s),
        (0.0, radius),
        (s, s),
    ]
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinear sample with replicate edge handling. The lerp form keeps
/// constant regions exact, so ties against the center pixel stay ties.
#[inline]
fn bilinear(plane: &[f32], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = xc - x0 as f64;
    let fy = yc - y0 as f64;
    let top = lerp(plane[y0 * w + x0] as f64, plane[y0 * w + x1] as f64, fx);
    let bot = lerp(plane[y1 * w + x0] as f64, plane[y1 * w + x1] as f64, fx);
    lerp(top, bot, fy)
}

/// LBP code image: bit k is set when the interpolated neighbor k is at
/// least the center value. Output has the input's dimensions; samples
/// beyond the border replicate edge pixels.
pub fn lbp_code_image(gray: &Image, params: &LbpParams) -> Result<CodePlane, LbpError> {
    if gray.channels() != 1 {
        return Err(LbpError::NotGray);
    }
    let (w, h) = (gray.width(), gray.height());
    let plane = gray.plane(0);
    let offsets = ring_offsets(params.radius);
    let mut codes = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let center = plane[y * w + x] as f64;
            let mut code = 0u8;
            for (k, &(dx, dy)) in offsets.iter().enumerate() {
                let v = bilinear(plane, w, h, x as f64 + dx, y as f64 + dy);
                if v >= center {
                    code |= 1 << k;
                }
            }
            codes[y * w + x] = code;
        }
    }
    Ok(CodePlane {
        width: w,
        height: h,
        codes,
    })
}

const fn circular_transitions(code: u8) -> u32 {
    (code ^ code.rotate_left(1)).count_ones()
}

/// Uniform-pattern bin table: codes with at most two circular 0/1
/// transitions map onto bins 0..=57 in ascending code order, everything
/// else lands in bin 58.
const UNIFORM_LUT: [u8; 256] = {
    let mut lut = [(SEGMENT_BINS - 1) as u8; 256];
    let mut bin = 0u8;
    let mut c = 0usize;
    while c < 256 {
        if circular_transitions(c as u8) <= 2 {
            lut[c] = bin;
            bin += 1;
        }
        c += 1;
    }
    lut
};

/// Histogram bin for a raw LBP code.
#[inline]
pub fn uniform_bin(code: u8) -> usize {
    UNIFORM_LUT[code as usize] as usize
}

/// Flattened histogram values plus each block's (col, row) grid slot.
type HistogramParts = (Vec<f32>, Vec<(u32, u32)>);

fn block_histogram_parts(
    codes: &CodePlane,
    block_w: usize,
    block_h: usize,
) -> Result<HistogramParts, LbpError> {
    if block_w == 0
        || block_h == 0
        || !codes.width.is_multiple_of(block_w)
        || !codes.height.is_multiple_of(block_h)
    {
        return Err(LbpError::BadBlocks {
            block_w,
            block_h,
            plane_w: codes.width,
            plane_h: codes.height,
        });
    }
    let grid_cols = codes.width / block_w;
    let grid_rows = codes.height / block_h;
    let mut values = Vec::with_capacity(grid_cols * grid_rows * SEGMENT_BINS);
    let mut blocks = Vec::with_capacity(grid_cols * grid_rows);
    for br in 0..grid_rows {
        for bc in 0..grid_cols {
            let mut hist = [0f32; SEGMENT_BINS];
            for y in br * block_h..(br + 1) * block_h {
                for x in bc * block_w..(bc + 1) * block_w {
                    hist[uniform_bin(codes.codes[y * codes.width + x])] += 1.0;
                }
            }
            values.extend_from_slice(&hist);
            blocks.push((br as u32, bc as u32));
        }
    }
    Ok((values, blocks))
}

/// Unnormalized per-block histograms of uniform bins, blocks in row-major
/// order. Block dimensions must tile the code plane exactly.
pub fn block_histograms(
    codes: &CodePlane,
    block_w: usize,
    block_h: usize,
) -> Result<FeatureVector, LbpError> {
    let (values, blocks) = block_histogram_parts(codes, block_w, block_h)?;
    let layout = blocks
        .iter()
        .enumerate()
        .map(|(i, &(br, bc))| Segment {
            scale_index: 0,
            block_row: br,
            block_col: bc,
            offset: (i * SEGMENT_BINS) as u32,
        })
        .collect();
    FeatureVector::new(values, layout)
}

fn require_face(face: &Image) -> Result<(), LbpError> {
    if face.channels() != 1 {
        return Err(LbpError::NotGray);
    }
    if face.width() != FACE_SIZE || face.height() != FACE_SIZE {
        return Err(LbpError::WrongSize {
            want: FACE_SIZE,
            got_w: face.width(),
            got_h: face.height(),
        });
    }
    Ok(())
}

/// Single-scale face features: 10x10 grid of 9x9-pixel blocks, 5900 values.
pub fn extract_lbp(face: &Image) -> Result<FeatureVector, LbpError> {
    require_face(face)?;
    let codes = lbp_code_image(face, &LbpParams::default())?;
    block_histograms(&codes, 9, 9)
}

/// Multi-scale face features: the face rescaled to each side in
/// [`MSLBP_SIZES`] (always from the 90x90 original), 9x9-pixel blocks at
/// every scale, 12980 values.
pub fn extract_mslbp(face: &Image) -> Result<FeatureVector, LbpError> {
    require_face(face)?;
    let mut values = Vec::new();
    let mut layout = Vec::new();
    for (si, &size) in MSLBP_SIZES.iter().enumerate() {
        let scaled;
        let img = if size == FACE_SIZE {
            face
        } else {
            scaled = bicubic_resize(face, size, size)?;
            &scaled
        };
        let codes = lbp_code_image(img, &LbpParams::default())?;
        let (vals, blocks) = block_histogram_parts(&codes, 9, 9)?;
        for (i, &(br, bc)) in blocks.iter().enumerate() {
            layout.push(Segment {
                scale_index: si as u32,
                block_row: br,
                block_col: bc,
                offset: (values.len() + i * SEGMENT_BINS) as u32,
            });
        }
        values.extend(vals);
    }
    FeatureVector::new(values, layout)
}

/// Landmark-patch features on a 300x300 frame with the default scale
/// factors. See [`extract_highdim_lbp_with_scales`].
pub fn extract_highdim_lbp(img: &Image, lm: &Landmarks) -> Result<FeatureVector, LbpError> {
    extract_highdim_lbp_with_scales(img, lm, &HIGHDIM_SCALES)
}

fn crop(img: &Image, x0: usize, y0: usize, side: usize) -> Image {
    let mut out = Image::new(side, side, ColorSpace::Gray);
    for y in 0..side {
        for x in 0..side {
            out.set(0, x, y, img.get(0, x0 + x, y0 + y));
        }
    }
    out
}

/// Landmark-patch features: for each scale factor the frame and landmark
/// coordinates shrink together, a 40x40 patch is cut around each landmark
/// (origin clamped inside the frame), and each patch contributes sixteen
/// 10x10-pixel block histograms. Segments are ordered scale-major, then
/// landmark-major, then block row-major.
pub fn extract_highdim_lbp_with_scales(
    img: &Image,
    lm: &Landmarks,
    scales: &[f64],
) -> Result<FeatureVector, LbpError> {
    if img.channels() != 1 {
        return Err(LbpError::NotGray);
    }
    if img.width() != HIGHDIM_FRAME || img.height() != HIGHDIM_FRAME {
        return Err(LbpError::WrongSize {
            want: HIGHDIM_FRAME,
            got_w: img.width(),
            got_h: img.height(),
        });
    }
    let mut values = Vec::new();
    let mut layout = Vec::new();
    for (si, &f) in scales.iter().enumerate() {
        let side = (HIGHDIM_FRAME as f64 * f).round() as usize;
        if side < PATCH_SIZE {
            return Err(LbpError::FrameTooSmall(side));
        }
        let scaled;
        let frame = if side == HIGHDIM_FRAME {
            img
        } else {
            scaled = bicubic_resize(img, side, side)?;
            &scaled
        };
        for &(lx, ly) in lm.points() {
            let cx = lx * f;
            let cy = ly * f;
            let half = (PATCH_SIZE / 2) as f64;
            let ox = (cx - half).round().clamp(0.0, (side - PATCH_SIZE) as f64) as usize;
            let oy = (cy - half).round().clamp(0.0, (side - PATCH_SIZE) as f64) as usize;
            let patch = crop(frame, ox, oy, PATCH_SIZE);
            let codes = lbp_code_image(&patch, &LbpParams::default())?;
            let (vals, blocks) = block_histogram_parts(&codes, PATCH_BLOCK, PATCH_BLOCK)?;
            for (i, &(br, bc)) in blocks.iter().enumerate() {
                layout.push(Segment {
                    scale_index: si as u32,
                    block_row: br,
                    block_col: bc,
                    offset: (values.len() + i * SEGMENT_BINS) as u32,
                });
            }
            values.extend(vals);
        }
    }
    FeatureVector::new(values, layout)
}
