//! Processing pipelines that turn raw images into aligned grayscale
//! faces under different orderings of alignment, degradation, and
//! restoration.
//!
//! Landmark files store coordinates in a 300x300 reference frame; they
//! map into any same-aspect rendering of the image by scaling with
//! width/300 and height/300. Alignment warps the face so that the left
//! eye, right eye, and mouth center land on fixed template points of
//! the 90x90 face frame.

pub mod experiment;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::img::{bicubic_resize, sample_bicubic, to_gray, Image, ImageError};
use crate::lbp::{Landmarks, LbpError, FACE_SIZE, HIGHDIM_FRAME};
use crate::matcher::MatchError;
use crate::protocol::ProtocolError;
use crate::srcnn::{forward, SrcnnError, SrcnnModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pre-aligned input must be {FACE_SIZE}x{FACE_SIZE}, got {width}x{height}")]
    NotPreAligned { width: usize, height: usize },
    #[error("alignment requires landmarks")]
    MissingLandmarks,
    #[error("landmark constellation is degenerate")]
    DegenerateLandmarks,
    #[error("image {width}x{height} too small to degrade by {factor}")]
    TooSmall {
        width: usize,
        height: usize,
        factor: usize,
    },
    #[error("scale factor must be at least 2, got {0}")]
    BadFactor(usize),
    #[error("bad experiment config: {0}")]
    BadConfig(String),
    #[error("group {group} has no usable {role} images left")]
    EmptyGroup { group: u32, role: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Lbp(#[from] LbpError),
    #[error(transparent)]
    Srcnn(#[from] SrcnnError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// How faces are brought onto the 90x90 frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignmentMode {
    /// Inputs are already aligned 90x90 crops; alignment is a size check.
    #[serde(rename = "pre_aligned")]
    PreAligned,
    /// Estimate a similarity from the first three landmarks and warp.
    #[serde(rename = "similarity_warp")]
    SimilarityWarp,
}

/// Template positions of left eye, right eye, and mouth center on the
/// aligned face.
pub const ALIGN_TEMPLATE: [(f64, f64); 3] = [(27.0, 33.0), (63.0, 33.0), (45.0, 66.0)];

/// Four-parameter similarity: x' = a x - b y + tx, y' = b x + a y + ty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a * x - self.b * y + self.tx,
            self.b * x + self.a * y + self.ty,
        )
    }

    pub fn invert(&self) -> Result<Similarity, PipelineError> {
        let det = self.a * self.a + self.b * self.b;
        if det < 1e-12 {
            return Err(PipelineError::DegenerateLandmarks);
        }
        let (a, b) = (self.a / det, -self.b / det);
        Ok(Similarity {
            a,
            b,
            tx: -(a * self.tx - b * self.ty),
            ty: -(b * self.tx + a * self.ty),
        })
    }
}

/// Solve a 4x4 linear system in place by Gaussian elimination with
/// partial pivoting.
#[allow(clippy::needless_range_loop)]
fn solve4(mut m: [[f64; 4]; 4], mut rhs: [f64; 4]) -> Result<[f64; 4], PipelineError> {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < 1e-12 {
            return Err(PipelineError::DegenerateLandmarks);
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = rhs[row];
        for k in row + 1..4 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Ok(x)
}

/// Least-squares similarity mapping each `src` point onto its `dst`
/// partner. Needs at least two distinct points.
pub fn estimate_similarity(
    src: &[(f64, f64)],
    dst: &[(f64, f64)],
) -> Result<Similarity, PipelineError> {
    if src.len() != dst.len() || src.len() < 2 {
        return Err(PipelineError::DegenerateLandmarks);
    }
    // normal equations for rows [x, -y, 1, 0] -> x' and [y, x, 0, 1] -> y'
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    for (&(x, y), &(xp, yp)) in src.iter().zip(dst) {
        let rows = [([x, -y, 1.0, 0.0], xp), ([y, x, 0.0, 1.0], yp)];
        for (r, b) in rows {
            for i in 0..4 {
                for j in 0..4 {
                    ata[i][j] += r[i] * r[j];
                }
                atb[i] += r[i] * b;
            }
        }
    }
    let p = solve4(ata, atb)?;
    let sim = Similarity {
        a: p[0],
        b: p[1],
        tx: p[2],
        ty: p[3],
    };
    if sim.a * sim.a + sim.b * sim.b < 1e-12 {
        return Err(PipelineError::DegenerateLandmarks);
    }
    Ok(sim)
}

/// Render the warped image on a `width` x `height` canvas: each output
/// pixel samples the source at the inverse-mapped position.
pub fn warp_similarity(
    img: &Image,
    sim: &Similarity,
    width: usize,
    height: usize,
) -> Result<Image, PipelineError> {
    let inv = sim.invert()?;
    let mut out = Image::new(width, height, img.color());
    for c in 0..img.channels() {
        for y in 0..height {
            for x in 0..width {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                let v = sample_bicubic(img, c, sx, sy).clamp(0.0, 1.0);
                out.set(c, x, y, v as f32);
            }
        }
    }
    Ok(out)
}

/// Bring a face onto the 90x90 frame. Landmarks are in the 300x300
/// reference frame and are only consulted under `SimilarityWarp`.
pub fn align_face(
    img: &Image,
    landmarks: Option<&Landmarks>,
    mode: AlignmentMode,
) -> Result<Image, PipelineError> {
    match mode {
        AlignmentMode::PreAligned => {
            if img.width() != FACE_SIZE || img.height() != FACE_SIZE {
                return Err(PipelineError::NotPreAligned {
                    width: img.width(),
                    height: img.height(),
                });
            }
            Ok(img.clone())
        }
        AlignmentMode::SimilarityWarp => {
            let lm = landmarks.ok_or(PipelineError::MissingLandmarks)?;
            let frame = HIGHDIM_FRAME as f64;
            let local = lm.scaled(img.width() as f64 / frame, img.height() as f64 / frame);
            let sim = estimate_similarity(&local.points()[..3], &ALIGN_TEMPLATE)?;
            warp_similarity(img, &sim, FACE_SIZE, FACE_SIZE)
        }
    }
}

/// Resolution loss: bicubic shrink by `factor` (dims floored), then
/// bicubic expansion back up. Output dims are factor * floor(dim/factor).
pub fn degrade(img: &Image, factor: usize) -> Result<Image, PipelineError> {
    if factor < 2 {
        return Err(PipelineError::BadFactor(factor));
    }
    let (wd, hd) = (img.width() / factor, img.height() / factor);
    if wd == 0 || hd == 0 {
        return Err(PipelineError::TooSmall {
            width: img.width(),
            height: img.height(),
            factor,
        });
    }
    let down = bicubic_resize(img, wd, hd)?;
    Ok(bicubic_resize(&down, wd * factor, hd * factor)?)
}

/// The five processing orders compared by the recognition experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Align only; full-resolution reference.
    #[serde(rename = "baseline")]
    Baseline,
    /// Align, degrade, restore.
    #[serde(rename = "e1_sr")]
    E1Sr,
    /// Align, degrade.
    #[serde(rename = "e1_bicubic")]
    E1Bicubic,
    /// Degrade the full frame, restore, then align.
    #[serde(rename = "e2_sr")]
    E2Sr,
    /// Degrade the full frame, then align.
    #[serde(rename = "e2_bicubic")]
    E2Bicubic,
}

impl Variant {
    /// Fixed report order.
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::E1Sr,
        Variant::E1Bicubic,
        Variant::E2Sr,
        Variant::E2Bicubic,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::E1Sr => "e1_sr",
            Variant::E1Bicubic => "e1_bicubic",
            Variant::E2Sr => "e2_sr",
            Variant::E2Bicubic => "e2_bicubic",
        }
    }

    /// Row label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Baseline => "lfw3D",
            Variant::E1Sr => "lfw3D SR 3 channels",
            Variant::E1Bicubic => "lfw3D bicubic 3 channels",
            Variant::E2Sr => "lfw SR 3 channels orig.",
            Variant::E2Bicubic => "lfw bicubic 3 channels orig.",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.iter().copied().find(|v| v.tag() == s)
    }

    pub fn uses_sr(self) -> bool {
        matches!(self, Variant::E1Sr | Variant::E2Sr)
    }

    /// True when the full frame is degraded before alignment.
    pub fn degrades_before_align(self) -> bool {
        matches!(self, Variant::E2Sr | Variant::E2Bicubic)
    }

    pub fn is_degraded(self) -> bool {
        self != Variant::Baseline
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Knobs shared by every image passing through one variant.
#[derive(Clone, Copy)]
pub struct ProcessOptions<'a> {
    pub variant: Variant,
    pub alignment: AlignmentMode,
    pub scale_factor: usize,
    pub model: Option<&'a SrcnnModel>,
}

impl ProcessOptions<'_> {
    fn restore(&self, img: &Image) -> Result<Image, PipelineError> {
        let low = degrade(img, self.scale_factor)?;
        if self.variant.uses_sr() {
            let model = self.model.ok_or_else(|| {
                PipelineError::BadConfig("restoration variant without weights".into())
            })?;
            Ok(forward(model, &low)?)
        } else {
            Ok(low)
        }
    }
}

/// Run one image through a variant's processing order, ending in the
/// aligned 90x90 grayscale face ready for histogram extraction.
pub fn process_face(
    img: &Image,
    landmarks: Option<&Landmarks>,
    opt: &ProcessOptions,
) -> Result<Image, PipelineError> {
    let face = match opt.variant {
        Variant::Baseline => align_face(img, landmarks, opt.alignment)?,
        Variant::E1Sr | Variant::E1Bicubic => {
            if !FACE_SIZE.is_multiple_of(opt.scale_factor) {
                return Err(PipelineError::BadConfig(format!(
                    "scale factor {} must divide {FACE_SIZE} when degrading aligned faces",
                    opt.scale_factor
                )));
            }
            let aligned = align_face(img, landmarks, opt.alignment)?;
            opt.restore(&aligned)?
        }
        Variant::E2Sr | Variant::E2Bicubic => {
            let low = opt.restore(img)?;
            align_face(&low, landmarks, opt.alignment)?
        }
    };
    Ok(to_gray(&face))
}

/// Gray 300x300 frame for the dense landmark extractor. Stored
/// landmarks already live in this frame and pass through unchanged.
pub fn highdim_frame(img: &Image) -> Result<Image, PipelineError> {
    let gray = to_gray(img);
    Ok(bicubic_resize(&gray, HIGHDIM_FRAME, HIGHDIM_FRAME)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::ColorSpace;
    use approx::assert_relative_eq;

    #[test]
    fn similarity_recovers_known_transform() {
        let truth = Similarity {
            a: 1.2 * 0.3f64.cos(),
            b: 1.2 * 0.3f64.sin(),
            tx: -4.0,
            ty: 7.5,
        };
        let src = [(10.0, 20.0), (50.0, 12.0), (33.0, 60.0)];
        let dst: Vec<(f64, f64)> = src.iter().map(|&(x, y)| truth.apply(x, y)).collect();
        let est = estimate_similarity(&src, &dst).unwrap();
        assert_relative_eq!(est.a, truth.a, epsilon = 1e-9);
        assert_relative_eq!(est.b, truth.b, epsilon = 1e-9);
        assert_relative_eq!(est.tx, truth.tx, epsilon = 1e-9);
        assert_relative_eq!(est.ty, truth.ty, epsilon = 1e-9);
    }

    #[test]
    fn similarity_least_squares_on_noisy_fourth_point() {
        // three consistent points plus one outlier: fit must stay close
        // to the consistent transform rather than any exact solve
        let truth = Similarity {
            a: 1.0,
            b: 0.0,
            tx: 5.0,
            ty: 0.0,
        };
        let src = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)];
        let mut dst: Vec<(f64, f64)> = src.iter().map(|&(x, y)| truth.apply(x, y)).collect();
        dst[3].0 += 0.4;
        let est = estimate_similarity(&src, &dst).unwrap();
        assert!((est.a - 1.0).abs() < 0.05);
        assert!((est.tx - 5.0).abs() < 0.3);
    }

    #[test]
    fn similarity_rejects_degenerate_input() {
        let p = [(5.0, 5.0), (5.0, 5.0), (5.0, 5.0)];
        assert!(estimate_similarity(&p, &p).is_err());
        assert!(estimate_similarity(&[(0.0, 0.0)], &[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let sim = Similarity {
            a: 0.8,
            b: -0.4,
            tx: 3.0,
            ty: -2.0,
        };
        let inv = sim.invert().unwrap();
        let (x, y) = sim.apply(12.0, -7.0);
        let (bx, by) = inv.apply(x, y);
        assert_relative_eq!(bx, 12.0, epsilon = 1e-9);
        assert_relative_eq!(by, -7.0, epsilon = 1e-9);
    }

    fn gradient_image(w: usize, h: usize) -> Image {
        let mut img = Image::new(w, h, ColorSpace::Gray);
        for y in 0..h {
            for x in 0..w {
                img.set(0, x, y, ((x * 7 + y * 13) % 97) as f32 / 96.0);
            }
        }
        img
    }

    #[test]
    fn pure_translation_warp_copies_pixels() {
        // landmarks shifted by (+10, +5) from the template: alignment
        // must shift content back by exactly that offset, so pixels copy
        // over up to least-squares rounding noise
        let img = gradient_image(120, 120);
        let pts: Vec<(f64, f64)> = (0..27)
            .map(|i| {
                let (tx, ty) = if i < 3 {
                    ALIGN_TEMPLATE[i]
                } else {
                    (40.0, 40.0 + i as f64)
                };
                ((tx + 10.0) * 300.0 / 120.0, (ty + 5.0) * 300.0 / 120.0)
            })
            .collect();
        let lm = Landmarks::new(pts).unwrap();
        let aligned = align_face(&img, Some(&lm), AlignmentMode::SimilarityWarp).unwrap();
        assert_eq!(aligned.width(), FACE_SIZE);
        for y in 10..80 {
            for x in 10..80 {
                let diff = (aligned.get(0, x, y) - img.get(0, x + 10, y + 5)).abs();
                assert!(diff < 1e-6, "{x},{y}: off by {diff}");
            }
        }
    }

    #[test]
    fn pre_aligned_checks_dimensions() {
        let ok = gradient_image(90, 90);
        assert!(align_face(&ok, None, AlignmentMode::PreAligned).is_ok());
        let bad = gradient_image(91, 90);
        assert!(matches!(
            align_face(&bad, None, AlignmentMode::PreAligned),
            Err(PipelineError::NotPreAligned { .. })
        ));
        assert!(matches!(
            align_face(&ok, None, AlignmentMode::SimilarityWarp),
            Err(PipelineError::MissingLandmarks)
        ));
    }

    #[test]
    fn degrade_dimensions_floor_then_expand() {
        let img = gradient_image(250, 130);
        let out = degrade(&img, 3).unwrap();
        assert_eq!((out.width(), out.height()), (249, 129));
        let exact = degrade(&gradient_image(90, 90), 3).unwrap();
        assert_eq!((exact.width(), exact.height()), (90, 90));
        assert!(matches!(
            degrade(&gradient_image(5, 5), 9),
            Err(PipelineError::TooSmall { .. })
        ));
        assert!(matches!(degrade(&img, 1), Err(PipelineError::BadFactor(1))));
    }

    #[test]
    fn degrade_preserves_constants_and_loses_detail() {
        let mut flat = Image::new(30, 30, ColorSpace::Gray);
        for v in flat.data_mut() {
            *v = 0.4;
        }
        let out = degrade(&flat, 3).unwrap();
        for &v in out.data() {
            assert_relative_eq!(v, 0.4, epsilon = 1e-6);
        }
        // a pixel checkerboard cannot survive a 3x round trip
        let mut checker = Image::new(30, 30, ColorSpace::Gray);
        for y in 0..30 {
            for x in 0..30 {
                checker.set(0, x, y, ((x + y) % 2) as f32);
            }
        }
        let blurred = degrade(&checker, 3).unwrap();
        let mse: f64 = checker
            .data()
            .iter()
            .zip(blurred.data())
            .map(|(&a, &b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / checker.data().len() as f64;
        assert!(mse > 0.05, "checkerboard survived degradation: {mse}");
    }

    #[test]
    fn baseline_process_is_align_plus_gray() {
        let mut img = Image::new(90, 90, ColorSpace::Rgb);
        for c in 0..3 {
            for y in 0..90 {
                for x in 0..90 {
                    img.set(c, x, y, ((x + y + c * 31) % 90) as f32 / 89.0);
                }
            }
        }
        let opt = ProcessOptions {
            variant: Variant::Baseline,
            alignment: AlignmentMode::PreAligned,
            scale_factor: 3,
            model: None,
        };
        let face = process_face(&img, None, &opt).unwrap();
        let want = to_gray(&img);
        assert_eq!(face.data(), want.data());
    }

    #[test]
    fn identity_restoration_equals_plain_degradation() {
        let img = gradient_image(90, 90);
        let identity = SrcnnModel::identity();
        let sr = ProcessOptions {
            variant: Variant::E1Sr,
            alignment: AlignmentMode::PreAligned,
            scale_factor: 3,
            model: Some(&identity),
        };
        let bicubic = ProcessOptions {
            variant: Variant::E1Bicubic,
            alignment: AlignmentMode::PreAligned,
            scale_factor: 3,
            model: None,
        };
        let a = process_face(&img, None, &sr).unwrap();
        let b = process_face(&img, None, &bicubic).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn e1_rejects_non_dividing_factor() {
        let img = gradient_image(90, 90);
        let opt = ProcessOptions {
            variant: Variant::E1Bicubic,
            alignment: AlignmentMode::PreAligned,
            scale_factor: 4,
            model: None,
        };
        assert!(matches!(
            process_face(&img, None, &opt),
            Err(PipelineError::BadConfig(_))
        ));
    }

    #[test]
    fn variant_tags_and_labels_are_fixed() {
        assert_eq!(Variant::Baseline.label(), "lfw3D");
        assert_eq!(Variant::E1Sr.label(), "lfw3D SR 3 channels");
        assert_eq!(Variant::E1Bicubic.label(), "lfw3D bicubic 3 channels");
        assert_eq!(Variant::E2Sr.label(), "lfw SR 3 channels orig.");
        assert_eq!(Variant::E2Bicubic.label(), "lfw bicubic 3 channels orig.");
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.tag()), Some(v));
        }
        assert_eq!(Variant::parse("e3_sr"), None);
    }

    #[test]
    fn highdim_frame_is_gray_300() {
        let img = gradient_image(120, 150);
        let frame = highdim_frame(&img).unwrap();
        assert_eq!(frame.channels(), 1);
        assert_eq!((frame.width(), frame.height()), (300, 300));
    }

    #[test]
    fn template_matches_canonical_layout() {
        for (i, &t) in ALIGN_TEMPLATE.iter().enumerate() {
            assert_eq!(t, crate::synth::CANONICAL_LANDMARKS[i]);
        }
    }
}
