//! Deterministic synthetic corpus generator.
//!
//! Identities are analytic textures (sinusoidal gratings plus soft
//! blobs) rendered inside a fixed face layout (eyes, nose, mouth) on a
//! 90-unit face frame, composited over a smooth background. Probes
//! re-render the same identity under a small pose perturbation plus
//! pixel noise, and optionally store imprecise landmarks, so
//! recognition difficulty is controlled by three knobs. Everything is
//! seeded; the same seed yields byte-identical corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

use crate::img::{save_image, ColorSpace, Image, ImageError};
use crate::lbp::{save_landmarks, Landmarks, LbpError, FACE_SIZE, LANDMARK_COUNT};
use crate::protocol::{save_manifest, Manifest, ManifestEntry, ProtocolError, Role};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad corpus config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Landmarks(#[from] LbpError),
    #[error(transparent)]
    Manifest(#[from] ProtocolError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Canonical landmark layout on the 90x90 face frame. The first three
/// are left eye, right eye, and mouth center; the rest trace brows,
/// nose, lips, and the jaw contour.
pub const CANONICAL_LANDMARKS: [(f64, f64); LANDMARK_COUNT] = [
    (27.0, 33.0),
    (63.0, 33.0),
    (45.0, 66.0),
    (20.0, 33.0),
    (34.0, 33.0),
    (56.0, 33.0),
    (70.0, 33.0),
    (27.0, 24.0),
    (63.0, 24.0),
    (45.0, 40.0),
    (45.0, 52.0),
    (38.0, 54.0),
    (52.0, 54.0),
    (32.0, 66.0),
    (58.0, 66.0),
    (45.0, 61.0),
    (45.0, 71.0),
    (12.0, 36.0),
    (14.0, 50.0),
    (18.0, 62.0),
    (26.0, 74.0),
    (36.0, 82.0),
    (45.0, 84.0),
    (54.0, 82.0),
    (64.0, 74.0),
    (72.0, 62.0),
    (78.0, 48.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusMode {
    /// 90x90 images, face frame equals image frame.
    Aligned,
    /// Larger frames with the face embedded at reduced scale; landmark
    /// files locate it.
    Full,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub groups: u32,
    pub identities_per_group: u32,
    pub probes_per_identity: u32,
    pub mode: CorpusMode,
    /// Frame side for `Full` mode; ignored when aligned.
    pub image_size: usize,
    /// Pose perturbation strength for probes; 0 reproduces the gallery
    /// image exactly (when `noise` is also 0).
    pub jitter: f64,
    /// Half-width of uniform pixel noise added to probes.
    pub noise: f64,
    /// Half-width of uniform error added to stored probe landmarks, in
    /// reference-frame (300 px) units. Gallery landmarks stay exact.
    /// Models detector error: alignment of noisy probes is imperfect.
    pub landmark_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            groups: 2,
            identities_per_group: 8,
            probes_per_identity: 2,
            mode: CorpusMode::Full,
            image_size: 150,
            jitter: 1.0,
            noise: 0.01,
            landmark_noise: 0.0,
            seed: 7,
        }
    }
}

struct Grating {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

struct Blob {
    cx: f64,
    cy: f64,
    r2: f64,
    amp: [f64; 3],
}

struct FaceParams {
    base: [f64; 3],
    gratings: Vec<Grating>,
    blobs: Vec<Blob>,
    bg: [[f64; 3]; 3],
}

fn sample_face_params(rng: &mut ChaCha8Rng) -> FaceParams {
    let mut base = [0.0; 3];
    for b in &mut base {
        *b = 0.5 + rng.gen_range(-0.08..0.08);
    }
    // identity energy sits in short wavelengths so losing resolution
    // costs discriminative signal: the finest band dies under any
    // downsampling, the mid band blurs but stays recoverable, and the
    // coarse blobs are kept weak
    let gratings = (0..7)
        .map(|i| {
            let wavelength = if i < 3 {
                rng.gen_range(4.0..6.0)
            } else {
                rng.gen_range(6.0..12.0)
            };
            let angle = rng.gen_range(0.0..PI);
            let f = 1.0 / wavelength;
            let a = rng.gen_range(0.045..0.085);
            let mut amp = [0.0; 3];
            for v in &mut amp {
                *v = a * rng.gen_range(0.55..1.0);
            }
            Grating {
                fx: f * angle.cos(),
                fy: f * angle.sin(),
                phase: rng.gen_range(0.0..2.0 * PI),
                amp,
            }
        })
        .collect();
    let blobs = (0..3)
        .map(|_| {
            let r = rng.gen_range(7.0..18.0);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let a = sign * rng.gen_range(0.025..0.06);
            let mut amp = [0.0; 3];
            for v in &mut amp {
                *v = a * rng.gen_range(0.6..1.0);
            }
            Blob {
                cx: rng.gen_range(18.0..72.0),
                cy: rng.gen_range(18.0..72.0),
                r2: r * r,
                amp,
            }
        })
        .collect();
    let mut bg = [[0.0; 3]; 3];
    #[allow(clippy::needless_range_loop)]
    for c in 0..3 {
        bg[0][c] = 0.25 + rng.gen_range(-0.1..0.1);
        bg[1][c] = rng.gen_range(-0.12..0.12);
        bg[2][c] = rng.gen_range(-0.12..0.12);
    }
    FaceParams {
        base,
        gratings,
        blobs,
        bg,
    }
}

/// Identity texture at face-frame point (u, v), one channel, with the
/// shared eye/nose/mouth layout stamped on top.
fn face_texture(p: &FaceParams, u: f64, v: f64, c: usize) -> f64 {
    let mut t = p.base[c];
    for g in &p.gratings {
        t += g.amp[c] * (2.0 * PI * (g.fx * u + g.fy * v) + g.phase).sin();
    }
    for b in &p.blobs {
        let d2 = (u - b.cx) * (u - b.cx) + (v - b.cy) * (v - b.cy);
        t += b.amp[c] * (-d2 / b.r2).exp();
    }
    // nose highlight
    let dn = (u - 45.0) * (u - 45.0) + (v - 52.0) * (v - 52.0);
    t += 0.10 * (-dn / 25.0).exp();
    // eye pits
    for ex in [27.0, 63.0] {
        let de = (u - ex) * (u - ex) + (v - 33.0) * (v - 33.0);
        t -= 0.32 * (-de / 20.25).exp();
    }
    // mouth bar
    let mx = (u - 45.0) * (u - 45.0) / 81.0;
    let my = (v - 66.0) * (v - 66.0) / 12.25;
    t -= 0.28 * (-(mx + my)).exp();
    t.clamp(0.02, 0.98)
}

/// Face-ellipse coverage in [0, 1] with a cosine-ramped rim.
fn face_alpha(u: f64, v: f64) -> f64 {
    let q = (u - 45.0) * (u - 45.0) / (38.0 * 38.0) + (v - 46.0) * (v - 46.0) / (42.0 * 42.0);
    if q <= 0.85 {
        1.0
    } else if q >= 1.15 {
        0.0
    } else {
        0.5 + 0.5 * (PI * (q - 0.85) / 0.3).cos()
    }
}

fn background(p: &FaceParams, x: f64, y: f64, w: f64, h: f64, c: usize) -> f64 {
    (p.bg[0][c] + p.bg[1][c] * x / w + p.bg[2][c] * y / h).clamp(0.02, 0.98)
}

/// Similarity placement of the face frame inside an image: the frame
/// center (45, 45) lands at (cx + dx, cy + dy), rotated and scaled.
#[derive(Debug, Clone, Copy)]
pub struct Pose {
    pub scale: f64,
    pub rotation: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Pose {
    fn neutral(scale: f64) -> Pose {
        Pose {
            scale,
            rotation: 0.0,
            dx: 0.0,
            dy: 0.0,
        }
    }

    fn jittered(scale: f64, jitter: f64, rng: &mut ChaCha8Rng) -> Pose {
        let rotation = rng.gen_range(-0.10..0.10) * jitter;
        let ds = 1.0 + rng.gen_range(-0.06..0.06) * jitter;
        let dx = rng.gen_range(-2.5..2.5) * jitter;
        let dy = rng.gen_range(-2.5..2.5) * jitter;
        Pose {
            scale: scale * ds,
            rotation,
            dx,
            dy,
        }
    }

    /// Image point of a face-frame point.
    fn forward(&self, cx: f64, cy: f64, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        let (du, dv) = (u - 45.0, v - 45.0);
        (
            cx + self.dx + self.scale * (c * du - s * dv),
            cy + self.dy + self.scale * (s * du + c * dv),
        )
    }

    /// Face-frame point of an image point.
    fn inverse(&self, cx: f64, cy: f64, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = (x - cx - self.dx, y - cy - self.dy);
        (
            45.0 + (c * dx + s * dy) / self.scale,
            45.0 + (-s * dx + c * dy) / self.scale,
        )
    }
}

fn render_face(p: &FaceParams, pose: &Pose, width: usize, height: usize) -> Image {
    let mut img = Image::new(width, height, ColorSpace::Rgb);
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = pose.inverse(cx, cy, x as f64, y as f64);
            let a = face_alpha(u, v);
            for c in 0..3 {
                let bg = background(p, x as f64, y as f64, width as f64, height as f64, c);
                let val = if a == 0.0 {
                    bg
                } else {
                    let t = face_texture(p, u, v, c);
                    bg + a * (t - bg)
                };
                img.set(c, x, y, val as f32);
            }
        }
    }
    img
}

/// Landmarks for a posed face, stored in the 300x300 reference frame
/// (x scaled by 300/width, y by 300/height).
fn posed_landmarks(pose: &Pose, width: usize, height: usize) -> Landmarks {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let pts = CANONICAL_LANDMARKS.map(|(u, v)| {
        let (x, y) = pose.forward(cx, cy, u, v);
        (x * 300.0 / width as f64, y * 300.0 / height as f64)
    });
    Landmarks::new(pts.to_vec()).expect("canonical landmarks are finite")
}

fn add_noise(img: &mut Image, half_width: f64, rng: &mut ChaCha8Rng) {
    if half_width == 0.0 {
        return;
    }
    for c in 0..img.color().channels() {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let n = rng.gen_range(-half_width..half_width);
                let v = (img.get(c, x, y) as f64 + n).clamp(0.0, 1.0);
                img.set(c, x, y, v as f32);
            }
        }
    }
}

/// Generate a corpus under `out_dir`: PNGs plus one landmark CSV per
/// image under images/, and manifest.csv at the top. Returns the
/// manifest that was written.
pub fn generate_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<Manifest, SynthError> {
    if cfg.groups == 0 || cfg.identities_per_group == 0 || cfg.probes_per_identity == 0 {
        return Err(SynthError::BadConfig(
            "groups, identities, and probes must all be positive".into(),
        ));
    }
    if cfg.identities_per_group < 2 {
        return Err(SynthError::BadConfig(
            "need at least 2 identities per group".into(),
        ));
    }
    let (width, height, nominal_scale) = match cfg.mode {
        CorpusMode::Aligned => (FACE_SIZE, FACE_SIZE, 1.0),
        CorpusMode::Full => {
            if cfg.image_size < 120 {
                return Err(SynthError::BadConfig(
                    "full-mode frames must be at least 120 px".into(),
                ));
            }
            (cfg.image_size, cfg.image_size, 0.7)
        }
    };
    if !(0.0..=1.0).contains(&cfg.jitter) || !(0.0..=0.2).contains(&cfg.noise) {
        return Err(SynthError::BadConfig(
            "jitter must be in [0,1] and noise in [0,0.2]".into(),
        ));
    }
    if !(0.0..=10.0).contains(&cfg.landmark_noise) {
        return Err(SynthError::BadConfig(
            "landmark noise must be in [0,10] reference-frame pixels".into(),
        ));
    }
    let io_err = |path: &Path, source: std::io::Error| SynthError::Io {
        path: path.display().to_string(),
        source,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entries = Vec::new();
    for g in 1..=cfg.groups {
        let group_dir = out_dir.join("images").join(format!("g{g}"));
        std::fs::create_dir_all(&group_dir).map_err(|e| io_err(&group_dir, e))?;
        for i in 0..cfg.identities_per_group {
            let identity = format!("id{g:02}_{i:03}");
            let params = sample_face_params(&mut rng);
            let mut shots = vec![(
                format!("{identity}_gallery"),
                Pose::neutral(nominal_scale),
                Role::Gallery,
            )];
            for k in 0..cfg.probes_per_identity {
                shots.push((
                    format!("{identity}_probe{k}"),
                    Pose::jittered(nominal_scale, cfg.jitter, &mut rng),
                    Role::Probe,
                ));
            }
            for (stem, pose, role) in shots {
                let mut img = render_face(&params, &pose, width, height);
                if role == Role::Probe {
                    add_noise(&mut img, cfg.noise, &mut rng);
                }
                let rel = format!("images/g{g}/{stem}.png");
                save_image(&img, &out_dir.join(&rel))?;
                let mut lm = posed_landmarks(&pose, width, height);
                if role == Role::Probe && cfg.landmark_noise > 0.0 {
                    let pts = lm
                        .points()
                        .iter()
                        .map(|&(x, y)| {
                            (
                                x + rng.gen_range(-cfg.landmark_noise..cfg.landmark_noise),
                                y + rng.gen_range(-cfg.landmark_noise..cfg.landmark_noise),
                            )
                        })
                        .collect();
                    lm = Landmarks::new(pts).expect("perturbed landmarks stay finite");
                }
                save_landmarks(
                    &lm,
                    &out_dir.join(format!("images/g{g}/{stem}.landmarks.csv")),
                )?;
                entries.push(ManifestEntry {
                    image_path: rel,
                    identity_id: identity.clone(),
                    group_id: g,
                    role,
                });
            }
        }
    }
    let manifest = Manifest::new(entries)?;
    save_manifest(&manifest, &out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Seeded grayscale texture in the same family as the face surfaces:
/// gratings, soft blobs, and two smoothed step edges. Used to build
/// training material for the restoration model.
pub fn texture_image(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Image {
    let base = 0.5 + rng.gen_range(-0.05..0.05);
    let gratings: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let f = 1.0 / rng.gen_range(4.0..22.0);
            let angle = rng.gen_range(0.0..PI);
            (
                f * angle.cos(),
                f * angle.sin(),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.04..0.08),
            )
        })
        .collect();
    let blobs: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            let r = rng.gen_range(5.0..15.0);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (
                rng.gen_range(0.0..width as f64),
                rng.gen_range(0.0..height as f64),
                r * r,
                sign * rng.gen_range(0.06..0.12),
            )
        })
        .collect();
    let bars: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            let angle = rng.gen_range(0.0..PI);
            let cx = rng.gen_range(0.2..0.8) * width as f64;
            let cy = rng.gen_range(0.2..0.8) * height as f64;
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let amp = sign * rng.gen_range(0.08..0.15);
            // store the line normal and its offset
            (
                angle.cos(),
                angle.sin(),
                angle.cos() * cx + angle.sin() * cy,
                amp,
            )
        })
        .collect();
    let mut img = Image::new(width, height, ColorSpace::Gray);
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64, y as f64);
            let mut t = base;
            for &(fx, fy, phase, amp) in &gratings {
                t += amp * (2.0 * PI * (fx * xf + fy * yf) + phase).sin();
            }
            for &(cx, cy, r2, amp) in &blobs {
                let d2 = (xf - cx) * (xf - cx) + (yf - cy) * (yf - cy);
                t += amp * (-d2 / r2).exp();
            }
            for &(nx, ny, off, amp) in &bars {
                let d = nx * xf + ny * yf - off;
                t += amp * (d / 1.2).tanh();
            }
            img.set(0, x, y, t.clamp(0.02, 0.98) as f32);
        }
    }
    img
}
