//! Building blocks for closed-set face recognition on low-resolution images.
//!
//! The pipeline this crate implements:
//!
//! 1. [`img`]: planar float images, bicubic rescaling, grayscale, PSNR.
//! 2. [`srcnn`]: small convolutional super-resolution models, weight file
//!    I/O, and a desk-scale SGD trainer with analytic gradients.
//! 3. [`lbp`]: uniform LBP(8,2) code images and three block-histogram
//!    feature families (single-scale, multi-scale, landmark patches),
//!    plus PCA reduction.
//! 4. [`matcher`]: chi-square nearest-neighbor matching and distance
//!    matrices.
//! 5. [`protocol`]: gallery/probe manifests, per-group closed-set
//!    evaluation, rank-k recognition reports.
//! 6. [`pipeline`]: face alignment, degradation/restoration variants, and
//!    the experiment runner that ties everything together.
//! 7. [`synth`]: seeded synthetic corpora for end-to-end testing.

pub mod img;
pub mod lbp;
pub mod matcher;
pub mod pipeline;
pub mod protocol;
pub mod srcnn;
pub mod synth;

pub use img::{bicubic_resize, load_image, psnr, save_image, to_gray, ColorSpace, Image};
pub use lbp::{extract_highdim_lbp, extract_lbp, extract_mslbp, FeatureKind, FeatureVector};
pub use matcher::{chi_square, distance_matrix, DistanceMatrix, Metric};
pub use protocol::{evaluate, load_manifest, Manifest, RecognitionReport};
pub use srcnn::SrcnnModel;
