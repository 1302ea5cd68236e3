//! Experiment driver: runs every requested variant and feature family
//! over a manifest, scores closed-set recognition per group, and writes
//! reports plus the extracted feature files.
//!
//! Failure policy: an unreadable gallery image removes its identity
//! from the group (its probes go with it); an unreadable probe is
//! dropped alone. Every removal is recorded. A group left without
//! gallery or probe images aborts the run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use crate::img::load_image;
use crate::lbp::{
    extract_highdim_lbp, extract_lbp, extract_mslbp, load_landmarks, pca_fit, pca_project,
    write_feature_file, FeatureKind, FeatureRecord, FeatureVector, FACE_SIZE,
};
use crate::matcher::{distance_matrix, Metric, Sample};
use crate::pipeline::{
    highdim_frame, process_face, AlignmentMode, PipelineError, ProcessOptions, Variant,
};
use crate::protocol::{
    aggregate, build_split, evaluate, load_manifest, GroupReport, GroupSplit, RecognitionReport,
};
use crate::srcnn::load_weights;

fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn default_kinds() -> Vec<FeatureKind> {
    vec![FeatureKind::Lbp, FeatureKind::MsLbp]
}

fn default_scale() -> usize {
    3
}

fn default_alignment() -> AlignmentMode {
    AlignmentMode::SimilarityWarp
}

fn default_landmark_pattern() -> String {
    "{stem}.landmarks.csv".into()
}

fn default_ranks() -> Vec<usize> {
    vec![1, 5, 10]
}

/// Experiment description, usually loaded from a JSON file. Image paths
/// in the manifest are resolved relative to the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_kinds")]
    pub feature_kinds: Vec<FeatureKind>,
    #[serde(default = "default_scale")]
    pub scale_factor: usize,
    #[serde(default)]
    pub weight_file: Option<PathBuf>,
    #[serde(default = "default_alignment")]
    pub alignment: AlignmentMode,
    /// Landmark file location; `{stem}` expands to the image path minus
    /// its extension.
    #[serde(default = "default_landmark_pattern")]
    pub landmark_pattern: String,
    #[serde(default = "default_ranks")]
    pub ranks: Vec<usize>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<ExperimentConfig, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: &str| Err(PipelineError::BadConfig(msg.into()));
        if self.variants.is_empty() {
            return bad("variants list is empty");
        }
        if self.variants.iter().collect::<HashSet<_>>().len() != self.variants.len() {
            return bad("variants list has duplicates");
        }
        if self.feature_kinds.is_empty() {
            return bad("feature kinds list is empty");
        }
        if self.feature_kinds.iter().collect::<HashSet<_>>().len() != self.feature_kinds.len() {
            return bad("feature kinds list has duplicates");
        }
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return bad("ranks must be non-empty and positive");
        }
        if !self.ranks.contains(&1) {
            return bad("ranks must include 1; summary tables report rank-1");
        }
        if self.scale_factor < 2 {
            return bad("scale factor must be at least 2");
        }
        if self.variants.iter().any(|v| v.uses_sr()) && self.weight_file.is_none() {
            return bad("restoration variants need a weight file");
        }
        let has_e1 = self
            .variants
            .iter()
            .any(|v| v.is_degraded() && !v.degrades_before_align());
        if has_e1 && !FACE_SIZE.is_multiple_of(self.scale_factor) {
            return bad("scale factor must divide 90 when degrading aligned faces");
        }
        if self.alignment == AlignmentMode::PreAligned
            && self.variants.iter().any(|v| v.degrades_before_align())
        {
            return bad("variants that degrade before alignment need landmark-based warping");
        }
        if !self.landmark_pattern.contains("{stem}") {
            return bad("landmark pattern must contain {stem}");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipNote {
    pub variant: String,
    pub kind: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exclusion {
    pub variant: String,
    /// Which preparation failed: "face" (aligned 90x90 flow) or
    /// "dense" (300x300 landmark flow).
    pub flow: String,
    pub group_id: u32,
    pub image_path: String,
    pub role: String,
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct ExperimentSummary {
    /// variant tag -> kind tag -> aggregated report.
    pub results: BTreeMap<String, BTreeMap<String, RecognitionReport>>,
    pub skipped: Vec<SkipNote>,
    pub exclusions: Vec<Exclusion>,
}

struct FlowOutcome<T> {
    gallery: Vec<(String, String, T)>,
    probes: Vec<(String, String, T)>,
}

fn landmark_path(root: &Path, pattern: &str, image_path: &str) -> PathBuf {
    let stem = image_path.rsplit_once('.').map_or(image_path, |(s, _)| s);
    root.join(pattern.replace("{stem}", stem))
}

/// Run `job` over gallery then probes in parallel, applying the
/// exclusion policy and recording what was dropped.
fn run_flow<T: Send>(
    split: &GroupSplit,
    job: impl Fn(&str) -> Result<T, String> + Sync,
    variant: Variant,
    flow: &str,
    exclusions: &mut Vec<Exclusion>,
) -> Result<FlowOutcome<T>, PipelineError> {
    let mut exclude = |path: &str, role: &str, reason: String| {
        exclusions.push(Exclusion {
            variant: variant.tag().into(),
            flow: flow.into(),
            group_id: split.group_id,
            image_path: path.into(),
            role: role.into(),
            reason,
        });
    };
    let outcomes: Vec<Result<T, String>> = split
        .gallery
        .par_iter()
        .map(|(path, _)| job(path))
        .collect();
    let mut dead: HashSet<&str> = HashSet::new();
    let mut gallery = Vec::new();
    for ((path, identity), outcome) in split.gallery.iter().zip(outcomes) {
        match outcome {
            Ok(t) => gallery.push((path.clone(), identity.clone(), t)),
            Err(reason) => {
                dead.insert(identity.as_str());
                exclude(path, "gallery", reason);
            }
        }
    }
    let outcomes: Vec<Result<T, String>> =
        split.probes.par_iter().map(|(path, _)| job(path)).collect();
    let mut probes = Vec::new();
    for ((path, identity), outcome) in split.probes.iter().zip(outcomes) {
        if dead.contains(identity.as_str()) {
            exclude(
                path,
                "probe",
                "gallery image for this identity was excluded".into(),
            );
            continue;
        }
        match outcome {
            Ok(t) => probes.push((path.clone(), identity.clone(), t)),
            Err(reason) => exclude(path, "probe", reason),
        }
    }
    if gallery.is_empty() {
        return Err(PipelineError::EmptyGroup {
            group: split.group_id,
            role: "gallery",
        });
    }
    if probes.is_empty() {
        return Err(PipelineError::EmptyGroup {
            group: split.group_id,
            role: "probe",
        });
    }
    Ok(FlowOutcome { gallery, probes })
}

fn face_job(
    root: &Path,
    path: &str,
    opt: &ProcessOptions,
    needs_landmarks: bool,
    pattern: &str,
) -> Result<crate::img::Image, String> {
    let img = load_image(&root.join(path)).map_err(|e| e.to_string())?;
    let lm = if needs_landmarks {
        Some(load_landmarks(&landmark_path(root, pattern, path)).map_err(|e| e.to_string())?)
    } else {
        None
    };
    process_face(&img, lm.as_ref(), opt).map_err(|e| e.to_string())
}

fn dense_job(root: &Path, path: &str, pattern: &str) -> Result<FeatureVector, String> {
    let img = load_image(&root.join(path)).map_err(|e| e.to_string())?;
    let lm = load_landmarks(&landmark_path(root, pattern, path)).map_err(|e| e.to_string())?;
    let frame = highdim_frame(&img).map_err(|e| e.to_string())?;
    extract_highdim_lbp(&frame, &lm).map_err(|e| e.to_string())
}

fn extract_from_faces(
    kind: FeatureKind,
    faces: &FlowOutcome<crate::img::Image>,
) -> Result<FlowOutcome<FeatureVector>, PipelineError> {
    let extract = |list: &[(String, String, crate::img::Image)]| {
        list.par_iter()
            .map(|(path, identity, face)| {
                let fv = match kind {
                    FeatureKind::Lbp => extract_lbp(face)?,
                    FeatureKind::MsLbp => extract_mslbp(face)?,
                    _ => unreachable!("dense kinds take the landmark flow"),
                };
                Ok((path.clone(), identity.clone(), fv))
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    };
    Ok(FlowOutcome {
        gallery: extract(&faces.gallery)?,
        probes: extract(&faces.probes)?,
    })
}

/// Reduced dimensionality for the projected dense features.
pub const PCA_DIM: usize = 400;

fn score_kind(
    variant: Variant,
    kind: FeatureKind,
    group_id: u32,
    feats: &FlowOutcome<FeatureVector>,
    ranks: &[usize],
    features_dir: &Path,
) -> Result<GroupReport, PipelineError> {
    let raw = |list: &[(String, String, FeatureVector)]| -> Vec<Vec<f32>> {
        list.iter().map(|(_, _, f)| f.values().to_vec()).collect()
    };
    let (gallery_vals, probe_vals, metric, keep_layout) = if kind == FeatureKind::HighDimPca {
        let train = raw(&feats.gallery);
        let out_dim = PCA_DIM
            .min(feats.gallery.len().saturating_sub(1))
            .min(train[0].len());
        let model = pca_fit(&train, out_dim)?;
        let project = |list: &[(String, String, FeatureVector)]| {
            list.iter()
                .map(|(_, _, f)| pca_project(&model, f.values()))
                .collect::<Result<Vec<_>, _>>()
        };
        // projected coordinates go negative; chi-square no longer applies
        (
            project(&feats.gallery)?,
            project(&feats.probes)?,
            Metric::Euclidean,
            false,
        )
    } else {
        (
            raw(&feats.gallery),
            raw(&feats.probes),
            Metric::ChiSquare,
            true,
        )
    };

    for (role, list, vals) in [
        ("gallery", &feats.gallery, &gallery_vals),
        ("probe", &feats.probes, &probe_vals),
    ] {
        let records: Vec<FeatureRecord> = list
            .iter()
            .zip(vals)
            .map(|((path, _, fv), values)| FeatureRecord {
                image_id: path.clone(),
                kind,
                layout: if keep_layout {
                    fv.layout().to_vec()
                } else {
                    Vec::new()
                },
                values: values.clone(),
            })
            .collect();
        let name = format!(
            "{}_{}_group{}_{}.fvb",
            variant.tag(),
            kind.as_str(),
            group_id,
            role
        );
        write_feature_file(&records, &features_dir.join(name))?;
    }

    let to_samples = |list: &[(String, String, FeatureVector)], vals: &[Vec<f32>]| {
        list.iter()
            .zip(vals)
            .map(|((path, _, _), values)| Sample {
                id: path.clone(),
                values: values.clone(),
            })
            .collect::<Vec<_>>()
    };
    let dm = distance_matrix(
        &to_samples(&feats.probes, &probe_vals),
        &to_samples(&feats.gallery, &gallery_vals),
        metric,
    )?;
    let split = GroupSplit {
        group_id,
        gallery: feats
            .gallery
            .iter()
            .map(|(p, i, _)| (p.clone(), i.clone()))
            .collect(),
        probes: feats
            .probes
            .iter()
            .map(|(p, i, _)| (p.clone(), i.clone()))
            .collect(),
    };
    Ok(evaluate(&dm, &split, ranks)?)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary, PipelineError> {
    config.validate()?;
    let root = config
        .manifest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let manifest = load_manifest(&config.manifest)?;
    let splits = build_split(&manifest)?;
    let model = match &config.weight_file {
        Some(path) if config.variants.iter().any(|v| v.uses_sr()) => Some(load_weights(path)?),
        _ => None,
    };
    let features_dir = config.output_dir.join("features");
    std::fs::create_dir_all(&features_dir).map_err(|source| PipelineError::Io {
        path: features_dir.display().to_string(),
        source,
    })?;

    let mut results: BTreeMap<String, BTreeMap<String, RecognitionReport>> = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut exclusions = Vec::new();

    for &variant in &config.variants {
        let mut face_kinds = Vec::new();
        let mut dense_kinds = Vec::new();
        for &kind in &config.feature_kinds {
            match kind {
                FeatureKind::Lbp | FeatureKind::MsLbp => face_kinds.push(kind),
                FeatureKind::HighDim | FeatureKind::HighDimPca => {
                    if variant == Variant::Baseline {
                        dense_kinds.push(kind);
                    } else {
                        skipped.push(SkipNote {
                            variant: variant.tag().into(),
                            kind: kind.as_str().into(),
                            reason: "dense landmark features are extracted from full-resolution frames only".into(),
                        });
                    }
                }
            }
        }
        let mut kind_groups: BTreeMap<FeatureKind, Vec<GroupReport>> = BTreeMap::new();
        for split in &splits {
            if !face_kinds.is_empty() {
                let opt = ProcessOptions {
                    variant,
                    alignment: config.alignment,
                    scale_factor: config.scale_factor,
                    model: model.as_ref(),
                };
                let needs_landmarks = config.alignment == AlignmentMode::SimilarityWarp;
                let faces = run_flow(
                    split,
                    |path| face_job(&root, path, &opt, needs_landmarks, &config.landmark_pattern),
                    variant,
                    "face",
                    &mut exclusions,
                )?;
                for &kind in &face_kinds {
                    let feats = extract_from_faces(kind, &faces)?;
                    let report = score_kind(
                        variant,
                        kind,
                        split.group_id,
                        &feats,
                        &config.ranks,
                        &features_dir,
                    )?;
                    kind_groups.entry(kind).or_default().push(report);
                }
            }
            if !dense_kinds.is_empty() {
                let feats = run_flow(
                    split,
                    |path| dense_job(&root, path, &config.landmark_pattern),
                    variant,
                    "dense",
                    &mut exclusions,
                )?;
                for &kind in &dense_kinds {
                    let report = score_kind(
                        variant,
                        kind,
                        split.group_id,
                        &feats,
                        &config.ranks,
                        &features_dir,
                    )?;
                    kind_groups.entry(kind).or_default().push(report);
                }
            }
        }
        for (kind, groups) in kind_groups {
            let report = aggregate(groups)?;
            results
                .entry(variant.tag().to_string())
                .or_default()
                .insert(kind.as_str().to_string(), report);
        }
    }

    let summary = ExperimentSummary {
        results,
        skipped,
        exclusions,
    };
    write_report_json(config, &summary)?;
    write_rank1_summary(config, &summary)?;
    write_baseline_features(config, &summary)?;
    write_variant_plot(config, &summary)?;
    Ok(summary)
}

const KIND_ORDER: [FeatureKind; 4] = [
    FeatureKind::Lbp,
    FeatureKind::MsLbp,
    FeatureKind::HighDim,
    FeatureKind::HighDimPca,
];

fn kind_label(kind: FeatureKind) -> &'static str {
    match kind {
        FeatureKind::Lbp => "LBP",
        FeatureKind::MsLbp => "Multi-Scale LBP",
        FeatureKind::HighDim => "High-dim LBP",
        FeatureKind::HighDimPca => "High-dim LBP PCA",
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn rank1_percent(summary: &ExperimentSummary, variant: Variant, kind: FeatureKind) -> Option<f64> {
    summary
        .results
        .get(variant.tag())?
        .get(kind.as_str())?
        .rate(1)
        .map(|r| r * 100.0)
}

fn write_report_json(
    config: &ExperimentConfig,
    summary: &ExperimentSummary,
) -> Result<(), PipelineError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a ExperimentConfig,
        results: &'a BTreeMap<String, BTreeMap<String, RecognitionReport>>,
        skipped: &'a [SkipNote],
        exclusions: &'a [Exclusion],
    }
    let mut text = serde_json::to_string_pretty(&Doc {
        config,
        results: &summary.results,
        skipped: &summary.skipped,
        exclusions: &summary.exclusions,
    })?;
    text.push('\n');
    write_text(&config.output_dir.join("report.json"), &text)
}

/// Rank-1 rates for the aligned-face features across variants, one row
/// per processing order.
fn write_rank1_summary(
    config: &ExperimentConfig,
    summary: &ExperimentSummary,
) -> Result<(), PipelineError> {
    let kinds: Vec<FeatureKind> = KIND_ORDER
        .iter()
        .copied()
        .filter(|k| {
            matches!(k, FeatureKind::Lbp | FeatureKind::MsLbp) && config.feature_kinds.contains(k)
        })
        .collect();
    let mut out = String::from("variant");
    for &k in &kinds {
        out.push(',');
        out.push_str(kind_label(k));
    }
    out.push('\n');
    for v in Variant::ALL {
        if !config.variants.contains(&v) {
            continue;
        }
        out.push_str(v.label());
        for &k in &kinds {
            match rank1_percent(summary, v, k) {
                Some(pct) => out.push_str(&format!(",{pct:.2}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    write_text(&config.output_dir.join("rank1_summary.csv"), &out)
}

/// Rank-1 rates of every feature family at full resolution.
fn write_baseline_features(
    config: &ExperimentConfig,
    summary: &ExperimentSummary,
) -> Result<(), PipelineError> {
    if !config.variants.contains(&Variant::Baseline) {
        return Ok(());
    }
    let mut out = String::from("feature,rank1_percent\n");
    for k in KIND_ORDER {
        if !config.feature_kinds.contains(&k) {
            continue;
        }
        if let Some(pct) = rank1_percent(summary, Variant::Baseline, k) {
            out.push_str(&format!("{},{pct:.2}\n", kind_label(k)));
        }
    }
    write_text(&config.output_dir.join("baseline_features.csv"), &out)
}

/// Long-format rates for every variant, kind, and rank.
fn write_variant_plot(
    config: &ExperimentConfig,
    summary: &ExperimentSummary,
) -> Result<(), PipelineError> {
    let mut out = String::from("variant,label,kind,rank,rate_percent\n");
    for v in Variant::ALL {
        if !config.variants.contains(&v) {
            continue;
        }
        for k in KIND_ORDER {
            if !config.feature_kinds.contains(&k) {
                continue;
            }
            let Some(report) = summary.results.get(v.tag()).and_then(|m| m.get(k.as_str())) else {
                continue;
            };
            for (&rank, &rate) in &report.averaged {
                out.push_str(&format!(
                    "{},{},{},{rank},{:.2}\n",
                    v.tag(),
                    v.label(),
                    k.as_str(),
                    rate * 100.0
                ));
            }
        }
    }
    write_text(&config.output_dir.join("variant_plot.csv"), &out)
}
