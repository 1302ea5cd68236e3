//! Closed-set identification protocol: group manifests, gallery/probe
//! splits, and cumulative-match rates averaged over groups.
//!
//! A manifest row assigns one image to a group as either the gallery
//! image for an identity or a probe of that identity. Groups are
//! numbered 1..=G with no gaps, every gallery identity appears once per
//! group, and every probe identity must be enrolled in its group's
//! gallery (the set is closed).

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use thiserror::Error;

use crate::matcher::{rank_gallery, DistanceMatrix};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("manifest {path}: {msg}")]
    FileFormat { path: String, msg: String },
    #[error("manifest {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("group ids must cover 1..={expected} with no gaps; found {found}")]
    GroupGap { expected: u32, found: u32 },
    #[error("group {group}: duplicate image path `{path}`")]
    DuplicatePath { group: u32, path: String },
    #[error("group {group}: identity `{identity}` enrolled twice")]
    DuplicateGalleryIdentity { group: u32, identity: String },
    #[error("group {group}: probe identity `{identity}` not in gallery")]
    UnknownProbeIdentity { group: u32, identity: String },
    #[error("group {group}: no {role} entries")]
    EmptyRole { group: u32, role: &'static str },
    #[error("manifest has no entries")]
    EmptyManifest,
    #[error("distance matrix {side} ids do not match the split")]
    IdMismatch { side: &'static str },
    #[error("rank list must be non-empty with every rank >= 1")]
    BadRanks,
    #[error("group reports disagree on rank set")]
    RankSetMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "gallery")]
    Gallery,
    #[serde(rename = "probe")]
    Probe,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Gallery => "gallery",
            Role::Probe => "probe",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "gallery" => Some(Role::Gallery),
            "probe" => Some(Role::Probe),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_path: String,
    pub identity_id: String,
    pub group_id: u32,
    pub role: Role,
}

/// Validated manifest: entries in file order, groups contiguous from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
    group_count: u32,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Manifest, ProtocolError> {
        if entries.is_empty() {
            return Err(ProtocolError::EmptyManifest);
        }
        let groups: HashSet<u32> = entries.iter().map(|e| e.group_id).collect();
        let max = *groups.iter().max().unwrap();
        if groups.len() as u32 != max || !groups.contains(&1) {
            return Err(ProtocolError::GroupGap {
                expected: groups.len() as u32,
                found: max,
            });
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert((e.group_id, e.image_path.clone())) {
                return Err(ProtocolError::DuplicatePath {
                    group: e.group_id,
                    path: e.image_path.clone(),
                });
            }
        }
        Ok(Manifest {
            entries,
            group_count: max,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn group_count(&self) -> u32 {
        self.group_count
    }
}

const MANIFEST_HEADER: [&str; 4] = ["image_path", "identity_id", "group_id", "role"];

pub fn load_manifest(path: &Path) -> Result<Manifest, ProtocolError> {
    let fmt_err = |msg: String| ProtocolError::FileFormat {
        path: path.display().to_string(),
        msg,
    };
    let io_err = |source: std::io::Error| ProtocolError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut reader =
        csv::ReaderBuilder::new()
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(source) => io_err(source),
                other => fmt_err(format!("{other:?}")),
            })?;
    {
        let headers = reader.headers().map_err(|e| fmt_err(e.to_string()))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != MANIFEST_HEADER {
            return Err(fmt_err(format!(
                "header must be {}, got {}",
                MANIFEST_HEADER.join(","),
                got.join(",")
            )));
        }
    }
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fmt_err(e.to_string()))?;
        let row = i + 2;
        if record.len() != 4 {
            return Err(fmt_err(format!("row {row}: expected 4 fields")));
        }
        let group_id: u32 = record[2]
            .parse()
            .map_err(|e| fmt_err(format!("row {row}: group id: {e}")))?;
        let role = Role::parse(&record[3])
            .ok_or_else(|| fmt_err(format!("row {row}: unknown role `{}`", &record[3])))?;
        if record[0].is_empty() || record[1].is_empty() {
            return Err(fmt_err(format!("row {row}: empty field")));
        }
        entries.push(ManifestEntry {
            image_path: record[0].to_string(),
            identity_id: record[1].to_string(),
            group_id,
            role,
        });
    }
    Manifest::new(entries)
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<(), ProtocolError> {
    let io_err = |source: std::io::Error| ProtocolError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = String::from("image_path,identity_id,group_id,role\n");
    for e in manifest.entries() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.image_path,
            e.identity_id,
            e.group_id,
            e.role.as_str()
        ));
    }
    std::fs::write(path, out).map_err(io_err)
}

/// One group's enrollment lists, in manifest order. Pairs are
/// (image_path, identity_id).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSplit {
    pub group_id: u32,
    pub gallery: Vec<(String, String)>,
    pub probes: Vec<(String, String)>,
}

/// Split a manifest into per-group gallery and probe lists, enforcing
/// the closed-set rules.
pub fn build_split(manifest: &Manifest) -> Result<Vec<GroupSplit>, ProtocolError> {
    let mut splits: Vec<GroupSplit> = (1..=manifest.group_count())
        .map(|group_id| GroupSplit {
            group_id,
            gallery: Vec::new(),
            probes: Vec::new(),
        })
        .collect();
    for e in manifest.entries() {
        let split = &mut splits[(e.group_id - 1) as usize];
        let pair = (e.image_path.clone(), e.identity_id.clone());
        match e.role {
            Role::Gallery => split.gallery.push(pair),
            Role::Probe => split.probes.push(pair),
        }
    }
    for split in &splits {
        if split.gallery.is_empty() {
            return Err(ProtocolError::EmptyRole {
                group: split.group_id,
                role: "gallery",
            });
        }
        if split.probes.is_empty() {
            return Err(ProtocolError::EmptyRole {
                group: split.group_id,
                role: "probe",
            });
        }
        let mut enrolled = HashSet::new();
        for (_, identity) in &split.gallery {
            if !enrolled.insert(identity.as_str()) {
                return Err(ProtocolError::DuplicateGalleryIdentity {
                    group: split.group_id,
                    identity: identity.clone(),
                });
            }
        }
        for (_, identity) in &split.probes {
            if !enrolled.contains(identity.as_str()) {
                return Err(ProtocolError::UnknownProbeIdentity {
                    group: split.group_id,
                    identity: identity.clone(),
                });
            }
        }
    }
    Ok(splits)
}

/// Match rates for one group at each requested rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group_id: u32,
    pub probe_count: usize,
    /// rank -> fraction of probes whose true identity appears within
    /// the top `rank` gallery entries.
    pub rates: BTreeMap<usize, f64>,
}

/// Per-group reports plus the unweighted mean rate over groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub per_group: Vec<GroupReport>,
    pub averaged: BTreeMap<usize, f64>,
}

impl RecognitionReport {
    pub fn rate(&self, rank: usize) -> Option<f64> {
        self.averaged.get(&rank).copied()
    }
}

/// Score one group. The distance matrix rows must correspond to
/// `split.probes` and its columns to `split.gallery`, in order; id
/// strings are checked against the image paths.
pub fn evaluate(
    dm: &DistanceMatrix,
    split: &GroupSplit,
    ranks: &[usize],
) -> Result<GroupReport, ProtocolError> {
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(ProtocolError::BadRanks);
    }
    let probe_paths: Vec<&str> = split.probes.iter().map(|(p, _)| p.as_str()).collect();
    let gallery_paths: Vec<&str> = split.gallery.iter().map(|(p, _)| p.as_str()).collect();
    if dm
        .probe_ids()
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        != probe_paths
    {
        return Err(ProtocolError::IdMismatch { side: "probe" });
    }
    if dm
        .gallery_ids()
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        != gallery_paths
    {
        return Err(ProtocolError::IdMismatch { side: "gallery" });
    }
    let mut hits: BTreeMap<usize, usize> = ranks.iter().map(|&r| (r, 0)).collect();
    for (i, (_, identity)) in split.probes.iter().enumerate() {
        let order = rank_gallery(dm.row(i));
        let position = order
            .iter()
            .position(|&g| &split.gallery[g].1 == identity)
            .expect("closed set: probe identity is enrolled");
        let rank = position + 1;
        for (&r, h) in hits.iter_mut() {
            if rank <= r {
                *h += 1;
            }
        }
    }
    let n = split.probes.len();
    Ok(GroupReport {
        group_id: split.group_id,
        probe_count: n,
        rates: hits
            .into_iter()
            .map(|(r, h)| (r, h as f64 / n as f64))
            .collect(),
    })
}

/// Unweighted mean of per-group rates; every report must carry the same
/// rank set.
pub fn aggregate(groups: Vec<GroupReport>) -> Result<RecognitionReport, ProtocolError> {
    if groups.is_empty() {
        return Err(ProtocolError::EmptyManifest);
    }
    let ranks: Vec<usize> = groups[0].rates.keys().copied().collect();
    let mut averaged: BTreeMap<usize, f64> = ranks.iter().map(|&r| (r, 0.0)).collect();
    for g in &groups {
        if g.rates.keys().copied().collect::<Vec<_>>() != ranks {
            return Err(ProtocolError::RankSetMismatch);
        }
        for (&r, &v) in &g.rates {
            *averaged.get_mut(&r).unwrap() += v;
        }
    }
    let n = groups.len() as f64;
    for v in averaged.values_mut() {
        *v /= n;
    }
    Ok(RecognitionReport {
        per_group: groups,
        averaged,
    })
}

/// Convenience: evaluate every group and aggregate. `matrices` must be
/// keyed by group id.
pub fn evaluate_all(
    matrices: &HashMap<u32, DistanceMatrix>,
    splits: &[GroupSplit],
    ranks: &[usize],
) -> Result<RecognitionReport, ProtocolError> {
    let mut groups = Vec::new();
    for split in splits {
        let dm = matrices
            .get(&split.group_id)
            .ok_or(ProtocolError::IdMismatch { side: "group" })?;
        groups.push(evaluate(dm, split, ranks)?);
    }
    aggregate(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::{distance_matrix, Metric, Sample};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn entry(path: &str, id: &str, group: u32, role: Role) -> ManifestEntry {
        ManifestEntry {
            image_path: path.to_string(),
            identity_id: id.to_string(),
            group_id: group,
            role,
        }
    }

    fn small_manifest() -> Manifest {
        Manifest::new(vec![
            entry("g1/a0.png", "a", 1, Role::Gallery),
            entry("g1/b0.png", "b", 1, Role::Gallery),
            entry("g1/a1.png", "a", 1, Role::Probe),
            entry("g1/b1.png", "b", 1, Role::Probe),
            entry("g2/a0.png", "a", 2, Role::Gallery),
            entry("g2/a1.png", "a", 2, Role::Probe),
        ])
        .unwrap()
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let manifest = small_manifest();
        save_manifest(&manifest, &path).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(manifest, back);
        assert_eq!(back.group_count(), 2);
    }

    #[test]
    fn manifest_validation() {
        // group numbering must start at 1 with no gaps
        assert!(matches!(
            Manifest::new(vec![entry("x", "a", 2, Role::Gallery)]),
            Err(ProtocolError::GroupGap { .. })
        ));
        assert!(matches!(
            Manifest::new(vec![
                entry("x", "a", 1, Role::Gallery),
                entry("y", "a", 3, Role::Gallery),
            ]),
            Err(ProtocolError::GroupGap { .. })
        ));
        // duplicate path within a group
        assert!(matches!(
            Manifest::new(vec![
                entry("x", "a", 1, Role::Gallery),
                entry("x", "b", 1, Role::Probe),
            ]),
            Err(ProtocolError::DuplicatePath { .. })
        ));
        assert!(matches!(
            Manifest::new(vec![]),
            Err(ProtocolError::EmptyManifest)
        ));
    }

    #[test]
    fn manifest_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "path,identity,group,role\nx,a,1,gallery\n").unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(ProtocolError::FileFormat { .. })
        ));
        std::fs::write(
            &path,
            "image_path,identity_id,group_id,role\nx,a,1,witness\n",
        )
        .unwrap();
        assert!(load_manifest(&path).is_err());
        std::fs::write(
            &path,
            "image_path,identity_id,group_id,role\nx,a,zero,gallery\n",
        )
        .unwrap();
        assert!(load_manifest(&path).is_err());
    }

    #[test]
    fn split_rules() {
        let splits = build_split(&small_manifest()).unwrap();
        assert_eq!(splits.len(), 2);
        assert_eq!(splits[0].gallery.len(), 2);
        assert_eq!(splits[0].probes.len(), 2);
        // order preserved from the manifest
        assert_eq!(splits[0].gallery[0].0, "g1/a0.png");
        assert_eq!(splits[0].probes[1].0, "g1/b1.png");

        let dup = Manifest::new(vec![
            entry("x", "a", 1, Role::Gallery),
            entry("y", "a", 1, Role::Gallery),
            entry("z", "a", 1, Role::Probe),
        ])
        .unwrap();
        assert!(matches!(
            build_split(&dup),
            Err(ProtocolError::DuplicateGalleryIdentity { .. })
        ));

        let open = Manifest::new(vec![
            entry("x", "a", 1, Role::Gallery),
            entry("z", "c", 1, Role::Probe),
        ])
        .unwrap();
        assert!(matches!(
            build_split(&open),
            Err(ProtocolError::UnknownProbeIdentity { .. })
        ));

        let no_probe = Manifest::new(vec![entry("x", "a", 1, Role::Gallery)]).unwrap();
        assert!(matches!(
            build_split(&no_probe),
            Err(ProtocolError::EmptyRole { role: "probe", .. })
        ));
    }

    fn split_from(gallery: &[(&str, &str)], probes: &[(&str, &str)]) -> GroupSplit {
        GroupSplit {
            group_id: 1,
            gallery: gallery
                .iter()
                .map(|(p, i)| (p.to_string(), i.to_string()))
                .collect(),
            probes: probes
                .iter()
                .map(|(p, i)| (p.to_string(), i.to_string()))
                .collect(),
        }
    }

    fn dm_from(split: &GroupSplit, rows: &[&[f64]]) -> DistanceMatrix {
        let values: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        DistanceMatrix::from_parts(
            split.probes.iter().map(|(p, _)| p.clone()).collect(),
            split.gallery.iter().map(|(p, _)| p.clone()).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn evaluate_hand_case() {
        let split = split_from(
            &[("ga", "a"), ("gb", "b"), ("gc", "c")],
            &[("p0", "a"), ("p1", "b"), ("p2", "c"), ("p3", "a")],
        );
        // p0: a at rank 1; p1: b at rank 2; p2: c at rank 3; p3: a at rank 1
        let dm = dm_from(
            &split,
            &[
                &[0.1, 0.5, 0.9],
                &[0.2, 0.3, 0.4],
                &[0.1, 0.2, 0.3],
                &[0.0, 0.0, 0.0], // all tied: index 0 wins, correct for identity a
            ],
        );
        let report = evaluate(&dm, &split, &[1, 2, 3]).unwrap();
        assert_eq!(report.probe_count, 4);
        assert_eq!(report.rates[&1], 2.0 / 4.0);
        assert_eq!(report.rates[&2], 3.0 / 4.0);
        assert_eq!(report.rates[&3], 1.0);
    }

    #[test]
    fn evaluate_rejects_mismatched_ids() {
        let split = split_from(&[("ga", "a")], &[("p0", "a")]);
        let wrong = DistanceMatrix::from_parts(
            vec!["other".to_string()],
            vec!["ga".to_string()],
            vec![0.0],
        )
        .unwrap();
        assert!(matches!(
            evaluate(&wrong, &split, &[1]),
            Err(ProtocolError::IdMismatch { side: "probe" })
        ));
        let dm = dm_from(&split, &[&[0.0]]);
        assert!(matches!(
            evaluate(&dm, &split, &[]),
            Err(ProtocolError::BadRanks)
        ));
        assert!(matches!(
            evaluate(&dm, &split, &[0]),
            Err(ProtocolError::BadRanks)
        ));
    }

    #[test]
    fn self_matching_probes_score_perfectly() {
        // probes are the gallery vectors verbatim: zero self-distance
        // must put the right identity at rank 1 for every probe
        let gallery: Vec<Sample> = (0..6)
            .map(|i| Sample {
                id: format!("g{i}"),
                values: vec![i as f32, (i * i) as f32, 1.0],
            })
            .collect();
        let probes: Vec<Sample> = gallery
            .iter()
            .map(|s| Sample {
                id: format!("p-{}", s.id),
                values: s.values.clone(),
            })
            .collect();
        let dm = distance_matrix(&probes, &gallery, Metric::ChiSquare).unwrap();
        let split = GroupSplit {
            group_id: 1,
            gallery: gallery
                .iter()
                .enumerate()
                .map(|(i, s)| (s.id.clone(), format!("id{i}")))
                .collect(),
            probes: probes
                .iter()
                .enumerate()
                .map(|(i, s)| (s.id.clone(), format!("id{i}")))
                .collect(),
        };
        let report = evaluate(&dm, &split, &[1]).unwrap();
        assert_eq!(report.rates[&1], 1.0);
    }

    #[test]
    fn rates_survive_monotone_distance_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let split = split_from(
            &[("ga", "a"), ("gb", "b"), ("gc", "c"), ("gd", "d")],
            &[
                ("p0", "b"),
                ("p1", "d"),
                ("p2", "a"),
                ("p3", "c"),
                ("p4", "b"),
            ],
        );
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let dm = dm_from(&split, &refs);
        let base = evaluate(&dm, &split, &[1, 2, 3]).unwrap();
        let warped = dm.map_values(|v| v.exp() + 3.0);
        let after = evaluate(&warped, &split, &[1, 2, 3]).unwrap();
        assert_eq!(base, after);
    }

    /// Independent scorer: for each probe count gallery entries strictly
    /// closer than the correct one, plus earlier-indexed ties.
    fn brute_force_rates(
        split: &GroupSplit,
        dm: &DistanceMatrix,
        ranks: &[usize],
    ) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for &r in ranks {
            let mut hits = 0usize;
            for (i, (_, identity)) in split.probes.iter().enumerate() {
                let correct = split
                    .gallery
                    .iter()
                    .position(|(_, gid)| gid == identity)
                    .unwrap();
                let d = dm.get(i, correct);
                let mut ahead = 0usize;
                for j in 0..split.gallery.len() {
                    if dm.get(i, j) < d || (dm.get(i, j) == d && j < correct) {
                        ahead += 1;
                    }
                }
                if ahead < r {
                    hits += 1;
                }
            }
            out.insert(r, hits as f64 / split.probes.len() as f64);
        }
        out
    }

    #[test]
    fn evaluate_matches_brute_force_on_random_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        for case in 0..25 {
            let n_gallery = rng.gen_range(2..12);
            let n_probes = rng.gen_range(1..20);
            let split = GroupSplit {
                group_id: 1,
                gallery: (0..n_gallery)
                    .map(|i| (format!("g{i}"), format!("id{i}")))
                    .collect(),
                probes: (0..n_probes)
                    .map(|i| {
                        let id = rng.gen_range(0..n_gallery);
                        (format!("p{i}"), format!("id{id}"))
                    })
                    .collect(),
            };
            let values: Vec<f64> = (0..n_probes * n_gallery)
                // coarse grid so ties actually occur
                .map(|_| f64::from(rng.gen_range(0..6)) / 2.0)
                .collect();
            let dm = DistanceMatrix::from_parts(
                split.probes.iter().map(|(p, _)| p.clone()).collect(),
                split.gallery.iter().map(|(p, _)| p.clone()).collect(),
                values,
            )
            .unwrap();
            let ranks = [1, 2, 5];
            let report = evaluate(&dm, &split, &ranks).unwrap();
            let expect = brute_force_rates(&split, &dm, &ranks);
            assert_eq!(report.rates, expect, "case {case}");
        }
    }

    #[test]
    fn aggregate_is_unweighted_over_groups() {
        let g1 = GroupReport {
            group_id: 1,
            probe_count: 10,
            rates: BTreeMap::from([(1, 0.2), (5, 0.4)]),
        };
        let g2 = GroupReport {
            group_id: 2,
            probe_count: 90,
            rates: BTreeMap::from([(1, 0.8), (5, 1.0)]),
        };
        let report = aggregate(vec![g1, g2]).unwrap();
        // means ignore probe counts
        assert_eq!(report.averaged[&1], 0.5);
        assert_eq!(report.averaged[&5], 0.7);
        assert_eq!(report.rate(1), Some(0.5));
        assert_eq!(report.rate(10), None);

        let odd = GroupReport {
            group_id: 3,
            probe_count: 1,
            rates: BTreeMap::from([(2, 1.0)]),
        };
        let g3 = report.per_group[0].clone();
        assert!(matches!(
            aggregate(vec![g3, odd]),
            Err(ProtocolError::RankSetMismatch)
        ));
    }
}
