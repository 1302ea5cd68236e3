//! Command line front end for the face recognition pipeline.
//!
//! Exit codes: 0 on success, 1 for invalid usage or configuration,
//! 2 when a processing stage fails.

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

use facesr_core::img::{load_image, save_image, to_gray};
use facesr_core::lbp::{
    extract_highdim_lbp, extract_lbp, extract_mslbp, load_landmarks, read_feature_file,
    write_feature_file, write_feature_records_csv, FeatureKind, FeatureRecord,
};
use facesr_core::matcher::{distance_matrix, Metric, Sample};
use facesr_core::pipeline::experiment::{run_experiment, ExperimentConfig};
use facesr_core::pipeline::{degrade, highdim_frame, PipelineError, Variant};
use facesr_core::protocol::{build_split, evaluate, load_manifest};
use facesr_core::srcnn::{
    forward, load_weights, parse_architecture, save_weights, train_patches, SrcnnModel,
};
use facesr_core::synth::{generate_corpus, texture_image, CorpusMode, SynthConfig, SynthError};
use facesr_core::{bicubic_resize, DistanceMatrix, Image};

#[derive(Parser)]
#[command(
    name = "facesr",
    version,
    about = "Low-resolution face recognition pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resize an image, or degrade it with a shrink-expand round trip
    Resize(ResizeArgs),
    /// Apply a restoration model to an image
    Sr(SrArgs),
    /// Extract image feature vectors
    Features(FeaturesArgs),
    /// Compute a probe-by-gallery distance matrix from feature files
    Match(MatchArgs),
    /// Score one group's distance matrix against a manifest
    Eval(EvalArgs),
    /// Run the full recognition experiment described by a JSON config
    Experiment(ExperimentArgs),
    /// Train a restoration model and save its weights
    TrainSr(TrainArgs),
    /// Generate a synthetic labeled corpus
    Synth(SynthArgs),
}

enum CliError {
    /// Bad arguments or configuration: exit 1.
    Validation(String),
    /// A processing stage failed: exit 2.
    Runtime(String),
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() {
    // die quietly like other line tools when the reader closes the pipe
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => {}
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Resize(args) => run_resize(args),
        Command::Sr(args) => run_sr(args),
        Command::Features(args) => run_features(args),
        Command::Match(args) => run_match(args),
        Command::Eval(args) => run_eval(args),
        Command::Experiment(args) => run_experiment_cmd(args),
        Command::TrainSr(args) => run_train(args),
        Command::Synth(args) => run_synth(args),
    }
}

#[derive(Args)]
struct ResizeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Target width; requires --height
    #[arg(long)]
    width: Option<usize>,
    /// Target height; requires --width
    #[arg(long)]
    height: Option<usize>,
    /// Shrink by this factor and expand back instead of resizing
    #[arg(long, conflicts_with_all = ["width", "height"])]
    degrade: Option<usize>,
}

fn run_resize(args: ResizeArgs) -> Result<(), CliError> {
    enum Action {
        Resize(usize, usize),
        Degrade(usize),
    }
    let action = match (args.width, args.height, args.degrade) {
        (Some(w), Some(h), None) => Action::Resize(w, h),
        (None, None, Some(f)) => Action::Degrade(f),
        _ => {
            return Err(CliError::Validation(
                "pass both --width and --height, or --degrade alone".into(),
            ))
        }
    };
    let img = load_image(&args.input).map_err(failed)?;
    let out = match action {
        Action::Resize(w, h) => bicubic_resize(&img, w, h).map_err(failed)?,
        Action::Degrade(f) => degrade(&img, f).map_err(failed)?,
    };
    save_image(&out, &args.output).map_err(failed)?;
    println!(
        "wrote {} ({}x{})",
        args.output.display(),
        out.width(),
        out.height()
    );
    Ok(())
}

#[derive(Args)]
struct SrArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Weight file produced by train-sr
    #[arg(short, long)]
    weights: PathBuf,
    /// Degrade the input by this factor before restoring
    #[arg(long)]
    degrade: Option<usize>,
}

fn run_sr(args: SrArgs) -> Result<(), CliError> {
    let model = load_weights(&args.weights).map_err(failed)?;
    let mut img = load_image(&args.input).map_err(failed)?;
    if let Some(f) = args.degrade {
        img = degrade(&img, f).map_err(failed)?;
    }
    let out = forward(&model, &img).map_err(failed)?;
    save_image(&out, &args.output).map_err(failed)?;
    println!("wrote {}", args.output.display());
    Ok(())
}

#[derive(Args)]
struct FeaturesArgs {
    /// Image file; repeat to put several records in one output
    #[arg(short, long, required = true)]
    image: Vec<PathBuf>,
    /// lbp, mslbp, or highdim (highdim needs --landmarks)
    #[arg(short, long)]
    kind: String,
    /// Landmark CSV in the 300x300 reference frame; with several images,
    /// `{stem}.landmarks.csv` is looked up next to each one instead
    #[arg(short, long)]
    landmarks: Option<PathBuf>,
    /// Binary feature file to write
    #[arg(short, long)]
    output: PathBuf,
    /// Also write a CSV rendering
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Record id; defaults to the image path as typed, so running from a
    /// corpus root yields ids that match its manifest
    #[arg(long)]
    id: Option<String>,
}

fn run_features(args: FeaturesArgs) -> Result<(), CliError> {
    let kind = FeatureKind::parse(&args.kind)
        .ok_or_else(|| CliError::Validation(format!("unknown feature kind `{}`", args.kind)))?;
    if kind == FeatureKind::HighDimPca {
        return Err(CliError::Validation(
            "highdim_pca is fit on a gallery; use the experiment command".into(),
        ));
    }
    let single = args.image.len() == 1;
    if !single && args.id.is_some() {
        return Err(CliError::Validation(
            "--id only applies to a single image".into(),
        ));
    }
    if !single && args.landmarks.is_some() {
        return Err(CliError::Validation(
            "with several images, landmarks are looked up next to each one".into(),
        ));
    }
    if kind == FeatureKind::HighDim && single && args.landmarks.is_none() {
        return Err(CliError::Validation("highdim needs --landmarks".into()));
    }
    let mut records = Vec::with_capacity(args.image.len());
    for path in &args.image {
        let img = load_image(path).map_err(failed)?;
        let fv = match kind {
            FeatureKind::Lbp => extract_lbp(&to_gray(&img)).map_err(failed)?,
            FeatureKind::MsLbp => extract_mslbp(&to_gray(&img)).map_err(failed)?,
            FeatureKind::HighDim => {
                let lm_path = match &args.landmarks {
                    Some(p) => p.clone(),
                    None => path.with_extension("landmarks.csv"),
                };
                let lm = load_landmarks(&lm_path).map_err(failed)?;
                let frame = highdim_frame(&img).map_err(failed)?;
                extract_highdim_lbp(&frame, &lm).map_err(failed)?
            }
            FeatureKind::HighDimPca => unreachable!(),
        };
        let id = match &args.id {
            Some(id) => id.clone(),
            None => path.display().to_string(),
        };
        records.push(FeatureRecord {
            image_id: id,
            kind,
            layout: fv.layout().to_vec(),
            values: fv.values().to_vec(),
        });
    }
    write_feature_file(&records, &args.output).map_err(failed)?;
    if let Some(csv) = &args.csv {
        write_feature_records_csv(&records, csv).map_err(failed)?;
    }
    if single {
        println!(
            "wrote {} ({} values)",
            args.output.display(),
            records[0].values.len()
        );
    } else {
        println!(
            "wrote {} ({} records, {} values each)",
            args.output.display(),
            records.len(),
            records[0].values.len()
        );
    }
    Ok(())
}

#[derive(Args)]
struct MatchArgs {
    /// Probe feature file
    #[arg(short, long)]
    probes: PathBuf,
    /// Gallery feature file
    #[arg(short, long)]
    gallery: PathBuf,
    /// chi_square or euclidean
    #[arg(short, long, default_value = "chi_square")]
    metric: String,
    /// Distance matrix CSV to write
    #[arg(short, long)]
    output: PathBuf,
}

fn samples_from_file(path: &Path) -> Result<Vec<Sample>, CliError> {
    Ok(read_feature_file(path)
        .map_err(failed)?
        .into_iter()
        .map(|r| Sample {
            id: r.image_id,
            values: r.values,
        })
        .collect())
}

fn run_match(args: MatchArgs) -> Result<(), CliError> {
    let metric = Metric::parse(&args.metric)
        .ok_or_else(|| CliError::Validation(format!("unknown metric `{}`", args.metric)))?;
    let probes = samples_from_file(&args.probes)?;
    let gallery = samples_from_file(&args.gallery)?;
    let dm = distance_matrix(&probes, &gallery, metric).map_err(failed)?;
    dm.write_csv(&args.output).map_err(failed)?;
    println!(
        "wrote {} ({} probes x {} gallery)",
        args.output.display(),
        dm.rows(),
        dm.cols()
    );
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    /// Distance matrix CSV from the match command
    #[arg(short, long)]
    distances: PathBuf,
    #[arg(short, long)]
    manifest: PathBuf,
    /// Group to score
    #[arg(short, long)]
    group: u32,
    /// Comma-separated rank list
    #[arg(short, long, default_value = "1,5,10")]
    ranks: String,
}

fn parse_ranks(s: &str) -> Result<Vec<usize>, CliError> {
    let ranks: Vec<usize> = s
        .split(',')
        .map(|c| c.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Validation(format!("bad rank list `{s}`: {e}")))?;
    if ranks.is_empty() || ranks.contains(&0) {
        return Err(CliError::Validation("ranks must be positive".into()));
    }
    Ok(ranks)
}

fn run_eval(args: EvalArgs) -> Result<(), CliError> {
    let ranks = parse_ranks(&args.ranks)?;
    let dm = DistanceMatrix::read_csv(&args.distances).map_err(failed)?;
    let manifest = load_manifest(&args.manifest).map_err(failed)?;
    let splits = build_split(&manifest).map_err(failed)?;
    let split = splits
        .iter()
        .find(|s| s.group_id == args.group)
        .ok_or_else(|| CliError::Runtime(format!("manifest has no group {}", args.group)))?;
    let report = evaluate(&dm, split, &ranks).map_err(failed)?;
    let text = serde_json::to_string_pretty(&report).map_err(failed)?;
    println!("{text}");
    Ok(())
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment description
    #[arg(short, long)]
    config: PathBuf,
}

fn run_experiment_cmd(args: ExperimentArgs) -> Result<(), CliError> {
    let config = ExperimentConfig::from_file(&args.config).map_err(invalid)?;
    let summary = run_experiment(&config).map_err(|e| match e {
        PipelineError::BadConfig(_) => invalid(e),
        other => failed(other),
    })?;
    for v in Variant::ALL {
        let Some(kinds) = summary.results.get(v.tag()) else {
            continue;
        };
        for (kind, report) in kinds {
            let rank1 = report.rate(1).unwrap_or(0.0) * 100.0;
            println!("{:<28} {:<12} rank-1 {rank1:6.2}%", v.label(), kind);
        }
    }
    for note in &summary.skipped {
        println!("skipped {} x {}: {}", note.variant, note.kind, note.reason);
    }
    if !summary.exclusions.is_empty() {
        println!(
            "{} image(s) excluded; see report.json",
            summary.exclusions.len()
        );
    }
    println!("reports under {}", config.output_dir.display());
    Ok(())
}

#[derive(Args)]
struct TrainArgs {
    /// Weight file to write
    #[arg(short, long)]
    output: PathBuf,
    /// Layer spec like 9x9x64,5x5x32,5x5x1
    #[arg(long, default_value = "9x9x64,5x5x32,5x5x1")]
    arch: String,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    /// Step size; the copy-the-input start needs small steps to stay stable
    #[arg(long, default_value_t = 0.02)]
    rate: f64,
    /// Train on PNGs from this directory instead of synthetic textures
    #[arg(long)]
    images: Option<PathBuf>,
    /// Synthetic texture count when no image directory is given
    #[arg(long, default_value_t = 48)]
    textures: usize,
    /// Synthetic texture side length
    #[arg(long, default_value_t = 48)]
    texture_size: usize,
    /// Square training patch side
    #[arg(long, default_value_t = 24)]
    patch_size: usize,
    /// Degradation factor the model learns to undo
    #[arg(long, default_value_t = 3)]
    factor: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Cut aligned (degraded, clean) patches from one grayscale image.
fn cut_patches(
    clean: &Image,
    factor: usize,
    patch: usize,
) -> Result<Vec<(Image, Image)>, CliError> {
    let (w, h) = (clean.width(), clean.height());
    let (cw, ch) = ((w / factor) * factor, (h / factor) * factor);
    if cw < patch || ch < patch {
        return Ok(Vec::new());
    }
    // crop to a factor multiple so degradation preserves the pixel grid
    let mut cropped = Image::new(cw, ch, clean.color());
    for c in 0..clean.channels() {
        for y in 0..ch {
            for x in 0..cw {
                cropped.set(c, x, y, clean.get(c, x, y));
            }
        }
    }
    let low = degrade(&cropped, factor).map_err(failed)?;
    let mut pairs = Vec::new();
    for by in (0..=ch - patch).step_by(patch) {
        for bx in (0..=cw - patch).step_by(patch) {
            let mut d = Image::new(patch, patch, clean.color());
            let mut g = Image::new(patch, patch, clean.color());
            for c in 0..clean.channels() {
                for y in 0..patch {
                    for x in 0..patch {
                        d.set(c, x, y, low.get(c, bx + x, by + y));
                        g.set(c, x, y, cropped.get(c, bx + x, by + y));
                    }
                }
            }
            pairs.push((d, g));
        }
    }
    Ok(pairs)
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let specs = parse_architecture(&args.arch).map_err(invalid)?;
    let radius: usize = specs.iter().map(|s| s.kernel_h / 2).sum();
    if args.patch_size <= 2 * radius {
        return Err(CliError::Validation(format!(
            "patch size {} leaves no interior for a receptive radius of {radius}",
            args.patch_size
        )));
    }
    if args.factor < 2 {
        return Err(CliError::Validation("factor must be at least 2".into()));
    }
    if args.epochs == 0 || !(args.rate.is_finite() && args.rate > 0.0) {
        return Err(CliError::Validation(
            "epochs and rate must be positive".into(),
        ));
    }
    if args.images.is_none() {
        if args.textures == 0 {
            return Err(CliError::Validation(
                "texture count must be positive".into(),
            ));
        }
        if args.texture_size < args.patch_size || !args.texture_size.is_multiple_of(args.factor) {
            return Err(CliError::Validation(
                "texture size must fit one patch and be a factor multiple".into(),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut pairs = Vec::new();
    if let Some(dir) = &args.images {
        let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("png") | Some("jpg") | Some("jpeg")
                )
            })
            .collect();
        names.sort();
        for path in names {
            let img = load_image(&path).map_err(failed)?;
            pairs.extend(cut_patches(&to_gray(&img), args.factor, args.patch_size)?);
        }
    } else {
        for _ in 0..args.textures {
            let tex = texture_image(&mut rng, args.texture_size, args.texture_size);
            pairs.extend(cut_patches(&tex, args.factor, args.patch_size)?);
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Runtime(
            "no training patches; images too small for the patch size".into(),
        ));
    }
    // copy-the-input start: descends from the interpolated baseline,
    // which random init cannot reach on desk-scale corpora
    let init = SrcnnModel::passthrough(1, &specs, &mut rng).map_err(failed)?;
    let (model, trace) = train_patches(&init, &pairs, args.rate, args.epochs).map_err(failed)?;
    save_weights(&model, &args.output).map_err(failed)?;
    println!(
        "trained on {} patches; loss {} -> {}",
        pairs.len(),
        trace.first().map_or(f64::NAN, |v| *v),
        trace.last().map_or(f64::NAN, |v| *v),
    );
    println!("wrote {}", args.output.display());
    Ok(())
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus directory to create
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 2)]
    groups: u32,
    #[arg(long, default_value_t = 8)]
    identities: u32,
    #[arg(long, default_value_t = 2)]
    probes: u32,
    /// aligned (90x90 faces) or full (faces embedded in larger frames)
    #[arg(long, default_value = "full")]
    mode: String,
    /// Frame side for full mode
    #[arg(long, default_value_t = 150)]
    size: usize,
    #[arg(long, default_value_t = 1.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    /// Half-width of probe landmark error, in reference-frame pixels
    #[arg(long, default_value_t = 0.0)]
    landmark_noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    let mode = match args.mode.as_str() {
        "aligned" => CorpusMode::Aligned,
        "full" => CorpusMode::Full,
        other => {
            return Err(CliError::Validation(format!(
                "mode must be aligned or full, got `{other}`"
            )))
        }
    };
    let cfg = SynthConfig {
        groups: args.groups,
        identities_per_group: args.identities,
        probes_per_identity: args.probes,
        mode,
        image_size: args.size,
        jitter: args.jitter,
        noise: args.noise,
        landmark_noise: args.landmark_noise,
        seed: args.seed,
    };
    let manifest = generate_corpus(&cfg, &args.output).map_err(|e| match e {
        SynthError::BadConfig(_) => invalid(e),
        other => failed(other),
    })?;
    println!(
        "wrote {} images under {}",
        manifest.entries().len(),
        args.output.display()
    );
    Ok(())
}
