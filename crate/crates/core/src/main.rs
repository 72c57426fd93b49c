use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cyclostereo::costvolume::{build_slices, export_slice, NormScope, SliceFormat};
use cyclostereo::dp::DPParams;
use cyclostereo::error::{Error, Result};
use cyclostereo::fill::{fill_gaps, DisparityMap, FillMode, MapSource, MonocularPrior};
use cyclostereo::io::{self, write_calib, write_mask, write_pfm, write_pgm};
use cyclostereo::metrics::{affine_normalize_to_gt, evaluate, signed_error_map, DEFAULT_TAU};
use cyclostereo::pipeline::{
    compare, compare_table, cyclopean_map, default_parallelism, feature_pair, load_entry, run_match, write_match,
    DatasetEntry, FeaturePaths, FeatureSource, FillSummary, Manifest, PipelineConfig, RunRecord,
    DEFAULT_CENSUS_RADIUS,
};
use cyclostereo::synth::{generate, prior_stand_in, SceneSpec};

#[derive(Parser)]
#[command(name = "cyclostereo", version, about = "Cyclopean-coordinate stereo matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Match a stereo pair and write the disparity, masks and report.
    Match(MatchArgs),
    /// Score an estimated disparity map against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scene as a dataset entry.
    Synth(SynthArgs),
    /// Export the match-distance slices of selected lines.
    Correlate(CorrelateArgs),
    /// Fill the gaps of a disparity map from a monocular prior.
    Fill(FillArgs),
    /// Score several methods' maps for every entry of a manifest.
    Compare(CompareArgs),
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    left: Option<PathBuf>,
    #[arg(long)]
    right: Option<PathBuf>,
    #[arg(long)]
    calib: Option<PathBuf>,
    /// Use the built-in census/patch features (the default).
    #[arg(long, conflicts_with_all = ["features_left", "features_right"])]
    census: bool,
    #[arg(long, requires = "features_right")]
    features_left: Option<PathBuf>,
    #[arg(long, requires = "features_left")]
    features_right: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CENSUS_RADIUS)]
    census_radius: usize,
    /// Take the pair from this manifest instead.
    #[arg(long, conflicts_with_all = ["left", "right", "calib"])]
    manifest: Option<PathBuf>,
    /// Entry name within the manifest; defaults to the only entry.
    #[arg(long, requires = "manifest")]
    entry: Option<String>,
}

impl InputArgs {
    fn entry(&self) -> Result<DatasetEntry> {
        if let Some(m) = &self.manifest {
            let manifest = Manifest::read(m)?;
            return match &self.entry {
                Some(name) => manifest
                    .entries
                    .into_iter()
                    .find(|e| &e.name == name)
                    .ok_or_else(|| Error::Usage(format!("no entry named {name}"))),
                None if manifest.entries.len() == 1 => Ok(manifest.entries.into_iter().next().unwrap()),
                None => Err(Error::Usage("manifest has several entries; pass --entry".into())),
            };
        }
        let need = |p: &Option<PathBuf>, flag: &str| p.clone().ok_or_else(|| Error::Usage(format!("--{flag} is required")));
        let mut e = DatasetEntry::new("cli", need(&self.left, "left")?, need(&self.right, "right")?, need(&self.calib, "calib")?);
        if let (Some(l), Some(r)) = (&self.features_left, &self.features_right) {
            e.features = Some(FeaturePaths {
                left: l.clone(),
                right: r.clone(),
            });
        }
        e.check_files()?;
        Ok(e)
    }

    fn source(&self) -> FeatureSource {
        if self.features_left.is_some() {
            FeatureSource::B2ft
        } else {
            FeatureSource::Census
        }
    }
}

#[derive(Args)]
struct MatchArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Monocular prior PFM; enables `filled.pfm`.
    #[arg(long)]
    prior: Option<PathBuf>,
    #[arg(long, default_value = "cli")]
    name: String,
    #[arg(long, env = "CYCLOSTEREO_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long, env = "CYCLOSTEREO_PARALLELISM")]
    parallelism: Option<usize>,
    #[arg(long, default_value_t = DPParams::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = DPParams::default().epsilon)]
    epsilon: f64,
    /// Use the bare six-neighbour rule instead of direction-consistent runs.
    #[arg(long)]
    literal_gc1: bool,
    #[arg(long)]
    subpixel: bool,
    #[arg(long, value_enum, default_value_t = NormScope::Line)]
    norm_scope: NormScope,
    #[arg(long, value_enum, default_value_t = FillMode::Affine)]
    fill_mode: FillMode,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Repeat a run from its `config.json`; input and tuning flags are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Rescale the estimate affinely onto the ground-truth range first.
    #[arg(long)]
    affine_normalize: bool,
    /// Write a signed-error PNG here.
    #[arg(long)]
    signed_error: Option<PathBuf>,
    /// Colour saturation for the signed-error PNG, in pixels.
    #[arg(long, requires = "signed_error")]
    limit: Option<f64>,
    /// Print an aligned table instead of JSON.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description; without it a random scene is drawn.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    /// Cyclopean disparity cap (full disparity is at most twice this).
    #[arg(long, default_value_t = 4)]
    max_disparity: u32,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Draw a slanted smooth plane instead of layered dots.
    #[arg(long, conflicts_with = "spec")]
    slanted: bool,
    /// Gaussian noise sigma in [0, 1] intensity units.
    #[arg(long)]
    noise: Option<f64>,
    /// Also write a GT-derived monocular stand-in as `prior.pfm`.
    #[arg(long)]
    prior: bool,
    #[arg(long, default_value_t = 0.8)]
    prior_gamma: f64,
    #[arg(long, default_value_t = 2)]
    prior_blur: usize,
    #[arg(long, default_value = "synth")]
    name: String,
    #[arg(long, env = "CYCLOSTEREO_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Epipolar line to export; repeatable.
    #[arg(long = "line", required = true)]
    lines: Vec<usize>,
    #[arg(long, value_enum, default_value_t = SliceFormat::Csv)]
    format: SliceFormat,
    #[arg(long, value_enum, default_value_t = NormScope::Line)]
    norm_scope: NormScope,
    #[arg(long, env = "CYCLOSTEREO_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FillArgs {
    #[arg(long)]
    prior: PathBuf,
    /// Disparity map with `+inf` gaps.
    #[arg(long)]
    dp: PathBuf,
    #[arg(long, value_enum, default_value_t = FillMode::Affine)]
    mode: FillMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Also write the rows as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, env = "CYCLOSTEREO_PARALLELISM")]
    parallelism: Option<usize>,
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf> {
    out.clone()
        .ok_or_else(|| Error::Usage("--out or CYCLOSTEREO_OUT_DIR is required".into()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn cmd_match(a: MatchArgs) -> Result<()> {
    let (mut config, entry) = match &a.config {
        Some(path) => {
            let rec = RunRecord::read(path)?;
            let mut entry = rec.entry;
            entry.check_files()?;
            (rec.config, entry)
        }
        None => {
            let mut entry = a.input.entry()?;
            if a.input.manifest.is_none() {
                entry.name = a.name.clone();
            }
            if a.gt.is_some() {
                entry.gt = a.gt.clone();
            }
            if a.prior.is_some() {
                entry.prior = a.prior.clone();
            }
            entry.check_files()?;
            let config = PipelineConfig {
                dp: DPParams {
                    lambda: a.lambda,
                    epsilon: a.epsilon,
                    strict_gc1_runs: !a.literal_gc1,
                    subpixel_refine: a.subpixel,
                },
                norm_scope: a.norm_scope,
                fill_mode: a.fill_mode,
                tau: a.tau,
                features: a.input.source(),
                census_radius: a.input.census_radius,
                parallelism: default_parallelism(),
                out_dir: PathBuf::new(),
            };
            (config, entry)
        }
    };
    if let Some(p) = a.parallelism {
        config.parallelism = p;
    }
    config.out_dir = match (&a.out, &a.config) {
        (Some(o), _) => o.clone(),
        (None, Some(_)) => config.out_dir,
        (None, None) => out_dir(&a.out)?,
    };
    config.validate()?;
    let run = run_match(&entry, &config)?;
    write_match(&run, &entry, &config)?;
    print!("{}", to_json(&run.report)?);
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let gt = DisparityMap::read(&a.gt, MapSource::Gt)?;
    let mut est = DisparityMap::read(&a.est, MapSource::Dp)?;
    if a.affine_normalize {
        est = affine_normalize_to_gt(&est, &gt)?;
    }
    let report = evaluate(&est, &gt, a.tau)?;
    if let Some(p) = &a.signed_error {
        signed_error_map(&est, &gt)?.write_png(p, a.limit)?;
    }
    if a.table {
        print!("{}", report.table());
    } else {
        print!("{}", to_json(&report)?);
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let out = out_dir(&a.out)?;
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            let mut spec: SceneSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.clone(),
                msg: e.to_string(),
            })?;
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            spec
        }
        None => {
            let seed = a.seed.unwrap_or(0);
            if a.slanted {
                SceneSpec::slanted(seed, a.width, a.height, a.max_disparity)?
            } else {
                SceneSpec::random(seed, a.width, a.height, a.max_disparity, a.layers)?
            }
        }
    };
    if let Some(n) = a.noise {
        spec.noise_sigma = n;
    }
    let scene = generate(&spec)?;
    let masks = out.join("masks");
    create_dir(&masks)?;
    write_pgm(&io::to_u8(&scene.left), &out.join("left.pgm"))?;
    write_pgm(&io::to_u8(&scene.right), &out.join("right.pgm"))?;
    scene.truth.left.write(&out.join("gt.pfm"))?;
    write_mask(&scene.truth.left_occlusion, &masks.join("left_occlusion.pgm"))?;
    write_mask(&scene.truth.right_occlusion, &masks.join("right_occlusion.pgm"))?;
    if let Some(c) = &scene.truth.cyclopean {
        cyclopean_map(c).write(&out.join("gt_cyclopean.pfm"))?;
    }
    write_calib(&scene.truth.geometry, &out.join("calib.txt"))?;
    write_text(&out.join("scene.json"), &to_json(&spec)?)?;
    let mut entry = DatasetEntry::new(a.name, "left.pgm".into(), "right.pgm".into(), "calib.txt".into());
    entry.gt = Some("gt.pfm".into());
    if a.prior {
        let prior = prior_stand_in(&scene.truth.left, a.prior_gamma, a.prior_blur)?;
        write_pfm(prior.values(), None, &out.join("prior.pfm"))?;
        entry.prior = Some("prior.pfm".into());
    }
    let manifest = Manifest { entries: vec![entry] };
    manifest.write(&out.join("manifest.json"))?;
    print!("{}", to_json(&manifest)?);
    Ok(())
}

fn cmd_correlate(a: CorrelateArgs) -> Result<()> {
    let out = out_dir(&a.out)?;
    let entry = a.input.entry()?;
    let config = PipelineConfig {
        features: a.input.source(),
        census_radius: a.input.census_radius,
        norm_scope: a.norm_scope,
        ..PipelineConfig::default()
    };
    config.validate()?;
    let loaded = load_entry(&entry)?;
    let g = &loaded.geometry;
    if let Some(e) = a.lines.iter().find(|e| **e >= g.height) {
        return Err(Error::Usage(format!("line {e} outside an image of height {}", g.height)));
    }
    let (fl, fr) = feature_pair(&entry, &loaded, &config)?;
    let slices = build_slices(&fl, &fr, g, config.norm_scope)?;
    create_dir(&out)?;
    let ext = match a.format {
        SliceFormat::Csv => "csv",
        SliceFormat::Pgm => "pgm",
    };
    for &e in &a.lines {
        let path = out.join(format!("slice_{e}.{ext}"));
        export_slice(&slices[e], a.format, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_fill(a: FillArgs) -> Result<()> {
    let prior = MonocularPrior::read(&a.prior)?;
    let dp = DisparityMap::read(&a.dp, MapSource::Dp)?;
    let outcome = fill_gaps(&prior, &dp, a.mode)?;
    outcome.map.write(&a.out)?;
    let summary = FillSummary {
        mode: a.mode,
        a: outcome.a,
        b: outcome.b,
        regions: outcome.regions,
        converged: outcome.converged,
    };
    print!("{}", to_json(&summary)?);
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let manifest = Manifest::read(&a.manifest)?;
    let rows = compare(&manifest, a.tau, a.parallelism.unwrap_or_else(default_parallelism))?;
    if let Some(p) = &a.json {
        write_text(p, &to_json(&rows)?)?;
    }
    print!("{}", compare_table(&rows));
    Ok(())
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "kind": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                e.exit();
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Match(a) => cmd_match(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Correlate(a) => cmd_correlate(a),
        Command::Fill(a) => cmd_fill(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
