//! End-to-end runs over dataset entries: features, slices, line solutions,
//! the left-view map and an optional prior fill, plus the batch comparison
//! of several methods' maps against ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costvolume::{build_slices, MatchDistanceSlice, NormScope};
use crate::dp::{check_gc, solve_all, CyclopeanSolution, DPParams};
use crate::error::{Error, Result};
use crate::features::{census_patch_features, double_width, load_feature_volume, FeatureVolume};
use crate::fill::{fill_gaps, project_to_left, DisparityMap, FillMode, FillOutcome, MapSource, MonocularPrior};
use crate::geometry::EpipolarGeometry;
use crate::io::{self, read_calib};
use crate::metrics::{affine_normalize_to_gt, evaluate, MetricReport, DEFAULT_TAU};
use crate::numeric::CompensatedSum;
use crate::raster::{GrayImage, Mask, Raster};

pub const DEFAULT_CENSUS_RADIUS: usize = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    #[default]
    Census,
    B2ft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dp: DPParams,
    pub norm_scope: NormScope,
    pub fill_mode: FillMode,
    pub tau: f64,
    pub features: FeatureSource,
    pub census_radius: usize,
    pub parallelism: usize,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dp: DPParams::default(),
            norm_scope: NormScope::Line,
            fill_mode: FillMode::Affine,
            tau: DEFAULT_TAU,
            features: FeatureSource::Census,
            census_radius: DEFAULT_CENSUS_RADIUS,
            parallelism: default_parallelism(),
            out_dir: PathBuf::from("out"),
        }
    }
}

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.dp.validate()?;
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::Domain(format!("tau {} must be finite and non-negative", self.tau)));
        }
        if self.census_radius == 0 {
            return Err(Error::Domain("census radius must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Domain("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturePaths {
    pub left: PathBuf,
    pub right: PathBuf,
}

/// One stereo pair and its side files. Relative paths in a manifest are
/// taken from the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub left: PathBuf,
    pub right: PathBuf,
    pub calib: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeaturePaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PathBuf>,
    /// Method label to disparity PFM, for `compare`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub methods: BTreeMap<String, PathBuf>,
    /// Labels whose maps are affinely rescaled to the GT range before scoring.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub affine_normalize: Vec<String>,
}

impl DatasetEntry {
    pub fn new(name: impl Into<String>, left: PathBuf, right: PathBuf, calib: PathBuf) -> Self {
        Self {
            name: name.into(),
            left,
            right,
            calib,
            gt: None,
            features: None,
            prior: None,
            methods: BTreeMap::new(),
            affine_normalize: Vec::new(),
        }
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut v = vec![&mut self.left, &mut self.right, &mut self.calib];
        v.extend(self.gt.as_mut());
        if let Some(f) = self.features.as_mut() {
            v.push(&mut f.left);
            v.push(&mut f.right);
        }
        v.extend(self.prior.as_mut());
        v.extend(self.methods.values_mut());
        v
    }

    pub fn resolve(mut self, base: &Path) -> Self {
        for p in self.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self
    }

    /// Makes every path absolute against the working directory.
    pub fn absolutize(mut self) -> Result<Self> {
        for p in self.paths_mut() {
            *p = std::path::absolute(&*p).map_err(|e| Error::io(&*p, e))?;
        }
        Ok(self)
    }

    pub fn check_files(&mut self) -> Result<()> {
        for p in self.paths_mut() {
            if !p.is_file() {
                return Err(Error::io(
                    &*p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file does not exist"),
                ));
            }
        }
        if let Some(bad) = self.affine_normalize.iter().find(|l| !self.methods.contains_key(*l)) {
            return Err(Error::Usage(format!(
                "entry {}: affine_normalize names unknown method {bad}",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub entries: Vec<DatasetEntry>,
}

impl Manifest {
    /// Reads a manifest, resolves its paths and checks that they exist.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::with_capacity(m.entries.len());
        for e in m.entries {
            let mut e = e.resolve(base);
            e.check_files()?;
            entries.push(e);
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Images and side files of an entry, dimension-checked.
pub struct LoadedEntry {
    pub left: GrayImage,
    pub right: GrayImage,
    pub geometry: EpipolarGeometry,
    pub gt: Option<DisparityMap>,
    pub prior: Option<MonocularPrior>,
}

pub fn load_entry(entry: &DatasetEntry) -> Result<LoadedEntry> {
    let left = io::load_gray(&entry.left)?;
    let right = io::load_gray(&entry.right)?;
    if !left.same_dims(&right) {
        return Err(Error::DimensionMismatch(format!(
            "left {}x{} vs right {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    let geometry = read_calib(&entry.calib)?;
    if geometry.width != left.width() || geometry.height != left.height() {
        return Err(Error::DimensionMismatch(format!(
            "calibration says {}x{}, images are {}x{}",
            geometry.width,
            geometry.height,
            left.width(),
            left.height()
        )));
    }
    let gt = entry
        .gt
        .as_deref()
        .map(|p| DisparityMap::read(p, MapSource::Gt))
        .transpose()?;
    let prior = entry.prior.as_deref().map(MonocularPrior::read).transpose()?;
    let dims_ok = |w: usize, h: usize| w == left.width() && h == left.height();
    if let Some(g) = &gt {
        if !dims_ok(g.width(), g.height()) {
            return Err(Error::DimensionMismatch(format!("ground truth is {}x{}", g.width(), g.height())));
        }
    }
    if let Some(p) = &prior {
        if !dims_ok(p.width(), p.height()) {
            return Err(Error::DimensionMismatch(format!("prior is {}x{}", p.width(), p.height())));
        }
    }
    Ok(LoadedEntry {
        left,
        right,
        geometry,
        gt,
        prior,
    })
}

/// Doubled left and right feature volumes for the configured source.
pub fn feature_pair(entry: &DatasetEntry, loaded: &LoadedEntry, config: &PipelineConfig) -> Result<(FeatureVolume, FeatureVolume)> {
    let (fl, fr) = match config.features {
        FeatureSource::Census => (
            census_patch_features(&loaded.left, config.census_radius)?,
            census_patch_features(&loaded.right, config.census_radius)?,
        ),
        FeatureSource::B2ft => {
            let paths = entry
                .features
                .as_ref()
                .ok_or_else(|| Error::Usage(format!("entry {} has no feature files", entry.name)))?;
            (load_feature_volume(&paths.left)?, load_feature_volume(&paths.right)?)
        }
    };
    let double = |f: FeatureVolume| if f.doubled() { Ok(f) } else { double_width(&f) };
    let (fl, fr) = (double(fl)?, double(fr)?);
    let g = &loaded.geometry;
    fl.check_dims(g.height, g.width)?;
    fr.check_dims(g.height, g.width)?;
    Ok((fl, fr))
}

pub fn solve_scene(
    fl: &FeatureVolume,
    fr: &FeatureVolume,
    geometry: &EpipolarGeometry,
    config: &PipelineConfig,
) -> Result<(Vec<MatchDistanceSlice>, CyclopeanSolution)> {
    config.validate()?;
    let slices = build_slices(fl, fr, geometry, config.norm_scope)?;
    let sol = solve_all(&slices, geometry, &config.dp, config.parallelism)?;
    Ok((slices, sol))
}

/// Cyclopean disparity per `(x2, e)` in half-pixel units, invalid where
/// occluded.
pub fn cyclopean_map(sol: &CyclopeanSolution) -> DisparityMap {
    let nx = sol.geometry.nx();
    let h = sol.lines.len();
    let values = Raster::from_fn(nx, h, |x2, e| sol.lines[e].disparity(x2) as f32);
    let valid = Raster::from_fn(nx, h, |x2, e| !sol.lines[e].occluded[x2]);
    DisparityMap::new(values, valid, MapSource::Dp).expect("solution disparities are finite and non-negative")
}

pub fn cyclopean_masks(sol: &CyclopeanSolution) -> [(&'static str, Mask); 3] {
    let nx = sol.geometry.nx();
    let h = sol.lines.len();
    let mask = |f: &dyn Fn(usize, usize) -> bool| Raster::from_fn(nx, h, f);
    [
        ("occlusion", mask(&|x, e| sol.lines[e].occluded[x])),
        ("homogeneous", mask(&|x, e| sol.lines[e].homogeneous[x])),
        ("data", mask(&|x, e| sol.lines[e].data_mask[x])),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub e: usize,
    pub cost: f64,
    pub occluded_count: usize,
    pub homogeneous_count: usize,
    pub gc1_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillSummary {
    pub mode: FillMode,
    pub a: f64,
    pub b: f64,
    pub regions: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub disparity: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filled: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub max_disparity_c: u32,
    pub total_cost: f64,
    pub cells: usize,
    pub occluded_cells: usize,
    pub homogeneous_cells: usize,
    pub data_cells: usize,
    pub gc1_violations: usize,
    /// Lines whose distances fell back to the unit normalizer.
    pub normalizer_fallback_lines: usize,
    pub left_valid_pixels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fill: Option<FillSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
}

pub struct MatchRun {
    pub solution: CyclopeanSolution,
    pub lines: Vec<LineRecord>,
    pub disparity: DisparityMap,
    pub fill: Option<FillOutcome>,
    pub report: MatchReport,
}

pub fn run_match(entry: &DatasetEntry, config: &PipelineConfig) -> Result<MatchRun> {
    config.validate()?;
    let loaded = load_entry(entry)?;
    let (fl, fr) = feature_pair(entry, &loaded, config)?;
    let (slices, solution) = solve_scene(&fl, &fr, &loaded.geometry, config)?;
    let lines: Vec<LineRecord> = solution
        .lines
        .iter()
        .map(|l| LineRecord {
            e: l.e,
            cost: l.cost,
            occluded_count: l.occluded_count(),
            homogeneous_count: l.homogeneous_count(),
            gc1_violations: check_gc(l).gc1_violations.len(),
        })
        .collect();
    let disparity = project_to_left(&solution);
    let fill = loaded
        .prior
        .as_ref()
        .map(|p| fill_gaps(p, &disparity, config.fill_mode))
        .transpose()?;
    let metrics = match &loaded.gt {
        Some(gt) => Some(RunMetrics {
            disparity: evaluate(&disparity, gt, config.tau)?,
            filled: fill.as_ref().map(|f| evaluate(&f.map, gt, config.tau)).transpose()?,
        }),
        None => None,
    };
    let g = &loaded.geometry;
    let count = |f: &dyn Fn(&crate::dp::LineSolution) -> usize| solution.lines.iter().map(f).sum::<usize>();
    let report = MatchReport {
        name: entry.name.clone(),
        width: g.width,
        height: g.height,
        max_disparity_c: g.max_disparity_c,
        total_cost: lines.iter().map(|l| l.cost).collect::<CompensatedSum>().value(),
        cells: g.nx() * g.height,
        occluded_cells: count(&|l| l.occluded_count()),
        homogeneous_cells: count(&|l| l.homogeneous_count()),
        data_cells: count(&|l| l.data_mask.iter().filter(|v| **v).count()),
        gc1_violations: lines.iter().map(|l| l.gc1_violations).sum(),
        normalizer_fallback_lines: slices.iter().filter(|s| s.normalizer_fallback()).count(),
        left_valid_pixels: disparity.valid_count(),
        fill: fill.as_ref().map(|f| FillSummary {
            mode: config.fill_mode,
            a: f.a,
            b: f.b,
            regions: f.regions,
            converged: f.converged,
        }),
        metrics,
    };
    Ok(MatchRun {
        solution,
        lines,
        disparity,
        fill,
        report,
    })
}

/// The resolved inputs and settings of a run, enough to repeat it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub config: PipelineConfig,
    pub entry: DatasetEntry,
}

impl RunRecord {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rec: RunRecord = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        rec.config.validate()?;
        Ok(rec)
    }
}

/// Writes a run's outputs under `config.out_dir`:
///
/// * `disparity.pfm`: left-view disparity in pixels, `+inf` where no match
/// * `cyclopean.pfm`: cyclopean disparity over `(x2, e)`, `+inf` where occluded
/// * `masks/{occlusion,homogeneous,data}.pgm`: cyclopean-grid masks
/// * `masks/left_valid.pgm`: pixels set in `disparity.pfm`
/// * `filled.pfm` when a prior was given
/// * `lines.jsonl`, `report.json`, `config.json`
pub fn write_match(run: &MatchRun, entry: &DatasetEntry, config: &PipelineConfig) -> Result<()> {
    let out = &config.out_dir;
    let masks = out.join("masks");
    create_dir(&masks)?;
    run.disparity.write(&out.join("disparity.pfm"))?;
    run.disparity.write_validity(&masks.join("left_valid.pgm"))?;
    cyclopean_map(&run.solution).write(&out.join("cyclopean.pfm"))?;
    for (name, m) in cyclopean_masks(&run.solution) {
        io::write_mask(&m, &masks.join(format!("{name}.pgm")))?;
    }
    if let Some(f) = &run.fill {
        f.map.write(&out.join("filled.pfm"))?;
    }
    let mut jsonl = String::new();
    for l in &run.lines {
        jsonl.push_str(&serde_json::to_string(l)?);
        jsonl.push('\n');
    }
    let p = out.join("lines.jsonl");
    fs::write(&p, jsonl).map_err(|e| Error::io(&p, e))?;
    write_json(&run.report, &out.join("report.json"))?;
    let record = RunRecord {
        config: config.clone(),
        entry: entry.clone().absolutize()?,
    };
    write_json(&record, &out.join("config.json"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub entry: String,
    pub method: String,
    pub affine_normalized: bool,
    pub report: MetricReport,
}

/// Scores every method of every entry against the entry's ground truth.
pub fn compare(manifest: &Manifest, tau: f64, parallelism: usize) -> Result<Vec<CompareRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    let per_entry: Vec<Result<Vec<CompareRow>>> =
        pool.install(|| manifest.entries.par_iter().map(|e| compare_entry(e, tau)).collect());
    let mut rows = Vec::new();
    for r in per_entry {
        rows.extend(r?);
    }
    Ok(rows)
}

fn compare_entry(entry: &DatasetEntry, tau: f64) -> Result<Vec<CompareRow>> {
    let gt_path = entry
        .gt
        .as_deref()
        .ok_or_else(|| Error::Usage(format!("entry {} has no ground truth", entry.name)))?;
    let gt = DisparityMap::read(gt_path, MapSource::Gt)?;
    entry
        .methods
        .iter()
        .map(|(label, path)| {
            let est = DisparityMap::read(path, MapSource::Filled)?;
            let normalize = entry.affine_normalize.contains(label);
            let est = if normalize { affine_normalize_to_gt(&est, &gt)? } else { est };
            Ok(CompareRow {
                entry: entry.name.clone(),
                method: label.clone(),
                affine_normalized: normalize,
                report: evaluate(&est, &gt, tau)?,
            })
        })
        .collect()
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut out = format!(
        "{:<16} {:<16} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
        "entry", "method", "avg", "bad", "rms", "ssim_err", "psnr", "mi", "pixels"
    );
    for r in rows {
        let m = &r.report;
        let method = if r.affine_normalized { format!("{}*", r.method) } else { r.method.clone() };
        let _ = writeln!(
            out,
            "{:<16} {:<16} {:>10.4} {:>10.4} {:>10.4} {:>10} {:>10} {:>10.4} {:>8}",
            r.entry,
            method,
            m.avg_error,
            m.bad_error,
            m.rms_error,
            m.ssim_error.map_or("-".into(), |v| format!("{v:.4}")),
            m.psnr_sim.to_string(),
            m.mutual_info_sim,
            m.evaluated_pixels
        );
    }
    if rows.iter().any(|r| r.affine_normalized) {
        out.push_str("* affinely rescaled to the ground-truth range\n");
    }
    out
}
