//! Flat `key = value` experiment configuration: parsing, validation, and
//! construction of the library objects commands run on.
//!
//! Unknown keys are rejected, `#` starts a comment, and every value is
//! range-checked up front so a bad file fails before any computation.

use std::fs;
use std::path::{Path, PathBuf};

use ug_core::error::{Error, Result};
use ug_core::field::Field;
use ug_core::guidance::GuidanceConfig;
use ug_core::predictors::{ConvDenoiser, DatasetDenoiser, Predictor, SpectralDenoiser, Spectrum};
use ug_core::resample::{downsample_box, ScalePlan};
use ug_core::rng::RngStream;
use ug_core::sampler::{SamplerConfig, SamplerKind, StepSchedule};
use ug_core::schedule::NoiseSchedule;
use ug_core::textures;

use crate::output::read_pgm;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    LinearBeta,
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictorKind {
    /// Analytic per-mode Wiener denoiser for a stationary Gaussian prior.
    Spectral,
    /// Exact posterior denoiser over a finite item set.
    Dataset,
    /// Small trainable convolutional denoiser, loaded from a parameter file.
    Conv,
}

/// Where dataset items come from: a procedural texture generator or a
/// directory of binary PGM files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Procedural,
    /// Two procedural classes with distinct spectra (labels 0 and 1), for
    /// classifier-free-guidance experiments.
    TwoClass,
    PgmDir,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumKind {
    White,
    LowPass,
}

/// Every experiment knob. Field defaults come from [`Default`]; a config
/// file overrides any subset.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub schedule: ScheduleKind,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub predictor: PredictorKind,
    pub spectrum: SpectrumKind,
    /// Low-pass cutoff radius (in mode units) for the `lowpass` spectrum.
    pub k0: f64,
    /// Parameter file for `predictor = conv`.
    pub conv_params: Option<PathBuf>,
    pub dataset: DatasetKind,
    /// Directory of `.pgm` items for `dataset = pgm-dir`.
    pub dataset_dir: Option<PathBuf>,
    pub dataset_seed: u64,
    pub dataset_count: usize,
    pub channels: usize,
    /// Target-resolution axis lengths, e.g. `32,32` or `32,16,16`.
    pub dims: Vec<usize>,
    /// Per-axis scale factors between trained and target resolution.
    pub plan: Vec<usize>,
    /// Classifier-free guidance scale `w`; only active with a `label`.
    pub cfg_w: f64,
    /// Class label to condition on (two-class dataset predictor only).
    pub label: Option<u32>,
    /// Upsample-guidance strength θ.
    pub theta: f64,
    /// Fraction η of the schedule (from the noisy end) with guidance active.
    pub eta: f64,
    pub sampler: SamplerKind,
    pub eta_ddim: f64,
    /// Visit only this many evenly spaced steps (absent = every step).
    pub sample_steps: Option<usize>,
    pub trajectories: usize,
    pub seed: u64,
    pub theta_list: Vec<f64>,
    pub eta_list: Vec<f64>,
    pub samples_per_cell: usize,
    pub reference_count: usize,
    /// Projection count for sliced Wasserstein distances.
    pub projections: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            schedule: ScheduleKind::LinearBeta,
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            predictor: PredictorKind::Spectral,
            spectrum: SpectrumKind::LowPass,
            k0: 4.0,
            conv_params: None,
            dataset: DatasetKind::Procedural,
            dataset_dir: None,
            dataset_seed: 7,
            dataset_count: 8,
            channels: 1,
            dims: vec![32, 32],
            plan: vec![2, 2],
            cfg_w: 1.0,
            label: None,
            theta: 1.0,
            eta: 1.0,
            sampler: SamplerKind::Ancestral,
            eta_ddim: 0.0,
            sample_steps: None,
            trajectories: 4,
            seed: 0,
            theta_list: vec![0.0, 0.5, 1.0, 1.5],
            eta_list: vec![0.2, 0.6, 1.0],
            samples_per_cell: 64,
            reference_count: 256,
            projections: 64,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidConfig(msg)
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 =
        v.parse().map_err(|_| invalid(format!("{key}: expected a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(invalid(format!("{key}: value must be finite, got `{v}`")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| invalid(format!("{key}: expected a non-negative integer, got `{v}`")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| invalid(format!("{key}: expected a non-negative integer, got `{v}`")))
}

fn parse_u32(key: &str, v: &str) -> Result<u32> {
    v.parse().map_err(|_| invalid(format!("{key}: expected a non-negative integer, got `{v}`")))
}

fn parse_list_usize(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse_usize(key, p.trim())).collect()
}

fn parse_list_f64(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| parse_f64(key, p.trim())).collect()
}

impl ExperimentConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }

    /// Parses config text and validates every key before returning.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected `key = value`, got `{line}`", idx + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "schedule" => {
                self.schedule = match v {
                    "linear" => ScheduleKind::LinearBeta,
                    "cosine" => ScheduleKind::Cosine,
                    _ => return Err(invalid(format!("schedule: expected linear|cosine, got `{v}`"))),
                }
            }
            "steps" => self.steps = parse_usize(key, v)?,
            "beta_start" => self.beta_start = parse_f64(key, v)?,
            "beta_end" => self.beta_end = parse_f64(key, v)?,
            "predictor" => {
                self.predictor = match v {
                    "spectral" => PredictorKind::Spectral,
                    "dataset" => PredictorKind::Dataset,
                    "conv" => PredictorKind::Conv,
                    _ => {
                        return Err(invalid(format!(
                            "predictor: expected spectral|dataset|conv, got `{v}`"
                        )))
                    }
                }
            }
            "spectrum" => {
                self.spectrum = match v {
                    "white" => SpectrumKind::White,
                    "lowpass" => SpectrumKind::LowPass,
                    _ => return Err(invalid(format!("spectrum: expected white|lowpass, got `{v}`"))),
                }
            }
            "k0" => self.k0 = parse_f64(key, v)?,
            "conv_params" => self.conv_params = Some(PathBuf::from(v)),
            "dataset" => {
                self.dataset = match v {
                    "procedural" => DatasetKind::Procedural,
                    "two-class" => DatasetKind::TwoClass,
                    "pgm-dir" => DatasetKind::PgmDir,
                    _ => {
                        return Err(invalid(format!(
                            "dataset: expected procedural|two-class|pgm-dir, got `{v}`"
                        )))
                    }
                }
            }
            "dataset_dir" => self.dataset_dir = Some(PathBuf::from(v)),
            "dataset_seed" => self.dataset_seed = parse_u64(key, v)?,
            "dataset_count" => self.dataset_count = parse_usize(key, v)?,
            "channels" => self.channels = parse_usize(key, v)?,
            "dims" => self.dims = parse_list_usize(key, v)?,
            "plan" => self.plan = parse_list_usize(key, v)?,
            "cfg_w" => self.cfg_w = parse_f64(key, v)?,
            "label" => self.label = Some(parse_u32(key, v)?),
            "theta" => self.theta = parse_f64(key, v)?,
            "eta" => self.eta = parse_f64(key, v)?,
            "sampler" => {
                self.sampler = match v {
                    "ancestral" => SamplerKind::Ancestral,
                    "deterministic" => SamplerKind::Deterministic,
                    _ => {
                        return Err(invalid(format!(
                            "sampler: expected ancestral|deterministic, got `{v}`"
                        )))
                    }
                }
            }
            "eta_ddim" => self.eta_ddim = parse_f64(key, v)?,
            "sample_steps" => self.sample_steps = Some(parse_usize(key, v)?),
            "trajectories" => self.trajectories = parse_usize(key, v)?,
            "seed" => self.seed = parse_u64(key, v)?,
            "theta_list" => self.theta_list = parse_list_f64(key, v)?,
            "eta_list" => self.eta_list = parse_list_f64(key, v)?,
            "samples_per_cell" => self.samples_per_cell = parse_usize(key, v)?,
            "reference_count" => self.reference_count = parse_usize(key, v)?,
            "projections" => self.projections = parse_usize(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(invalid(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Range and cross-field checks; builds the cheap derived objects once
    /// so structural errors surface here rather than mid-run.
    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        let plan = self.scale_plan()?;
        if self.dims.is_empty() {
            return Err(invalid("dims: need at least one axis".into()));
        }
        if self.plan.len() != self.dims.len() {
            return Err(invalid(format!(
                "plan has {} factors but dims has {} axes",
                self.plan.len(),
                self.dims.len()
            )));
        }
        plan.low_dims(&self.dims)?;
        if self.channels == 0 {
            return Err(invalid("channels: must be >= 1".into()));
        }
        if self.k0 <= 0.0 {
            return Err(invalid(format!("k0: must be > 0, got {}", self.k0)));
        }
        if self.cfg_w < 0.0 {
            return Err(invalid(format!("cfg_w: must be >= 0, got {}", self.cfg_w)));
        }
        if !(0.0..=1.0).contains(&self.eta_ddim) {
            return Err(invalid(format!("eta_ddim: must lie in [0, 1], got {}", self.eta_ddim)));
        }
        if self.trajectories == 0 {
            return Err(invalid("trajectories: must be >= 1".into()));
        }
        if self.samples_per_cell == 0 {
            return Err(invalid("samples_per_cell: must be >= 1".into()));
        }
        if self.reference_count == 0 {
            return Err(invalid("reference_count: must be >= 1".into()));
        }
        if self.projections == 0 {
            return Err(invalid("projections: must be >= 1".into()));
        }
        if self.dataset_count == 0 {
            return Err(invalid("dataset_count: must be >= 1".into()));
        }
        // Guidance knobs, including every sweep cell.
        self.guidance(self.theta, self.eta)?;
        if self.theta_list.is_empty() || self.eta_list.is_empty() {
            return Err(invalid("theta_list/eta_list: must be non-empty".into()));
        }
        for &th in &self.theta_list {
            for &e in &self.eta_list {
                self.guidance(th, e)?;
            }
        }
        // The step subset must resolve against the schedule length.
        self.sampler_config(1).steps.steps_for(self.steps)?;
        match self.label {
            Some(l) if l > 1 => {
                return Err(invalid(format!("label: two-class data has labels 0 and 1, got {l}")))
            }
            Some(_) if self.predictor != PredictorKind::Dataset
                || self.dataset != DatasetKind::TwoClass =>
            {
                return Err(invalid(
                    "label: conditioning needs predictor = dataset and dataset = two-class".into(),
                ))
            }
            _ => {}
        }
        if self.predictor == PredictorKind::Conv {
            if self.conv_params.is_none() {
                return Err(invalid("predictor = conv requires conv_params = PATH".into()));
            }
            if self.channels != 1 {
                return Err(invalid("predictor = conv works on single-channel fields".into()));
            }
        }
        if self.dataset == DatasetKind::PgmDir && self.dataset_dir.is_none() {
            return Err(invalid("dataset = pgm-dir requires dataset_dir = PATH".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        match self.schedule {
            ScheduleKind::LinearBeta => {
                NoiseSchedule::make_linear_beta(self.steps, self.beta_start, self.beta_end)
            }
            ScheduleKind::Cosine => NoiseSchedule::make_cosine(self.steps),
        }
    }

    pub fn scale_plan(&self) -> Result<ScalePlan> {
        ScalePlan::new(self.plan.clone())
    }

    pub fn low_dims(&self) -> Result<Vec<usize>> {
        self.scale_plan()?.low_dims(&self.dims)
    }

    pub fn spectrum(&self) -> Spectrum {
        match self.spectrum {
            SpectrumKind::White => Spectrum::White,
            SpectrumKind::LowPass => Spectrum::LowPass { k0: self.k0 },
        }
    }

    /// Guidance configuration at the given strength and window, carrying
    /// the configured CFG scale and scale plan.
    pub fn guidance(&self, theta: f64, eta: f64) -> Result<GuidanceConfig> {
        let mut g = GuidanceConfig::upsample(self.scale_plan()?, theta, eta)?;
        g.cfg_scale = self.cfg_w;
        Ok(g)
    }

    /// Single-resolution sampling (no upsample term), still carrying the
    /// CFG scale so conditional runs stay conditional.
    pub fn plain_guidance(&self) -> GuidanceConfig {
        let mut g = GuidanceConfig::plain(self.dims.len());
        g.cfg_scale = self.cfg_w;
        g
    }

    pub fn sampler_config(&self, trajectories: usize) -> SamplerConfig {
        SamplerConfig {
            kind: self.sampler,
            steps: match self.sample_steps {
                None => StepSchedule::Full,
                Some(count) => StepSchedule::Strided { count },
            },
            eta_ddim: self.eta_ddim,
            seed: self.seed,
            trajectories,
            checkpoint_every: 0,
        }
    }

    /// Dataset items at the target resolution, with labels for the
    /// two-class variant.
    pub fn dataset_items(&self) -> Result<(Vec<Field>, Option<Vec<u32>>)> {
        let mut rng = RngStream::new(self.dataset_seed, 0);
        match self.dataset {
            DatasetKind::Procedural => {
                let items = textures::texture_set(
                    &self.spectrum(),
                    self.channels,
                    &self.dims,
                    self.dataset_count,
                    &mut rng,
                )?;
                Ok((items, None))
            }
            DatasetKind::TwoClass => {
                let (items, labels) = textures::two_class_set(
                    &Spectrum::LowPass { k0: self.k0 },
                    &Spectrum::White,
                    self.channels,
                    &self.dims,
                    self.dataset_count,
                    &mut rng,
                )?;
                Ok((items, Some(labels)))
            }
            DatasetKind::PgmDir => {
                let dir = self.dataset_dir.as_ref().expect("validated");
                let mut paths: Vec<PathBuf> = fs::read_dir(dir)
                    .map_err(|e| invalid(format!("dataset_dir {}: {e}", dir.display())))?
                    .filter_map(|entry| entry.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
                    .collect();
                paths.sort();
                if paths.is_empty() {
                    return Err(invalid(format!("dataset_dir {}: no .pgm files", dir.display())));
                }
                let mut items = Vec::with_capacity(paths.len());
                for p in paths {
                    let f = read_pgm(&p)?;
                    if f.dims() != self.dims.as_slice() || f.channels() != self.channels {
                        return Err(invalid(format!(
                            "{}: item shape {} does not match configured {}x{:?}",
                            p.display(),
                            f.shape_string(),
                            self.channels,
                            self.dims
                        )));
                    }
                    items.push(f);
                }
                Ok((items, None))
            }
        }
    }

    /// The configured predictor, ready for both resolutions of the plan.
    pub fn build_predictor(&self, schedule: &NoiseSchedule) -> Result<Box<dyn Predictor>> {
        match self.predictor {
            PredictorKind::Spectral => {
                Ok(Box::new(SpectralDenoiser::new(self.spectrum(), schedule.clone())))
            }
            PredictorKind::Conv => {
                let path = self.conv_params.as_ref().expect("validated");
                Ok(Box::new(ConvDenoiser::load(path, schedule.clone())?))
            }
            PredictorKind::Dataset => {
                let (items, labels) = self.dataset_items()?;
                let plan = self.scale_plan()?;
                let low_dims = plan.low_dims(&self.dims)?;
                let low_items: Vec<Field> =
                    items.iter().map(|f| downsample_box(f, &plan)).collect::<Result<_>>()?;
                let hi = DatasetDenoiser::new(items, labels.clone(), schedule.clone())?;
                let low = DatasetDenoiser::new(low_items, labels, schedule.clone())?;
                Ok(Box::new(ResolutionPair { hi, low, low_dims }))
            }
        }
    }
}

/// A fixed-shape posterior denoiser deployed at two resolutions: the native
/// items at the target shape and their block means at the trained shape.
/// Dispatch is by input shape, so the guided path can query either side.
struct ResolutionPair {
    hi: DatasetDenoiser,
    low: DatasetDenoiser,
    low_dims: Vec<usize>,
}

impl Predictor for ResolutionPair {
    fn predict(&self, x: &Field, t: usize, cond: Option<u32>) -> Result<Field> {
        if x.dims() == self.low_dims.as_slice() {
            self.low.predict(x, t, cond)
        } else {
            self.hi.predict(x, t, cond)
        }
    }

    fn shape_family(&self) -> String {
        format!("{} or {}", self.hi.shape_family(), self.low.shape_family())
    }
}
