use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use echomeasure_core::dataset::KeyMap;
use echomeasure_core::View;

#[derive(Debug, Parser)]
#[command(name = "echomeasure", version, about = "Automatic M-mode echocardiogram measurement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure indicators from COCO annotations or mask PNGs.
    Measure(MeasureArgs),
    /// Compare predictions with ground truth (MAE/MSE and mask/box AP).
    Eval(EvalArgs),
    /// Generate a synthetic M-mode dataset with analytic ground truth.
    Synth(SynthArgs),
    /// Run the panel attention shape, gradient and complexity checks.
    AttnCheck(AttnCheckArgs),
    /// Validate a COCO annotation file.
    Ingest(IngestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ViewArg {
    Av,
    Lv,
}

impl From<ViewArg> for View {
    fn from(v: ViewArg) -> View {
        match v {
            ViewArg::Av => View::Av,
            ViewArg::Lv => View::Lv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ViewsArg {
    Av,
    Lv,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct KeyArgs {
    /// Per-image JSON key holding the cm-per-pixel ratio.
    #[arg(long, default_value = "scale_cm_per_px")]
    pub scale_key: String,
    /// JSON key holding ground-truth indicator values.
    #[arg(long, default_value = "indicators")]
    pub indicators_key: String,
    /// Per-image JSON key holding the view (av or lv).
    #[arg(long, default_value = "view")]
    pub view_key: String,
}

impl KeyArgs {
    pub fn key_map(&self) -> KeyMap {
        KeyMap {
            scale: self.scale_key.clone(),
            indicators: self.indicators_key.clone(),
            view: self.view_key.clone(),
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["coco", "masks"])))]
pub struct MeasureArgs {
    /// COCO-style annotation JSON.
    #[arg(long)]
    pub coco: Option<PathBuf>,
    /// Mask manifest JSON (as written by `synth`).
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scale for images that do not carry one.
    #[arg(long)]
    pub scale_cm_per_px: Option<f64>,
    /// Force the view instead of reading it from the input.
    #[arg(long, value_enum)]
    pub view: Option<ViewArg>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Skip writing overlay PNGs.
    #[arg(long)]
    pub no_overlays: bool,
    #[command(flatten)]
    pub keys: KeyArgs,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("work").required(true).multiple(true).args(["pred", "detections"])))]
pub struct EvalArgs {
    /// Predicted indicators (`indicators.json` from `measure`).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Ground-truth indicators (`truth.json` from `synth`); defaults to the values in `--coco`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Ground-truth COCO file; required for AP.
    #[arg(long)]
    pub coco: Option<PathBuf>,
    /// Scored predictions in COCO results form, for mask/box AP.
    #[arg(long, requires = "coco")]
    pub detections: Option<PathBuf>,
    /// Write `report.json` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail (exit 1) when a bound below is violated.
    #[arg(long)]
    pub check: bool,
    /// Upper bound on every indicator's MAE (cm).
    #[arg(long, requires = "check")]
    pub mae_max: Option<f64>,
    /// Upper bound on every indicator's MSE (cm^2).
    #[arg(long, requires = "check")]
    pub mse_max: Option<f64>,
    /// Lower bound on avg-mAP.
    #[arg(long, requires = "check")]
    pub map_min: Option<f64>,
    #[command(flatten)]
    pub keys: KeyArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Images per view.
    #[arg(long, default_value_t = 10)]
    pub count: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ViewsArg::Both)]
    pub view: ViewsArg,
    #[arg(long, default_value_t = 640)]
    pub width: usize,
    #[arg(long, default_value_t = 480)]
    pub height: usize,
    #[arg(long, default_value_t = 2.0)]
    pub amp_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub amp_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub scale_cm_per_px: f64,
    /// Noise blobs per class outside its box.
    #[arg(long, default_value_t = 6)]
    pub speckle: usize,
}

#[derive(Debug, Args)]
pub struct AttnCheckArgs {
    /// Gradient-check seeds per shape.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write `report.json` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub coco: PathBuf,
    #[command(flatten)]
    pub keys: KeyArgs,
}
