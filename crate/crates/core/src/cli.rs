//! Command-line front end: `synth`, `sense`, `solve`, `evaluate`, `bench`.
//!
//! Failures print one line, `error: code=<code> message=<text>`, to stderr
//! and exit nonzero. The worker thread count follows `RAYON_NUM_THREADS`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::admm::{solve_h, solve_pg, write_diagnostics, SolveResult, SolverParams};
use crate::compressive::{CompressiveOperator, SensingMode};
use crate::error::{Error, Result};
use crate::io::{load_mask, load_meas, load_volume, save_mask, save_meas, save_volume};
use crate::metrics::{evaluate, Binarization, EvalConfig, MetricsReport, PsnrMode};
use crate::synth::{synth_generate, SynthSpec};
use crate::tensor::DenseTensor;

#[derive(Debug, Parser)]
#[command(name = "tenrpca", version, about = "Background subtraction from compressive video measurements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic video with ground truth.
    Synth(SynthArgs),
    /// Take compressive measurements of a volume.
    Sense(SenseArgs),
    /// Recover background and foreground from measurements.
    Solve(SolveArgs),
    /// Score a reconstruction against ground truth.
    Evaluate(EvaluateArgs),
    /// Sweep sampling ratios and models on a synthetic spec.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON synthetic spec; the flags above override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "gt-bg")]
    pub gt_bg: PathBuf,
    #[arg(long = "gt-mask")]
    pub gt_mask: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Frame,
    Holistic,
}

impl From<ModeArg> for SensingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Frame => SensingMode::FrameWise,
            ModeArg::Holistic => SensingMode::Holistic,
        }
    }
}

#[derive(Debug, Args)]
pub struct SenseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Sampling ratio, as a decimal or a fraction such as `1/5`.
    #[arg(long, value_parser = parse_ratio)]
    pub ratio: f64,
    #[arg(long, value_enum, default_value = "frame")]
    pub mode: ModeArg,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    H,
    Pg,
}

impl ModelArg {
    fn name(self) -> &'static str {
        match self {
            ModelArg::H => "h",
            ModelArg::Pg => "pg",
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub meas: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub r3: Option<usize>,
    /// JSON file of solver parameters; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Prefix for `x0.tvol`, `x1.tvol`, `x2.tvol` and `e.tvol`.
    #[arg(long = "out-prefix")]
    pub out_prefix: String,
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PsnrArg {
    Summed,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BinarizeArg {
    Relative,
    Otsu,
}

#[derive(Debug, Args)]
pub struct EvalFlags {
    #[arg(long = "psnr-mode", value_enum, default_value = "summed")]
    pub psnr_mode: PsnrArg,
    #[arg(long, value_enum, default_value = "relative")]
    pub binarize: BinarizeArg,
    /// Relative threshold for `--binarize relative`.
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
}

impl EvalFlags {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            psnr_mode: match self.psnr_mode {
                PsnrArg::Summed => PsnrMode::Summed,
                PsnrArg::Mean => PsnrMode::Mean,
            },
            binarization: match self.binarize {
                BinarizeArg::Relative => Binarization::Relative { tau: self.tau },
                BinarizeArg::Otsu => Binarization::Otsu,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub recon: PathBuf,
    #[arg(long)]
    pub fg: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long = "gt-mask")]
    pub gt_mask: PathBuf,
    /// Ground-truth background; background PSNR needs `--bg` too.
    #[arg(long = "gt-bg")]
    pub gt_bg: Option<PathBuf>,
    /// Estimated background, defaults to the `x1.tvol` next to `--recon`.
    #[arg(long)]
    pub bg: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalFlags,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1/5,1/10,1/20,1/25,1/30")]
    pub ratios: Vec<String>,
    #[arg(long, value_delimiter = ',', value_enum, default_value = "h,pg")]
    pub models: Vec<ModelArg>,
    #[arg(long, value_enum, default_value = "frame")]
    pub mode: ModeArg,
    /// Operator seed.
    #[arg(long = "sense-seed", default_value_t = 11)]
    pub sense_seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory receiving the per-cell artifacts.
    #[arg(long)]
    pub artifacts: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalFlags,
}

/// Parses `0.2` or `1/5`.
pub fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let num: f64 = a.trim().parse().map_err(|_| format!("bad ratio numerator in {s:?}"))?;
            let den: f64 = b.trim().parse().map_err(|_| format!("bad ratio denominator in {s:?}"))?;
            num / den
        }
        None => s.trim().parse().map_err(|_| format!("bad ratio {s:?}"))?,
    };
    if !(value > 0.0 && value <= 1.0) {
        return Err(format!("ratio {s} must lie in (0, 1]"));
    }
    Ok(value)
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(Error::from)
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn solver_params(config: Option<&Path>, lambda: Option<f64>, r3: Option<usize>, dims: [usize; 3]) -> Result<SolverParams> {
    let mut p: SolverParams = match config {
        Some(path) => read_json(path)?,
        None => SolverParams::default(),
    };
    if let Some(l) = lambda {
        p.lambda = l;
    }
    if let Some(r) = r3 {
        let mut ranks = p.holistic_ranks(dims);
        ranks[2] = r;
        p.ranks = Some(ranks);
        p.patch_ranks[2] = r;
    }
    Ok(p)
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    spec.height = a.height.unwrap_or(spec.height);
    spec.width = a.width.unwrap_or(spec.width);
    spec.frames = a.frames.unwrap_or(spec.frames);
    spec.seed = a.seed.unwrap_or(spec.seed);
    let v = synth_generate(&spec)?;
    save_volume(&a.out, &v.volume, Some(spec.seed))?;
    save_volume(&a.gt_bg, &v.background, Some(spec.seed))?;
    save_mask(&a.gt_mask, &v.mask, Some(spec.seed))
}

fn run_sense(a: &SenseArgs) -> Result<()> {
    let (x, h) = load_volume(&a.input)?;
    let op = CompressiveOperator::new(a.mode.into(), h.dims(), a.ratio, a.seed)?;
    save_meas(&a.out, &op.apply(x.data())?)
}

fn save_result(prefix: &str, r: &SolveResult, seed: u64) -> Result<()> {
    for (name, v) in [("x0", &r.x0), ("x1", &r.x1), ("x2", &r.x2), ("e", &r.e)] {
        save_volume(format!("{prefix}{name}.tvol"), v, Some(seed))?;
    }
    Ok(())
}

fn run_solve(a: &SolveArgs) -> Result<()> {
    let y = load_meas(&a.meas)?;
    let op = CompressiveOperator::from_descriptor(&y.descriptor)?;
    let params = solver_params(a.config.as_deref(), a.lambda, a.r3, y.descriptor.dims)?;
    let r = match a.model {
        ModelArg::H => solve_h(&y, &op, &params)?,
        ModelArg::Pg => solve_pg(&y, &op, &params, None)?,
    };
    save_result(&a.out_prefix, &r, y.descriptor.seed)?;
    if let Some(path) = &a.diagnostics {
        let mut w = writer(path)?;
        write_diagnostics(&r.diagnostics, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn write_report(report: &MetricsReport, csv: &Path, json: Option<&Path>) -> Result<()> {
    let mut w = writer(csv)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    if let Some(path) = json {
        let mut w = writer(path)?;
        serde_json::to_writer_pretty(&mut w, &report.to_json())?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let (recon, _) = load_volume(&a.recon)?;
    let (fg, _) = load_volume(&a.fg)?;
    let (truth, _) = load_volume(&a.truth)?;
    let (mask, _) = load_mask(&a.gt_mask)?;
    let background: Option<(DenseTensor, DenseTensor)> = match &a.gt_bg {
        Some(gt) => {
            let est = a.bg.clone().unwrap_or_else(|| a.recon.with_file_name("x1.tvol"));
            Some((load_volume(est)?.0, load_volume(gt)?.0))
        }
        None => None,
    };
    let report = evaluate(
        &recon,
        &fg,
        &truth,
        &mask,
        background.as_ref().map(|(e, g)| (e, g)),
        a.eval.config(),
    )?;
    write_report(&report, &a.out, a.json.as_deref())
}

/// One bench row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub ratio: String,
    pub model: &'static str,
    pub psnr: f64,
    pub ssim: f64,
    pub f_measure: f64,
}

pub const BENCH_HEADER: &str = "ratio,model,psnr,ssim,f_measure";

fn run_bench(a: &BenchArgs) -> Result<()> {
    let spec: SynthSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    let video = synth_generate(&spec)?;
    let dims = spec.dims();
    let params = solver_params(a.config.as_deref(), None, None, dims)?;
    let eval = a.eval.config();
    let mut rows = Vec::new();
    for token in &a.ratios {
        let ratio = parse_ratio(token).map_err(Error::InvalidParameter)?;
        let op = CompressiveOperator::new(a.mode.into(), dims, ratio, a.sense_seed)?;
        let y = op.apply(video.volume.data())?;
        let mut holistic: Option<SolveResult> = None;
        for &model in &a.models {
            let r = match model {
                ModelArg::H => holistic.get_or_insert(solve_h(&y, &op, &params)?).clone(),
                ModelArg::Pg => {
                    if holistic.is_none() {
                        holistic = Some(solve_h(&y, &op, &params)?);
                    }
                    solve_pg(&y, &op, &params, holistic.as_ref())?
                }
            };
            let report = evaluate(&r.x0, &r.x2, &video.volume, &video.mask, None, eval)?;
            if let Some(dir) = &a.artifacts {
                let cell = dir.join(format!("{}_{}", token.replace('/', "_"), model.name()));
                save_result(&format!("{}/", cell.display()), &r, a.sense_seed)?;
            }
            rows.push(BenchRow {
                ratio: token.clone(),
                model: model.name(),
                psnr: report.psnr_mean,
                ssim: report.ssim_mean,
                f_measure: report.f_measure_mean,
            });
        }
    }
    let mut w = writer(&a.out)?;
    writeln!(w, "{BENCH_HEADER}")?;
    for r in &rows {
        writeln!(w, "{},{},{},{},{}", r.ratio, r.model, r.psnr, r.ssim, r.f_measure)?;
    }
    w.flush()?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Sense(a) => run_sense(a),
        Command::Solve(a) => run_solve(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Bench(a) => run_bench(a),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `args` (including the program name), runs the command and maps
/// the outcome to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: code=usage message={}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: code={} message={}", e.code(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
