use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use oocs_core::export::{kernel_to_csv, kernel_to_json};
use oocs_core::filter::on_off_responses;
use oocs_core::gradcheck::{run_grid, GridOptions, BLOCK_TOLERANCE};
use oocs_core::interp::Interpolation;
use oocs_core::kernel::{DEFAULT_C, DEFAULT_GAMMA};
use oocs_core::metrics::{dice, hausdorff_mm};
use oocs_core::perturb::{
    self, PerturbKind, PerturbSpec, DEFAULT_MOTION_MAX_ROT_DEG, DEFAULT_MOTION_MAX_TRANS_MM,
};
use oocs_core::preprocess::{crop_or_pad, crop_or_pad_mask, resample, resample_mask, zscore, ResampleSpec};
use oocs_core::volio::{read_volume, write_mask, write_volume, LoadedVolume};
use oocs_core::{
    make_kernel, BinaryMask, Error, ErrorClass, KernelDims, KernelSpec, Padding, Polarity, Volume,
};

#[derive(Debug, Parser)]
#[command(name = "oocs", version, about = "On/Off center-surround volume toolkit")]
struct Cli {
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true, env = "OOCS_THREADS")]
    threads: Option<usize>,

    /// Seed for every random stream a subcommand uses.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a balanced kernel and write it as JSON or CSV.
    Kernel(KernelArgs),
    /// On and Off responses of a volume.
    Filter(FilterArgs),
    /// Resample, crop or pad, and normalize a volume or mask.
    Preprocess(PreprocessArgs),
    /// Apply blur, noise or motion to a volume.
    Perturb(PerturbArgs),
    /// Dice and Hausdorff distance between predicted and reference masks.
    Eval(EvalArgs),
    /// Finite-difference check of the block gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = 3)]
    dims: usize,
    #[arg(long, default_value = "on")]
    polarity: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KernelFormat::Json)]
    format: KernelFormat,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_on: PathBuf,
    #[arg(long)]
    out_off: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value = "same_zero")]
    padding: String,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Target spacing in mm, x y z.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"])]
    spacing: Option<Vec<f64>>,
    /// Target extent in voxels, x y z.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"])]
    crop: Option<Vec<usize>>,
    #[arg(long)]
    zscore: bool,
    /// Treat the input as a label mask even if stored as floats.
    #[arg(long)]
    mask: bool,
    #[arg(long, default_value = "trilinear")]
    interp: String,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    kind: String,
    /// Blur width in voxels or noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Number of rigid transforms for motion.
    #[arg(long, default_value_t = 0)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_MOTION_MAX_ROT_DEG)]
    max_rot: f64,
    #[arg(long, default_value_t = DEFAULT_MOTION_MAX_TRANS_MM)]
    max_trans: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted masks; repeat to evaluate several cases.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Reference masks, paired with `--pred` in order.
    #[arg(long = "ref", required = true)]
    reference: Vec<PathBuf>,
    /// Case identifiers; default to the prediction file stems.
    #[arg(long)]
    case_id: Vec<String>,
    /// Binarization level for non-mask inputs.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Seeds per grid cell.
    #[arg(long, default_value_t = 2)]
    seeds: usize,
    /// Spatial extent of the probe volume, x y z.
    #[arg(long, num_args = 3, default_values_t = [5, 5, 5])]
    spatial: Vec<usize>,
    /// Probed coordinates per tensor; 0 probes all of them.
    #[arg(long, default_value_t = 24)]
    limit: usize,
    #[arg(long, default_value_t = BLOCK_TOLERANCE)]
    tolerance: f64,
    #[arg(long, value_enum, default_value_t = TableFormat::Table)]
    format: TableFormat,
}

/// Failure with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Config => 2,
            ErrorClass::Io => 3,
            ErrorClass::Numeric => 4,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult = std::result::Result<u8, Failure>;

fn xyz_to_zyx<T: Copy>(v: &[T]) -> [T; 3] {
    [v[2], v[1], v[0]]
}

fn write_output(out: Option<&Path>, text: &str) -> std::result::Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure {
            code: 3,
            message: format!("i/o error on {}: {e}", path.display()),
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure {
                    code: 3,
                    message: format!("writing stdout: {e}"),
                })
        }
    }
}

fn load_image(path: &Path) -> std::result::Result<Volume, Failure> {
    let v = read_volume(path)?.into_volume();
    let bad = v.non_finite_count();
    if bad > 0 {
        warn!("{}: {bad} non-finite voxels", path.display());
    }
    Ok(v)
}

fn load_mask(path: &Path, threshold: f64) -> std::result::Result<BinaryMask, Failure> {
    Ok(match read_volume(path)? {
        LoadedVolume::Mask(m) => m,
        LoadedVolume::Image(v) => BinaryMask::threshold(&v, threshold),
    })
}

fn cmd_kernel(a: &KernelArgs) -> CmdResult {
    let polarity: Polarity = a.polarity.parse()?;
    let spec = KernelSpec::new(a.k, a.gamma, a.c, KernelDims::from_rank(a.dims)?)?;
    let kern = make_kernel(&spec, polarity)?;
    info!("sigma = {}", kern.derivation().sigma);
    let text = match a.format {
        KernelFormat::Json => kernel_to_json(&kern)? + "\n",
        KernelFormat::Csv => kernel_to_csv(&kern),
    };
    write_output(a.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_filter(a: &FilterArgs) -> CmdResult {
    let padding: Padding = a.padding.parse()?;
    let spec = KernelSpec::new(a.k, a.gamma, a.c, KernelDims::Three)?;
    let v = load_image(&a.input)?;
    let r = on_off_responses(&v, &spec, padding)?;
    write_volume(&r.on, &a.out_on)?;
    write_volume(&r.off, &a.out_off)?;
    Ok(0)
}

fn cmd_preprocess(a: &PreprocessArgs) -> CmdResult {
    if a.mask && a.zscore {
        return Err(config_error("--zscore does not apply to masks"));
    }
    let mode: Interpolation = a.interp.parse()?;
    let spacing = a.spacing.as_deref().map(xyz_to_zyx);
    let crop = a.crop.as_deref().map(xyz_to_zyx);
    let spec = spacing.map(|s| ResampleSpec::new(s, mode)).transpose()?;
    let loaded = read_volume(&a.input)?;
    let as_mask = a.mask || matches!(loaded, LoadedVolume::Mask(_));
    if as_mask {
        if a.zscore {
            return Err(config_error("--zscore does not apply to masks"));
        }
        let mut m = match loaded {
            LoadedVolume::Mask(m) => m,
            LoadedVolume::Image(v) => BinaryMask::threshold(&v, 0.5),
        };
        if let Some(s) = spacing {
            m = resample_mask(&m, s)?;
        }
        if let Some(c) = crop {
            m = crop_or_pad_mask(&m, c)?;
        }
        write_mask(&m, &a.out)?;
    } else {
        let mut v = loaded.into_volume();
        if let Some(spec) = &spec {
            v = resample(&v, spec)?;
        }
        if let Some(c) = crop {
            v = crop_or_pad(&v, c)?;
        }
        if a.zscore {
            v = zscore(&v)?;
        }
        write_volume(&v, &a.out)?;
    }
    Ok(0)
}

fn cmd_perturb(a: &PerturbArgs, seed: u64) -> CmdResult {
    let kind: PerturbKind = a.kind.parse()?;
    let spec = PerturbSpec {
        kind,
        sigma: a.sigma,
        n_transforms: a.n,
        seed,
        motion_max_rot: a.max_rot,
        motion_max_trans: a.max_trans,
    };
    spec.validate()?;
    let v = load_image(&a.input)?;
    let out = perturb::apply(&spec, &v)?;
    write_volume(&out, &a.out)?;
    Ok(0)
}

fn cmd_eval(a: &EvalArgs) -> CmdResult {
    if a.pred.len() != a.reference.len() {
        return Err(config_error(format!(
            "{} predictions but {} references",
            a.pred.len(),
            a.reference.len()
        )));
    }
    if !a.case_id.is_empty() && a.case_id.len() != a.pred.len() {
        return Err(config_error("--case-id must be given once per --pred"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure {
        code: 3,
        message: e.to_string(),
    };
    w.write_record(["case_id", "dsc", "hsd_mm"]).map_err(csv_err)?;
    for (i, (pred, reference)) in a.pred.iter().zip(&a.reference).enumerate() {
        let id = match a.case_id.get(i) {
            Some(id) => id.clone(),
            None => pred
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| i.to_string()),
        };
        let p = load_mask(pred, a.threshold)?;
        let r = load_mask(reference, a.threshold)?;
        let dsc = dice(&p, &r)?;
        let hsd = match hausdorff_mm(&p, &r) {
            Ok(d) => format!("{d:?}"),
            Err(e @ Error::UndefinedDistance(_)) => {
                warn!("case {id}: {e}");
                "undefined".to_string()
            }
            Err(e) => return Err(e.into()),
        };
        w.write_record([id, format!("{dsc:?}"), hsd]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure {
        code: 3,
        message: e.to_string(),
    })?;
    write_output(a.csv_out.as_deref(), &String::from_utf8_lossy(&bytes))?;
    Ok(0)
}

fn cmd_gradcheck(a: &GradcheckArgs, seed: u64) -> CmdResult {
    if a.seeds == 0 {
        return Err(config_error("--seeds must be at least 1"));
    }
    let opts = GridOptions {
        spatial: xyz_to_zyx(&a.spatial),
        seeds: a.seeds,
        base_seed: seed,
        limit: (a.limit > 0).then_some(a.limit),
        tolerance: a.tolerance,
    };
    let rows = run_grid(&opts)?;
    let all_pass = rows.iter().all(|r| r.pass);
    let text = match a.format {
        TableFormat::Json => {
            serde_json::to_string_pretty(&rows).map_err(|e| config_error(e.to_string()))? + "\n"
        }
        TableFormat::Table => {
            let mut t = format!(
                "{:>6} {:>5} {:>6} {:>6} {:>13} {:>8} {:>8}  {}\n",
                "k_oocs", "c_in", "c_out", "seeds", "max_rel_err", "checked", "skipped", "result"
            );
            for r in &rows {
                t += &format!(
                    "{:>6} {:>5} {:>6} {:>6} {:>13.3e} {:>8} {:>8}  {}\n",
                    r.k_oocs,
                    r.c_in,
                    r.c_out,
                    r.seeds,
                    r.max_rel_error,
                    r.checked,
                    r.skipped,
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            t
        }
    };
    write_output(None, &text)?;
    Ok(if all_pass { 0 } else { 4 })
}

fn run(cli: &Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_error("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_error(e.to_string()))?;
    }
    match &cli.command {
        Command::Kernel(a) => cmd_kernel(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Perturb(a) => cmd_perturb(a, cli.seed),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .target(env_logger::Target::Stderr)
        .init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("oocs: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
