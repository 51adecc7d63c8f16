//! Command-line driver behind the `hmbitcn` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::ablation::{ablation_csv, grid_cif, grid_csv, run_ablation, seed_accuracy_csv, CifGrid};
use crate::cif::{CifConfig, CoefficientMode};
use crate::data::{generate_synthetic, load_dataset, save_dataset, DataSource, ExperimentConfig, SyntheticSpec};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{receptive_field_empirical, receptive_field_closed_form, receptive_field_stacked, DirectionMode, HmBiTcn, HmBiTcnConfig};
use crate::rng::{self, Normal};
use crate::snr::{verify_grid, SnrCell, VERIFY_COEFFICIENTS, VERIFY_CORRELATIONS};
use crate::svd::{report_row, Matrix, SvdReportRow};
use crate::tensor::Tensor;
use crate::train::{evaluate, history_csv, run_multi_seed, split, Evaluation, MetricsReport};

#[derive(Parser, Debug)]
#[command(name = "hmbitcn", version, about = "Channel-imposed fusion and HM-BiTCN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// CIF and direction overrides applied on top of the experiment configuration.
#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<i64>,
    /// Direction mode: forward, backward or both.
    #[arg(long)]
    mode: Option<DirectionMode>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo check of the closed-form SNR gain over a coefficient/correlation grid.
    SnrVerify {
        #[command(flatten)]
        common: Common,
        /// Samples per correlation cell.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
    /// Finite-difference check of every model parameter gradient.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Linear-identity residual, shared-pattern error and principal angles of a fused block.
    SvdReport {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        /// Dataset directory; the first sample is analysed. Random Gaussian data otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        length: usize,
    },
    /// Writes a CIF-transformed copy of a dataset.
    CifApply {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        /// Source dataset directory.
        #[arg(long)]
        input: PathBuf,
    },
    /// Generates the synthetic correlated-pair dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Trains once per seed and reports test metrics as mean±std.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluates saved parameters on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        /// Parameter file written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Runs the {CIF off, on} × {forward, backward, both} grid.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Sweeps comma-separated values of t, n, a and b.
    GridCif {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1")]
        t: Vec<i64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1")]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1")]
        b: Vec<f64>,
    },
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("usage: hmbitcn <snr-verify|gradcheck|svd-report|cif-apply|gen-data|train|eval|ablate|grid-cif> [--config <path>] [--seed <int>] [--out <dir>]");
            1
        }
    }
}

/// Synthetic low-SNR task used when no configuration file is given: two
/// classes, pairs `(p, p + C/2)` with uncorrelated signal, strongly
/// correlated noise and input SNR 0.25, plus difference-mode CIF.
pub fn default_experiment() -> ExperimentConfig {
    let spec = SyntheticSpec {
        num_classes: 2,
        subjects_per_class: 15,
        samples_per_subject: 10,
        length: 48,
        channels: 4,
        sigma_s2: 1.0,
        sigma_e2: 4.0,
        rho: 0.0,
        gamma: 0.9,
        seed: 7,
        ..SyntheticSpec::default()
    };
    ExperimentConfig {
        data: DataSource::Synthetic(spec),
        cif: Some(CifConfig::new(1, 2, 1.0, -1.0)),
        model: HmBiTcnConfig::desk_default(4, 2),
        train: crate::train::TrainConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
        split: Default::default(),
        output_dir: PathBuf::from("out"),
    }
}

fn load_experiment(common: &Common) -> Result<ExperimentConfig> {
    let mut exp = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => default_experiment(),
    };
    if let Some(seed) = common.seed {
        exp.train.seeds = vec![seed];
    }
    Ok(exp)
}

fn apply_overrides(exp: &mut ExperimentConfig, o: &Overrides) -> Result<()> {
    if let Some(mode) = o.mode {
        exp.model.direction_mode = mode;
    }
    if o.a.is_some() || o.b.is_some() || o.n.is_some() || o.t.is_some() {
        let slot = if exp.model.cif.is_some() { &mut exp.model.cif } else { &mut exp.cif };
        let cif = slot.get_or_insert_with(|| CifConfig::new(1, 1, 1.0, -1.0));
        if let Some(a) = o.a {
            cif.a = a;
        }
        if let Some(b) = o.b {
            cif.b = b;
        }
        if let Some(n) = o.n {
            cif.n = n;
        }
        if let Some(t) = o.t {
            cif.t = t;
        }
    }
    exp.validate()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::SnrVerify { common, samples } => snr_verify(&common, samples),
        Command::Gradcheck { common, overrides, step } => gradcheck(&common, &overrides, step),
        Command::SvdReport {
            common,
            overrides,
            data,
            length,
        } => svd_report(&common, &overrides, data.as_deref(), length),
        Command::CifApply { common, overrides, input } => cif_apply(&common, &overrides, &input),
        Command::GenData { common } => gen_data(&common),
        Command::Train { common, overrides } => train_cmd(&common, &overrides),
        Command::Eval {
            common,
            overrides,
            model,
        } => eval_cmd(&common, &overrides, &model),
        Command::Ablate { common } => ablate(&common),
        Command::GridCif { common, t, n, a, b } => {
            let exp = load_experiment(&common)?;
            let rows = grid_cif(&exp, &CifGrid { t, n, a, b })?;
            let csv = grid_csv(&rows);
            write_text(&common.out.join("grid_cif.csv"), &csv)?;
            Ok(csv)
        }
    }
}

fn snr_verify(common: &Common, samples: usize) -> Result<String> {
    let cells = verify_grid(&VERIFY_COEFFICIENTS, &VERIFY_CORRELATIONS, samples, common.seed.unwrap_or(0))?;
    let mut csv = format!("{}\n", SnrCell::CSV_HEADER);
    for c in &cells {
        csv.push_str(&c.csv_row());
        csv.push('\n');
    }
    write_text(&common.out.join("snr_verify.csv"), &csv)?;
    let within = cells.iter().filter(|c| c.relative_error() <= 0.02).count();
    Ok(format!(
        "{} cells, {} within 2% relative error ({:.2}%)\n",
        cells.len(),
        within,
        100.0 * within as f64 / cells.len() as f64
    ))
}

/// Model used by `gradcheck`: the configured architecture on a `B=2, T=16`
/// random batch, with learnable suppression-mode CIF unless CIF is configured.
fn gradcheck(common: &Common, overrides: &Overrides, step: f64) -> Result<String> {
    let mut exp = load_experiment(common)?;
    apply_overrides(&mut exp, overrides)?;
    let mut cfg = exp.model_config();
    if cfg.cif.is_none() {
        cfg.cif = Some(
            CifConfig::new(1, cfg.input_channels / 2, 1.0, -1.0).with_mode(CoefficientMode::LearnableSuppression),
        );
    }
    let seed = common.seed.unwrap_or(0);
    let model = HmBiTcn::new(cfg.clone(), seed)?;
    let mut normal = Normal::new(rng::seeded(rng::derive_seed(seed, 7)));
    let x = Tensor::new(
        vec![2, 16, cfg.input_channels],
        (0..32 * cfg.input_channels).map(|_| normal.sample()).collect(),
    )?;
    let labels: Vec<usize> = (0..2).map(|i| i % cfg.num_classes).collect();
    let errors = model.gradient_check(&x, &labels, step)?;
    let mut csv = String::from("parameter,max_relative_error\n");
    for (name, e) in &errors {
        writeln!(csv, "{name},{e:e}").unwrap();
    }
    write_text(&common.out.join("gradcheck.csv"), &csv)?;
    let worst = errors.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    if worst > 1e-4 {
        return Err(Error::Degenerate(format!("gradient check failed: worst relative error {worst:e}")));
    }
    writeln!(csv, "worst {worst:e}").unwrap();
    Ok(csv)
}

fn svd_report(common: &Common, overrides: &Overrides, data: Option<&Path>, length: usize) -> Result<String> {
    let n = overrides.n.unwrap_or(4);
    let (a, b) = (overrides.a.unwrap_or(1.0), overrides.b.unwrap_or(-1.0));
    let x = match data {
        Some(dir) => {
            let ds = load_dataset(dir)?;
            let s = ds
                .samples()
                .first()
                .ok_or_else(|| Error::Argument("dataset is empty".into()))?;
            Matrix::new(ds.length(), ds.channels(), s.values.data().to_vec())?
        }
        None => {
            let mut normal = Normal::new(rng::seeded(common.seed.unwrap_or(0)));
            Matrix::from_fn(length, 2 * n, |_, _| normal.sample())
        }
    };
    let row = report_row(&x, n, a, b)?;
    let csv = format!("{}\n{}\n", SvdReportRow::CSV_HEADER, row.csv_row());
    write_text(&common.out.join("svd_report.csv"), &csv)?;
    Ok(csv)
}

fn cif_apply(common: &Common, overrides: &Overrides, input: &Path) -> Result<String> {
    let ds = load_dataset(input)?;
    let cif = CifConfig::new(
        overrides.t.unwrap_or(1),
        overrides.n.unwrap_or(ds.channels() / 2),
        overrides.a.unwrap_or(1.0),
        overrides.b.unwrap_or(-1.0),
    );
    let fused = ds.apply_cif(&cif)?;
    save_dataset(&fused, &common.out)?;
    Ok(format!(
        "wrote {} samples to {} (t={}, n={}, a={}, b={})\n",
        fused.len(),
        common.out.display(),
        cif.t,
        cif.n,
        cif.a,
        cif.b
    ))
}

fn gen_data(common: &Common) -> Result<String> {
    let exp = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => default_experiment(),
    };
    let DataSource::Synthetic(mut spec) = exp.data else {
        return Err(Error::Config("gen-data needs a synthetic data source".into()));
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let ds = generate_synthetic(&spec)?;
    save_dataset(&ds, &common.out)?;
    Ok(format!(
        "wrote {} samples (K={}, T={}, C={}) to {}\n",
        ds.len(),
        ds.num_classes(),
        ds.length(),
        ds.channels(),
        common.out.display()
    ))
}

fn metrics_csv(rows: &[(u64, Evaluation)]) -> String {
    let mut csv = String::from("seed,accuracy,precision,recall,f1,auroc,auprc\n");
    for (seed, e) in rows {
        let v: Vec<String> = e.values().iter().map(|x| x.to_string()).collect();
        writeln!(csv, "{seed},{}", v.join(",")).unwrap();
    }
    csv
}

fn train_cmd(common: &Common, overrides: &Overrides) -> Result<String> {
    let mut exp = load_experiment(common)?;
    apply_overrides(&mut exp, overrides)?;
    let result = run_multi_seed(&exp)?;
    let out = &common.out;
    for r in &result.runs {
        write_text(&out.join(format!("history_seed{}.csv", r.seed)), &history_csv(&r.outcome.history))?;
        r.outcome.model.save_params(&out.join(format!("model_seed{}.bin", r.seed)))?;
    }
    write_text(&out.join("config.json"), &exp.to_json())?;
    let rows: Vec<(u64, Evaluation)> = result.runs.iter().map(|r| (r.seed, r.evaluation)).collect();
    write_text(&out.join("metrics.csv"), &metrics_csv(&rows))?;
    let summary = result.report.summary();
    write_text(&out.join("summary.txt"), &summary)?;
    Ok(summary)
}

fn eval_cmd(common: &Common, overrides: &Overrides, model_path: &Path) -> Result<String> {
    let mut exp = load_experiment(common)?;
    apply_overrides(&mut exp, overrides)?;
    let ds = exp.dataset()?;
    let model = HmBiTcn::load_params(exp.model_config(), model_path)?;
    let test = ds.subset(&split(&ds, &exp.split)?.test);
    let e = evaluate(&model, &test)?;
    let csv = metrics_csv(&[(common.seed.unwrap_or(0), e)]);
    write_text(&common.out.join("eval.csv"), &csv)?;
    Ok(format!("{csv}{}", MetricsReport::from_runs(&[e]).summary()))
}

fn ablate(common: &Common) -> Result<String> {
    let exp = load_experiment(common)?;
    let rows = run_ablation(&exp)?;
    let csv = ablation_csv(&rows);
    write_text(&common.out.join("ablation.csv"), &csv)?;
    write_text(&common.out.join("ablation_seeds.csv"), &seed_accuracy_csv(&rows))?;
    Ok(csv)
}

/// Empirical and closed-form receptive fields of every convolution layer.
pub fn receptive_field_table(cfg: &HmBiTcnConfig, seed: u64) -> Result<String> {
    let model = HmBiTcn::new(cfg.clone(), seed)?;
    let dil = cfg.conv_layer_dilations();
    let len = 2 + (cfg.kernel_size - 1) * dil.iter().sum::<usize>() * 2;
    let mut out = String::from("layer,dilation,empirical_span,influencing_positions,stacked_formula,closed_form\n");
    for l in 1..=dil.len() {
        let probe = receptive_field_empirical(&model, l, len, seed)?;
        writeln!(
            out,
            "{l},{},{},{},{},{}",
            dil[l - 1],
            probe.span,
            probe.count,
            receptive_field_stacked(cfg.kernel_size, &dil, l),
            receptive_field_closed_form(cfg.kernel_size, &dil, l)
        )
        .unwrap();
    }
    Ok(out)
}
