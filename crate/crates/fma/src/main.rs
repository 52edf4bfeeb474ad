use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fma::cv::{cv_compare, CvError, CvOptions, Method, SelectBy};
use fma::data::{load_csv, split_indices, DataError, Dataset, Family};
use fma::harness::{run_study1, run_study2, Case, Study1Options, Study2Options, STUDY1_N_GRID, STUDY2_BETA3_GRID};
use fma::modelset_io::{read_model_set, ModelSetError};
use fma::report::{band_csv, emit, study_bytes, to_json, write_atomic, BandRow, Format};
use fma_core::averaging::{average_linear_fits, average_logistic_fits, prediction_bands, BandConfig};
use fma_core::weights::{LinearFits, LogisticFits};
use fma_core::{ModelSet, Scheme};

#[derive(Parser)]
#[command(name = "fma", version, about = "Frequentist model averaging for linear and logistic regression")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Monte Carlo replications or cross-validation repeats.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Write the estimated risk matrix and weights as JSON to this file.
    #[arg(long, global = true)]
    dump_q: Option<PathBuf>,
    /// Worker threads (0 lets the runtime decide).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Headed numeric CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long, value_enum, default_value = "linear")]
    family: Family,
    /// Candidate models as JSON lines; all subsets of the predictors otherwise.
    #[arg(long)]
    models: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Weights and averaged estimate at one target point.
    Weights {
        #[command(flatten)]
        data: DataArgs,
        /// Predictor values of the target point, without the intercept.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x_star: Vec<f64>,
        #[arg(long, default_value = "optimal")]
        scheme: Scheme,
    },
    /// Averaged predictions for every row of a second CSV.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "optimal")]
        scheme: Scheme,
    },
    /// Bias and variance of the averaged and oracle estimators over n.
    Study1 {
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["a", "b"])]
        case: Vec<Case>,
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Keep one design for all replications.
        #[arg(long)]
        fixed_design: bool,
    },
    /// Averaged, AIC-weighted and oracle estimators over a grid of the last coefficient.
    Study2 {
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["linear", "logistic"])]
        family: Vec<Family>,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["a", "b"])]
        case: Vec<Case>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta3: Option<Vec<f64>>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_values = ["optimal", "aic"])]
        scheme: Vec<Scheme>,
        #[arg(long)]
        fixed_design: bool,
    },
    /// Repeated train/test comparison of averaging, best subset and the full model.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        n_train: usize,
        #[arg(long, value_enum, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long, value_enum, default_value = "cv")]
        select_by: SelectBy,
    },
    /// Prediction bands for a held-out test set from subsampled training fits.
    Band {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        n_train: usize,
        #[arg(long, default_value_t = 50)]
        n_sub: usize,
        #[arg(long, default_value_t = 0.9)]
        level: f64,
        #[arg(long, default_value = "optimal")]
        scheme: Scheme,
    },
}

fn load(args: &DataArgs) -> anyhow::Result<(Dataset, ModelSet)> {
    let data = load_csv(&args.data, &args.response, args.family)?;
    let models = match &args.models {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
            read_model_set(BufReader::new(f))?
        }
        None => ModelSet::all_subsets(1, data.n_predictors())?,
    };
    if models.full_dim() != data.design.ncols() {
        return Err(DataError::Csv {
            line: 0,
            message: format!(
                "model set expects {} design columns, data has {}",
                models.full_dim(),
                data.design.ncols()
            ),
        }
        .into());
    }
    Ok((data, models))
}

fn with_intercept(x: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(x.iter().copied()).collect()
}

fn averaged(data: &Dataset, models: &ModelSet, points: &[Vec<f64>], scheme: Scheme) -> anyhow::Result<Vec<fma_core::AveragedEstimate>> {
    Ok(match data.family {
        Family::Linear => {
            let fits = LinearFits::new(&data.design, &data.response, models)?;
            points
                .iter()
                .map(|p| average_linear_fits(&fits, p, scheme))
                .collect::<Result<_, _>>()?
        }
        Family::Logistic => {
            let fits = LogisticFits::new(&data.design, &data.response, models)?;
            points
                .iter()
                .map(|p| average_logistic_fits(&fits, p, scheme))
                .collect::<Result<_, _>>()?
        }
    })
}

fn dump(path: Option<&Path>, estimates: &[fma_core::AveragedEstimate]) -> anyhow::Result<()> {
    if let Some(p) = path {
        write_atomic(p, &to_json(&estimates)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    if g.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(g.threads).build_global()?;
    }
    let out = g.out.as_deref();
    match cli.command {
        Command::Weights { data, x_star, scheme } => {
            let (ds, models) = load(&data)?;
            if x_star.len() != ds.n_predictors() {
                bail!(DataError::Csv {
                    line: 0,
                    message: format!("--x-star has {} values, data has {} predictors", x_star.len(), ds.n_predictors()),
                });
            }
            let est = averaged(&ds, &models, &[with_intercept(&x_star)], scheme)?;
            dump(g.dump_q.as_deref(), &est)?;
            let e = &est[0];
            let bytes = match g.format {
                Format::Json => to_json(&serde_json::json!({
                    "value": e.value,
                    "scheme": e.scheme,
                    "weights": e.weights,
                    "per_model": e.per_model,
                    "models": models.models(),
                }))?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["model", "included", "weight", "estimate"])?;
                    for (k, m) in models.iter().enumerate() {
                        let inc = m.included().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
                        w.write_record([k.to_string(), inc, e.weights[k].to_string(), e.per_model[k].to_string()])?;
                    }
                    w.write_record(["average".to_owned(), String::new(), "1".to_owned(), e.value.to_string()])?;
                    w.into_inner()?
                }
            };
            emit(out, &bytes)?;
        }
        Command::Predict { data, test, scheme } => {
            let (ds, models) = load(&data)?;
            let test_ds = load_csv(&test, &data.response, data.family)?;
            if test_ds.design.ncols() != ds.design.ncols() {
                bail!(DataError::Csv {
                    line: 0,
                    message: "test file has a different number of predictors".into(),
                });
            }
            let points: Vec<Vec<f64>> = (0..test_ds.len()).map(|i| test_ds.design.row(i).to_vec()).collect();
            let est = averaged(&ds, &models, &points, scheme)?;
            dump(g.dump_q.as_deref(), &est)?;
            let bytes = match g.format {
                Format::Json => to_json(&est.iter().map(|e| e.value).collect::<Vec<_>>())?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["index", "actual", "predicted"])?;
                    for (i, e) in est.iter().enumerate() {
                        w.write_record([i.to_string(), test_ds.response[i].to_string(), e.value.to_string()])?;
                    }
                    w.into_inner()?
                }
            };
            emit(out, &bytes)?;
        }
        Command::Study1 { case, n_grid, fixed_design } => {
            let opts = Study1Options {
                cases: case,
                n_grid: n_grid.unwrap_or_else(|| STUDY1_N_GRID.to_vec()),
                n_reps: g.reps.unwrap_or(1000),
                seed: g.seed,
                redraw_design: !fixed_design,
            };
            emit(out, &study_bytes(&run_study1(&opts)?, g.format)?)?;
        }
        Command::Study2 {
            family,
            case,
            beta3,
            n,
            scheme,
            fixed_design,
        } => {
            let opts = Study2Options {
                families: family,
                cases: case,
                beta3_grid: beta3.unwrap_or_else(|| STUDY2_BETA3_GRID.to_vec()),
                n,
                n_reps: g.reps.unwrap_or(500),
                seed: g.seed,
                schemes: scheme,
                redraw_design: !fixed_design,
            };
            emit(out, &study_bytes(&run_study2(&opts)?, g.format)?)?;
        }
        Command::Cv {
            data,
            n_train,
            methods,
            select_by,
        } => {
            let ds = load_csv(&data.data, &data.response, data.family)?;
            let mut opts = CvOptions::new(n_train, g.seed);
            opts.n_repeats = g.reps.unwrap_or(5);
            opts.select_by = select_by;
            if let Some(m) = methods {
                opts.methods = m;
            }
            let report = cv_compare(&ds, &opts)?;
            let bytes = match g.format {
                Format::Json => to_json(&report)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["method", "test_error"])?;
                    for (m, e) in report.methods.iter().zip(&report.mean_errors) {
                        w.write_record([m.name().to_owned(), e.to_string()])?;
                    }
                    w.into_inner()?
                }
            };
            emit(out, &bytes)?;
        }
        Command::Band {
            data,
            n_train,
            n_sub,
            level,
            scheme,
        } => {
            let (ds, models) = load(&data)?;
            if ds.family != Family::Linear {
                bail!(DataError::Csv {
                    line: 0,
                    message: "prediction bands need a linear response".into(),
                });
            }
            let (train_rows, test_rows) = split_indices(ds.len(), n_train, g.seed, 0)?;
            let train = ds.subset(&train_rows);
            let test = ds.subset(&test_rows);
            let sigma = fma_core::glm::full_linear_fit(&train.design, &train.response)?.sigma();
            let mut cfg = BandConfig::new(sigma, g.seed);
            cfg.n_sub = n_sub;
            cfg.n_reps = g.reps.unwrap_or(50);
            cfg.level = level;
            cfg.scheme = scheme;
            let points: Vec<Vec<f64>> = (0..test.len()).map(|i| test.design.row(i).to_vec()).collect();
            let bands = prediction_bands(&train.design, &train.response, &models, &points, &cfg)?;
            let rows: Vec<BandRow> = bands
                .iter()
                .enumerate()
                .map(|(i, b)| BandRow {
                    index: i + 1,
                    actual: Some(test.response[i]),
                    predicted: b.point,
                    lower: b.lower,
                    upper: b.upper,
                })
                .collect();
            let bytes = match g.format {
                Format::Json => to_json(&serde_json::json!({ "sigma_full": sigma, "level": level, "bands": rows }))?,
                Format::Csv => band_csv(&rows)?,
            };
            emit(out, &bytes)?;
        }
    }
    Ok(())
}

/// 2 for bad input, 3 for numerical failure, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fma_core::Error>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<CvError>() {
            return match e {
                CvError::Fit(f) if f.is_numerical() => 3,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<ModelSetError>() {
            return match e {
                ModelSetError::Invalid(f) if f.is_numerical() => 3,
                _ => 2,
            };
        }
        if cause.is::<DataError>() || cause.is::<csv::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
