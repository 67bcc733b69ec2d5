use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, SecondsFormat, Weekday};
use serde::Serialize;

use retention::calibration::{CalibrationConfig, SearchMode};
use retention::diagnostics::{build_fit_report, fit_models, write_qq_csv, ModelFit, ReportConfig};
use retention::lattice::{
    evolve, lattice_moments, AsymmetricRule, LatticeRule, LatticeState, SymmetricRetentionRule,
    ThreeStateRule,
};
use retention::market_data::{load_price_csv, log_returns, CsvConfig, LoadedPrices, PriceSeries, ReturnSeries};
use retention::pde::{
    grid_moments, natural_cutoff, retention_moments, solve_advection_diffusion, solve_retention,
    suggested_half_width, AdvectionDiffusionParams, Grid, GridConfig, RetentionParams,
    RetentionSolveOptions, SignVariant,
};
use retention::simulate::{
    paths_for_report, simulate_gaussian, simulate_t_proxy, PathSet, ReportModel, TProxyParams,
    REPORT_PATHS,
};
use retention::stats::{histogram, Bins, MomentSummary};

use crate::config::FileConfig;
use crate::error::{CliError, CliResult, EXIT_DATA, EXIT_IO, EXIT_NUMERIC};
use crate::{
    CalibrateArgs, CalibrationArgs, Cli, CsvArgs, LatticeArgs, PathModel, PdeArgs, PdeModel,
    ReportArgs, ReturnsArgs, RuleKind, SimulateArgs, SynthArgs, Variant, DEFAULT_SEED, OUT_DIR_ENV,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) struct Settings {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub timestamp: Option<String>,
}

impl Settings {
    pub fn resolve(cli: &Cli, file: &FileConfig) -> Self {
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| file.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let no_timestamp = cli.no_timestamp || file.no_timestamp.unwrap_or(false);
        Self {
            seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            out_dir,
            timestamp: (!no_timestamp)
                .then(|| chrono::Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)),
        }
    }

    fn output(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(default_name))
    }
}

/// Run metadata written next to every CSV artifact.
#[derive(Serialize)]
struct Sidecar<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    version: &'a str,
    timestamp: Option<&'a str>,
    #[serde(flatten)]
    details: T,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_file<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> retention::Result<()>,
{
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| CliError::from(e).in_file(path))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::new(EXIT_IO, format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, |w| Ok(w.write_all(text.as_bytes())?))
}

fn write_sidecar<T: Serialize>(path: &Path, command: &str, settings: &Settings, details: T) -> CliResult<()> {
    let sidecar = Sidecar {
        command,
        seed: settings.seed,
        version: VERSION,
        timestamp: settings.timestamp.as_deref(),
        details,
    };
    write_json(&sidecar_path(path), &sidecar)
}

fn csv_config(args: &CsvArgs, file: &FileConfig) -> CsvConfig {
    let d = CsvConfig::default();
    CsvConfig {
        date_column: args.date_column.clone().or_else(|| file.csv.date_column.clone()).unwrap_or(d.date_column),
        price_column: args.price_column.clone().or_else(|| file.csv.price_column.clone()).unwrap_or(d.price_column),
        date_format: args.date_format.clone().or_else(|| file.csv.date_format.clone()).unwrap_or(d.date_format),
    }
}

fn calibration_config(args: &CalibrationArgs, file: &FileConfig, seed: u64) -> CalibrationConfig {
    let d = CalibrationConfig::default();
    let full = args.full_search || file.calibration.full_search.unwrap_or(false);
    CalibrationConfig {
        max_iters: file.calibration.max_iters.unwrap_or(d.max_iters),
        tolerance: file.calibration.tolerance.unwrap_or(d.tolerance),
        multistart: args.multistart.or(file.calibration.multistart).unwrap_or(d.multistart),
        seed,
        mode: if full { SearchMode::Full } else { SearchMode::Reduced },
    }
}

fn load_prices(path: &Path, config: &CsvConfig) -> CliResult<LoadedPrices> {
    load_price_csv(open(path)?, config).map_err(|e| CliError::from(e).in_file(path))
}

#[derive(Serialize)]
struct ReturnsMeta<'a> {
    input: &'a Path,
    prices: usize,
    dropped_rows: usize,
    returns: usize,
}

pub(crate) fn returns(args: &ReturnsArgs, settings: &Settings, file: &FileConfig) -> CliResult<()> {
    let loaded = load_prices(&args.input, &csv_config(&args.csv, file))?;
    let r = log_returns(&loaded.series);
    let out = settings.output(&args.output, "returns.csv");
    write_file(&out, |w| r.write_csv(w))?;
    write_sidecar(
        &out,
        "returns",
        settings,
        ReturnsMeta {
            input: &args.input,
            prices: loaded.series.len(),
            dropped_rows: loaded.dropped,
            returns: r.len(),
        },
    )?;
    println!("wrote {} returns to {} ({} rows dropped)", r.len(), out.display(), loaded.dropped);
    Ok(())
}

fn read_returns(path: &Path) -> CliResult<ReturnSeries> {
    ReturnSeries::read_csv(open(path)?).map_err(|e| CliError::from(e).in_file(path))
}

pub(crate) fn calibrate(args: &CalibrateArgs, settings: &Settings, file: &FileConfig) -> CliResult<()> {
    let r = read_returns(&args.input)?;
    let config = ReportConfig {
        bins: Bins::Auto,
        calibration: calibration_config(&args.calibration, file, settings.seed),
        timestamp: settings.timestamp.clone(),
    };
    let fit = fit_models(&r, &config).map_err(|e| CliError::from(e).in_file(&args.input))?;
    let out = settings.output(&args.output, "fit.json");
    write_json(&out, &fit)?;
    println!("wrote fit of {} returns to {}", r.len(), out.display());
    Ok(())
}

fn read_fit(path: &Path) -> CliResult<ModelFit> {
    serde_json::from_reader(open(path)?)
        .map_err(|e| CliError::new(EXIT_IO, format!("{}: not a fit file: {e}", path.display())))
}

#[derive(Serialize)]
struct SimulateMeta<'a> {
    fit: &'a Path,
    model: ReportModel,
    paths: usize,
    steps: usize,
    start_price: f64,
}

pub(crate) fn simulate(args: &SimulateArgs, settings: &Settings) -> CliResult<()> {
    let fit = read_fit(&args.fit)?;
    let model = match args.model {
        PathModel::Gaussian => ReportModel::Gaussian(fit.normal_fit.params),
        PathModel::TProxy => {
            let spec = fit.retention_fit.proxy().ok_or_else(|| {
                CliError::new(
                    EXIT_DATA,
                    format!("{}: the fit has no retention model (returns are not leptokurtic)", args.fit.display()),
                )
            })?;
            ReportModel::TProxy(TProxyParams::from_spec(spec))
        }
    };
    let set = simulate_model(&model, args.steps, args.paths, args.start_price, settings.seed)?;
    let out = settings.output(&args.output, &format!("paths_{}.csv", set.model.name()));
    write_file(&out, |w| set.write_csv(w))?;
    write_sidecar(
        &out,
        "simulate",
        settings,
        SimulateMeta {
            fit: &args.fit,
            model,
            paths: args.paths,
            steps: args.steps,
            start_price: args.start_price,
        },
    )?;
    println!("wrote {} {} paths to {}", args.paths, set.model.name(), out.display());
    Ok(())
}

fn simulate_model(model: &ReportModel, steps: usize, paths: usize, s0: f64, seed: u64) -> CliResult<PathSet> {
    Ok(match model {
        ReportModel::Gaussian(p) => simulate_gaussian(p, steps, paths, s0, seed)?,
        ReportModel::TProxy(p) => simulate_t_proxy(p, steps, paths, s0, seed)?,
    })
}

pub(crate) fn report(args: &ReportArgs, settings: &Settings, file: &FileConfig) -> CliResult<()> {
    let dir = args.output.clone().unwrap_or_else(|| settings.out_dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    let loaded = load_prices(&args.input, &csv_config(&args.csv, file))?;
    let r = log_returns(&loaded.series);
    let bins = match args.bins.or(file.report.bins) {
        Some(n) => Bins::Count(n),
        None => Bins::Auto,
    };
    let config = ReportConfig {
        bins,
        calibration: calibration_config(&args.calibration, file, settings.seed),
        timestamp: settings.timestamp.clone(),
    };
    let report = build_fit_report(&r, &config).map_err(|e| CliError::from(e).in_file(&args.input))?;
    let hist = histogram(&r.values, bins)?;

    write_json(&dir.join("report.json"), &report)?;
    write_file(&dir.join("returns.csv"), |w| r.write_csv(w))?;
    write_file(&dir.join("histogram.csv"), |w| hist.write_csv(w))?;
    write_file(&dir.join("overlay.csv"), |w| report.overlay.write_csv(w))?;
    write_file(&dir.join("qq_normal.csv"), |w| write_qq_csv(&report.qq_normal, w))?;
    if let Some(qq) = &report.qq_t {
        write_file(&dir.join("qq_t.csv"), |w| write_qq_csv(qq, w))?;
    }

    let n_paths = args.paths.or(file.report.paths).unwrap_or(REPORT_PATHS);
    let mut models = vec![ReportModel::Gaussian(report.normal_fit.params)];
    if let Some(spec) = report.retention_fit.proxy() {
        models.push(ReportModel::TProxy(TProxyParams::from_spec(spec)));
    }
    for (i, model) in models.iter().enumerate() {
        let (paths, real) = paths_for_report(&loaded.series, model, n_paths, settings.seed.wrapping_add(i as u64))?;
        write_file(&dir.join(format!("paths_{}.csv", paths.model.name())), |w| paths.write_csv(w))?;
        if i == 0 {
            write_file(&dir.join("real_normalized.csv"), |w| real.write_csv(w))?;
        }
    }
    println!("wrote report for {} returns to {}", r.len(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct LatticeMeta {
    rule: LatticeRule,
    steps: u64,
    dx: f64,
    total_mass: f64,
    moments: MomentSummary,
}

pub(crate) fn lattice(args: &LatticeArgs, settings: &Settings) -> CliResult<()> {
    let rule = match args.rule {
        RuleKind::Symmetric => LatticeRule::from(SymmetricRetentionRule::new(args.k)?),
        RuleKind::Asymmetric => LatticeRule::from(AsymmetricRule::new(args.k)?),
        RuleKind::ThreeState => {
            let (Some(alpha), Some(beta)) = (args.alpha, args.beta) else {
                return Err(CliError::new(EXIT_NUMERIC, "the three-state rule needs --alpha and --beta"));
            };
            LatticeRule::from(ThreeStateRule::new(alpha, 1.0 - alpha - beta, beta)?)
        }
    };
    let state = evolve(&LatticeState::delta(args.dx)?, &rule, args.steps)?;
    let out = settings.output(&args.output, "lattice.csv");
    write_file(&out, |w| state.write_csv(w))?;
    write_sidecar(
        &out,
        "lattice",
        settings,
        LatticeMeta {
            rule,
            steps: args.steps,
            dx: args.dx,
            total_mass: state.total_mass(),
            moments: lattice_moments(&state),
        },
    )?;
    println!("wrote {} cells to {}", state.masses.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
enum PdeParams {
    AdvectionDiffusion(AdvectionDiffusionParams),
    Retention {
        params: RetentionParams,
        variant: SignVariant,
    },
}

#[derive(Serialize)]
struct Snapshot {
    t: f64,
    mass: f64,
    mean: f64,
    variance: f64,
    excess_kurtosis: Option<f64>,
    /// Closed-form variance at `t`.
    theory_variance: f64,
}

#[derive(Serialize)]
struct PdeMeta<'a> {
    params: PdeParams,
    grid: GridConfig,
    diagnostics: &'a retention::pde::GridDiagnostics,
    snapshots: Vec<Snapshot>,
}

pub(crate) fn pde(args: &PdeArgs, settings: &Settings) -> CliResult<()> {
    let (params, final_variance) = match args.model {
        PdeModel::AdvectionDiffusion => {
            let p = AdvectionDiffusionParams::new(args.drift, args.diffusion)?;
            (PdeParams::AdvectionDiffusion(p), 2.0 * p.diffusion * args.t_final)
        }
        PdeModel::Retention => {
            let p = RetentionParams::new(args.k, args.diffusion, args.k4)?;
            let variant = match args.variant {
                Variant::Minus => SignVariant::Minus,
                Variant::Plus => SignVariant::Plus,
            };
            let var = 2.0 * (1.0 - p.retention) * p.diffusion * args.t_final;
            (PdeParams::Retention { params: p, variant }, var)
        }
    };
    let center = match &params {
        PdeParams::AdvectionDiffusion(p) => 0.5 * p.drift * args.t_final,
        PdeParams::Retention { .. } => 0.0,
    };
    let half_width = args.half_width.unwrap_or_else(|| {
        let drift_span = match &params {
            PdeParams::AdvectionDiffusion(p) => 0.5 * (p.drift * args.t_final).abs(),
            PdeParams::Retention { .. } => 0.0,
        };
        suggested_half_width(final_variance) + drift_span
    });
    let grid_cfg = GridConfig {
        center: 0.0,
        ..GridConfig::centered(center, half_width, args.dx, args.dt, args.t_final)
    }
    .with_snapshots(args.snapshots);

    let grid = match &params {
        PdeParams::AdvectionDiffusion(p) => solve_advection_diffusion(p, &grid_cfg)?,
        PdeParams::Retention { params: p, variant } => {
            let options = RetentionSolveOptions {
                variant: *variant,
                cutoff: args.cutoff.or_else(|| natural_cutoff(p)),
            };
            solve_retention(p, &grid_cfg, &options)?
        }
    };
    let snapshots = snapshot_summaries(&grid, &params)?;
    let out = settings.output(&args.output, "pde.csv");
    write_file(&out, |w| grid.write_slice_csv(grid.times.len() - 1, w))?;
    write_sidecar(
        &out,
        "pde",
        settings,
        PdeMeta {
            params,
            grid: grid_cfg,
            diagnostics: &grid.diagnostics,
            snapshots,
        },
    )?;
    for warning in &grid.diagnostics.warnings {
        eprintln!("warning: {warning}");
    }
    println!("wrote {} cells at t = {} to {}", grid.n_cells(), args.t_final, out.display());
    Ok(())
}

fn snapshot_summaries(grid: &Grid, params: &PdeParams) -> CliResult<Vec<Snapshot>> {
    grid.times
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &t)| {
            let m = grid_moments(grid, i)?;
            let theory_variance = match params {
                PdeParams::AdvectionDiffusion(p) => 2.0 * p.diffusion * t,
                PdeParams::Retention { params: p, .. } => retention_moments(p, t)?.variance(),
            };
            Ok(Snapshot {
                t,
                mass: grid.mass(i),
                mean: m.mean,
                variance: m.variance,
                excess_kurtosis: m.excess_kurtosis,
                theory_variance,
            })
        })
        .collect()
}

/// Weekday dates starting at `start` (moved forward off a weekend).
fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

#[derive(Serialize)]
struct SynthMeta {
    model: TProxyParams,
    days: usize,
    start_price: f64,
    start_date: NaiveDate,
}

pub(crate) fn synth(args: &SynthArgs, settings: &Settings) -> CliResult<()> {
    let start = NaiveDate::parse_from_str(&args.start_date, "%Y-%m-%d")
        .map_err(|e| CliError::new(EXIT_IO, format!("bad --start-date {}: {e}", args.start_date)))?;
    if args.days < 2 {
        return Err(CliError::new(EXIT_DATA, "need at least 2 days"));
    }
    let model = TProxyParams {
        df: args.df,
        scale: args.scale,
        drift: args.drift,
    };
    let set = simulate_t_proxy(&model, args.days - 1, 1, args.start_price, settings.seed)?;
    let series = PriceSeries::new(trading_days(start, args.days), set.paths[0].clone())?;
    let out = settings.output(&args.output, "synthetic_prices.csv");
    write_file(&out, |w| series.write_csv(w))?;
    write_sidecar(
        &out,
        "synth",
        settings,
        SynthMeta {
            model,
            days: args.days,
            start_price: args.start_price,
            start_date: start,
        },
    )?;
    println!("wrote {} prices to {}", args.days, out.display());
    Ok(())
}
