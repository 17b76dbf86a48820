use std::fs;
use std::path::{Path, PathBuf};

use fracnet::em::{fit, EMConfig};
use fracnet::eval::{
    child_seed, estimate_fractional_orders, rolling_origin, run_latent_comparison, run_reveal_sweep,
    ComparisonTable, DataSource, DATA_STREAM, INIT_STREAM,
};
use fracnet::inputs::{estimate_all_inputs, resolve_penalty, Penalty};
use fracnet::io::{
    comparison_csv, comparison_seeds_csv, load_csv, sweep_csv, sweep_positions, sweep_seeds_csv, to_csv_string,
    ComparisonDocument, Dataset, FitDocument, PredictionDocument, RunConfig, SweepDocument,
};
use fracnet::kalman::run_filter;
use fracnet::model::{simulate, InputSequence, Noise, TimeSeriesMatrix};
use fracnet::{Error, ErrorKind, Params, Series};
use nalgebra::{DMatrix, DVector};

use crate::plot::{line_plot, Line};
use crate::{Cli, Command, Common, Format};

pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn code(&self) -> u8 {
        self.code
    }

    pub fn message(&self) -> &str {
        &self.message
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(cli: &Cli) -> CliResult {
    let common = &cli.common;
    match &cli.command {
        Command::Simulate {
            params,
            steps,
            initial,
            noiseless,
        } => simulate_cmd(common, params.as_deref(), *steps, initial.as_deref(), *noiseless),
        Command::Fit => fit_cmd(common),
        Command::Predict {
            model,
            data,
            horizon,
            train_fraction,
        } => predict_cmd(common, model, data, *horizon, *train_fraction),
        Command::Compare => compare_cmd(common),
        Command::Sweep => sweep_cmd(common),
        Command::EstimateAlpha { data } => estimate_alpha_cmd(common, data),
    }
}

/// Where machine output goes: files under `--out`, or standard output for
/// the primary document only.
struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn new(common: &Common, config_out: Option<PathBuf>) -> CliResult<Self> {
        let dir = common.out.clone().or(config_out);
        if common.plots && dir.is_none() {
            return Err(CliError::usage("--plots needs an output directory (--out or `output` in the config)"));
        }
        if let Some(d) = &dir {
            fs::create_dir_all(d).map_err(|source| Error::Io {
                path: d.clone(),
                source,
            })?;
        }
        Ok(Self { dir })
    }

    fn primary(&self, name: &str, content: &str) -> CliResult {
        match &self.dir {
            Some(d) => write(&d.join(name), content),
            None => {
                print!("{content}");
                Ok(())
            }
        }
    }

    fn secondary(&self, name: &str, content: &str) -> CliResult {
        match &self.dir {
            Some(d) => write(&d.join(name), content),
            None => Ok(()),
        }
    }

    fn plot_path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }
}

fn write(path: &Path, content: &str) -> CliResult {
    fs::write(path, content).map_err(|source| {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

struct Loaded {
    config: RunConfig,
    data: Dataset,
    orders: Vec<f64>,
    seed: u64,
}

fn load(common: &Common) -> CliResult<Loaded> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::usage("this subcommand needs --config"))?;
    let mut config = RunConfig::load(path).map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(out) = &config.output {
        config.output = Some(base.join(out));
    }
    let data = config.dataset(base)?;
    let orders = config.channel_orders(&data)?;
    let seed = config.seed;
    Ok(Loaded {
        config,
        data,
        orders,
        seed,
    })
}

fn pick(orders: &[f64], ids: &[usize]) -> Vec<f64> {
    ids.iter().map(|&i| orders[i]).collect()
}

fn simulate_cmd(
    common: &Common,
    params: Option<&Path>,
    steps: usize,
    initial: Option<&[f64]>,
    noiseless: bool,
) -> CliResult {
    let noise = |seed: u64| if noiseless { Noise::None } else { Noise::Seeded(seed) };
    let (observed, latent, out) = match params {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let params = Params::from_json(&text).map_err(|e| e.context(path.display().to_string()))?;
            let x0 = match initial {
                Some(v) if v.len() != params.n() => {
                    return Err(CliError::usage(format!(
                        "--initial has {} values but the model observes {} channels",
                        v.len(),
                        params.n()
                    )))
                }
                Some(v) => Some(DVector::from_column_slice(v)),
                None => None,
            };
            let sim = simulate(
                &params,
                x0.as_ref(),
                None,
                &InputSequence::zeros(params.p(), steps.saturating_sub(1)),
                steps,
                noise(common.seed.unwrap_or(0)),
            )?;
            (sim.observed, Some(sim.latent), None)
        }
        None => {
            let loaded = load(common)?;
            let Dataset::Simulated { system, len } = &loaded.data else {
                return Err(CliError::usage("simulate needs --params or a config with a built-in system"));
            };
            let mut sys = system.clone();
            if let Some(v) = initial {
                if v.len() != sys.channels() {
                    return Err(CliError::usage(format!(
                        "--initial has {} values but the system has {} channels",
                        v.len(),
                        sys.channels()
                    )));
                }
                sys.initial = DVector::from_column_slice(v);
            }
            let series = match noise(child_seed(loaded.seed, 0, DATA_STREAM)) {
                Noise::None => {
                    let sim = simulate(&sys.params(), Some(&sys.initial), None, &InputSequence::zeros(0, len - 1), *len, Noise::None)?;
                    sim.observed.with_labels(loaded.data.labels())?
                }
                Noise::Seeded(s) => sys.simulate(*len, s)?,
            };
            (series, None, loaded.config.output.clone())
        }
    };
    let sink = Sink::new(common, out)?;
    sink.primary("observed.csv", &to_csv_string(&observed))?;
    if let Some(z) = latent.filter(|z| z.channels() > 0) {
        sink.secondary("latent.csv", &to_csv_string(&z))?;
    }
    if common.plots {
        plot_series(&sink, "trajectories.svg", "Simulated trajectories", &observed, 0)?;
    }
    Ok(())
}

fn fit_cmd(common: &Common) -> CliResult {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let splits = cfg.splits(loaded.data.channels())?;
    if splits.len() != 1 {
        return Err(CliError::usage("fit takes a single observed/hidden split, not `rows`"));
    }
    let (obs, hidden) = &splits[0];
    let record = loaded.data.record(child_seed(loaded.seed, 0, DATA_STREAM))?;
    let observed = record.select_channels(obs)?;
    let mut alpha_lat = pick(&loaded.orders, hidden);
    alpha_lat.extend(&cfg.latent_alpha);
    let em = EMConfig {
        seed: child_seed(loaded.seed, 0, INIT_STREAM),
        ..cfg.em.clone()
    };
    let report = fit(&observed, &pick(&loaded.orders, obs), &alpha_lat, cfg.p, &em)?;
    if !report.converged {
        log::warn!("EM stopped at max_iter = {} without converging", em.max_iter);
    }
    let labels: Vec<String> = (0..observed.channels()).map(|c| observed.label(c)).collect();
    let doc = FitDocument::new(&report, labels);
    let sink = Sink::new(common, cfg.output.clone())?;
    sink.primary("fit.json", &to_json(&doc))?;
    let q: String = std::iter::once("iteration,q\n".to_string())
        .chain(report.q_trace.iter().enumerate().map(|(i, q)| format!("{},{q}\n", i + 1)))
        .collect();
    sink.secondary("q_trace.csv", &q)?;
    if common.plots {
        let path = sink.plot_path("q_trace.svg").expect("plots need --out");
        let line = Line {
            label: "Q".into(),
            points: report.q_trace.iter().enumerate().map(|(i, &q)| ((i + 1) as f64, q)).collect(),
        };
        line_plot(&path, "Expected log-likelihood by EM iteration", "iteration", "Q", &[line])?;
        if report.z_hat_final.nrows() > 0 {
            let z = Series::new(report.z_hat_final.clone())?;
            plot_series(&sink, "latent.svg", "Filtered latent means", &z, 0)?;
        }
    }
    Ok(())
}

fn predict_cmd(common: &Common, model: &Path, data: &Path, horizon: usize, train_fraction: f64) -> CliResult {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CliError::usage("--train-fraction must lie in (0, 1)"));
    }
    let text = fs::read_to_string(model).map_err(|source| Error::Io {
        path: model.to_path_buf(),
        source,
    })?;
    let (params, lambda) = match serde_json::from_str::<FitDocument>(&text) {
        Ok(doc) => (doc.params.to_params::<f64>()?, Penalty::Fixed(doc.lambda)),
        Err(_) => (
            Params::from_json(&text).map_err(|e| e.context(model.display().to_string()))?,
            Penalty::Auto,
        ),
    };
    let record: Series = load_csv(data)?;
    if record.channels() != params.n() {
        return Err(Error::dims(
            format!("{} channels", data.display()),
            params.n(),
            record.channels(),
        )
        .into());
    }
    let len = record.len();
    let m = params.m();
    let train_len = (len as f64 * train_fraction).round() as usize;
    let z0 = DVector::zeros(m);
    let p0 = DMatrix::identity(m, m);
    let mut inputs = InputSequence::zeros(params.p(), len - 1);
    let mut filtered = run_filter(&params, &record, &inputs, &z0, &p0)?;
    if params.p() > 0 {
        let l = resolve_penalty(lambda, &params, record.values(), &filtered.z_hat, None)?;
        inputs = estimate_all_inputs(&params, record.values(), &filtered.z_hat, l, Default::default(), None)?;
        filtered = run_filter(&params, &record, &inputs, &z0, &p0)?;
    }
    let report = rolling_origin(&params, record.values(), &filtered.z_hat, inputs.values(), train_len, horizon, None)?;
    let labels: Vec<String> = (0..record.channels()).map(|c| record.label(c)).collect();
    let sink = Sink::new(common, None)?;
    match common.format {
        Format::Json => sink.primary("prediction.json", &to_json(&PredictionDocument::new(&report, labels.clone())))?,
        Format::Csv => {
            let mut errors = String::from("channel,error\n");
            for (l, e) in labels.iter().zip(&report.per_node_error) {
                errors.push_str(&format!("{l},{}\n", e.map(|v| v.to_string()).unwrap_or_default()));
            }
            sink.primary("errors.csv", &errors)?;
            sink.secondary("predictions.csv", &to_csv_string(&report.predictions.clone().with_labels(labels)?))?;
        }
    }
    if common.plots {
        let path = sink.plot_path("predictions.svg").expect("plots need --out");
        let mut lines = Vec::new();
        for c in 0..record.channels() {
            lines.push(Line {
                label: format!("{} observed", record.label(c)),
                points: (report.first_target..len).map(|t| (t as f64, record.values()[(c, t)])).collect(),
            });
            lines.push(Line {
                label: format!("{} predicted", record.label(c)),
                points: (0..report.predictions.len())
                    .map(|k| ((report.first_target + k) as f64, report.predictions.values()[(c, k)]))
                    .collect(),
            });
        }
        line_plot(&path, &format!("{horizon}-step predictions"), "sample", "value", &lines)?;
    }
    Ok(())
}

fn compare_cmd(common: &Common) -> CliResult {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let cmp = cfg.comparison();
    let generate = |s: u64| loaded.data.record(s);
    let source = match &loaded.data {
        Dataset::Recorded(r) => DataSource::Fixed(r),
        Dataset::Simulated { .. } => DataSource::PerSeed(&generate),
    };
    let mut tables: Vec<ComparisonTable> = Vec::new();
    for (obs, hidden) in cfg.splits(loaded.data.channels())? {
        let mut alpha_lat = pick(&loaded.orders, &hidden);
        alpha_lat.extend(&cfg.latent_alpha);
        let t = run_latent_comparison(source, &obs, &hidden, &pick(&loaded.orders, &obs), &alpha_lat, &cmp)?;
        tables.push(t);
    }
    let names = loaded.data.labels();
    let label = |i: usize| names[i].clone();
    let sink = Sink::new(common, cfg.output.clone())?;
    match common.format {
        Format::Csv => {
            sink.primary("comparison.csv", &comparison_csv(&tables, &label))?;
            sink.secondary("comparison_seeds.csv", &comparison_seeds_csv(&tables, &label))?;
        }
        Format::Json => sink.primary("comparison.json", &to_json(&ComparisonDocument::new(&tables, &label)))?,
    }
    if common.plots {
        let path = sink.plot_path("q_trace.svg").expect("plots need --out");
        let lines: Vec<Line> = tables
            .iter()
            .filter_map(|t| {
                let seed = t.seeds.first()?;
                let latent = seed.methods.iter().find(|m| m.converged.is_some())?;
                let hidden: Vec<String> = t.hidden_ids.iter().map(|&i| label(i)).collect();
                Some(Line {
                    label: format!("hidden {}", hidden.join(" ")),
                    points: latent.q_trace.iter().enumerate().map(|(i, &q)| ((i + 1) as f64, q)).collect(),
                })
            })
            .collect();
        line_plot(&path, "Expected log-likelihood by EM iteration (first seed)", "iteration", "Q", &lines)?;
    }
    Ok(())
}

fn sweep_cmd(common: &Common) -> CliResult {
    let loaded = load(common)?;
    let cfg = &loaded.config;
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::usage("sweep needs a `sweep` section in the config"))?;
    let generate = |s: u64| loaded.data.record(s);
    let source = match &loaded.data {
        Dataset::Recorded(r) => DataSource::Fixed(r),
        Dataset::Simulated { .. } => DataSource::PerSeed(&generate),
    };
    let table = run_reveal_sweep(source, spec, &loaded.orders, &cfg.comparison())?;
    let names = loaded.data.labels();
    let label = |i: usize| names[i].clone();
    let sink = Sink::new(common, cfg.output.clone())?;
    match common.format {
        Format::Csv => {
            sink.primary("sweep.csv", &sweep_csv(&table, &label))?;
            sink.secondary("sweep_seeds.csv", &sweep_seeds_csv(&table, &label))?;
        }
        Format::Json => sink.primary("sweep.json", &to_json(&SweepDocument::new(&table, &label)))?,
    }
    if common.plots {
        let path = sink.plot_path("sweep.svg").expect("plots need --out");
        let positions = sweep_positions(&table, &label);
        let methods = table.columns.first().map(|c| c.methods.clone()).unwrap_or_default();
        let lines: Vec<Line> = methods
            .iter()
            .map(|&m| Line {
                label: m.label().into(),
                points: table
                    .row(m)
                    .iter()
                    .enumerate()
                    .filter_map(|(k, v)| v.map(|v| (k as f64, v)))
                    .collect(),
            })
            .collect();
        let title = format!("Median fixed-channel error by sweep position ({} … {})", positions[0], positions[positions.len() - 1]);
        line_plot(&path, &title, "sweep position", "relative error", &lines)?;
    }
    Ok(())
}

fn estimate_alpha_cmd(common: &Common, data: &Path) -> CliResult {
    let record: Series = load_csv(data)?;
    let est = estimate_fractional_orders(&record)?;
    let sink = Sink::new(common, None)?;
    match common.format {
        Format::Csv => {
            let mut out = String::from("channel,order,exponent,degenerate\n");
            for (c, e) in est.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    record.label(c),
                    e.order,
                    e.exponent.map(|h| h.to_string()).unwrap_or_default(),
                    e.degenerate
                ));
            }
            sink.primary("alpha.csv", &out)?;
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = est
                .iter()
                .enumerate()
                .map(|(c, e)| {
                    serde_json::json!({
                        "channel": record.label(c),
                        "order": e.order,
                        "exponent": e.exponent,
                        "degenerate": e.degenerate,
                    })
                })
                .collect();
            sink.primary("alpha.json", &to_json(&serde_json::json!({ "format_version": "fracnet.alpha/1", "channels": rows })))?;
        }
    }
    Ok(())
}

fn plot_series(sink: &Sink, name: &str, title: &str, series: &TimeSeriesMatrix<f64>, offset: usize) -> CliResult {
    let path = sink.plot_path(name).expect("plots need --out");
    let lines: Vec<Line> = (0..series.channels())
        .map(|c| Line {
            label: series.label(c),
            points: (0..series.len()).map(|t| ((t + offset) as f64, series.values()[(c, t)])).collect(),
        })
        .collect();
    line_plot(&path, title, "sample", "value", &lines)
}
