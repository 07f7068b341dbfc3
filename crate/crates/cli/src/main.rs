mod config;
mod error;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use pcc::estimate::{bootstrap_se, fit, ranks_to_pseudo_obs, FitReport};
use pcc::family::CopulaFamily;
use pcc::garch::{fit_ar_garch, filter_residuals, ljung_box, GarchFit};
use pcc::par::{map_range, set_threads};
use pcc::pcc::{CopulaSample, PccModel, SampleSource};
use pcc::risk::{distress_cube, DistressModel};
use pcc::taildep::{hb_n_tail_coeffs, mc_cpjqe, numeric_tail_limit, default_q_sequence, Tail};
use pcc::dist::GeneratorLaw;

use config::RunConfig;
use error::{config_err, data_err, CliResult, Failure, WithCode, EXIT_DATA, EXIT_NOT_CONVERGED};
use table::{write_json, write_rows, Table};

#[derive(Parser)]
#[command(name = "pcc", version, about = "Principal component copula toolkit")]
struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Write results and exit 0 even when the fit did not converge.
    #[arg(long, global = true)]
    allow_nonconverged: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// AR(1)-GARCH(1,1) filter each return column: residuals.csv, garch_params.json.
    Filter {
        input: Option<PathBuf>,
        /// Input holds price levels rather than log-returns.
        #[arg(long)]
        prices: bool,
    },
    /// Fit a copula to filtered residuals: model.json, fit_report.json.
    Fit {
        input: Option<PathBuf>,
        #[arg(long)]
        family: Option<String>,
        /// Also estimate bootstrap standard deviations (fit.n_boot replicates).
        #[arg(long)]
        bootstrap: bool,
    },
    /// Draw copula observations from a fitted model: sample.csv.
    Simulate {
        model: PathBuf,
        #[arg(short, long, default_value_t = 10_000)]
        n: usize,
    },
    /// Tail dependence of one pair of a model: tail.json, cpjqe.csv.
    Tail {
        model: PathBuf,
        /// 1-based indices of the pair.
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2])]
        pair: Vec<usize>,
        /// Filtered residuals or copula sample for the empirical curve.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Market distress cube and binomial tests: distress_report.{csv,json}, cpjqe.csv.
    Risk {
        input: Option<PathBuf>,
        /// Model file, optionally prefixed with a name: `name=path`.
        #[arg(long = "model")]
        models: Vec<String>,
    },
    /// Compare fit reports by log-likelihood, AIC and BIC: criteria.csv.
    Report { reports: Vec<PathBuf> },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out_dir {
        cfg.out_dir = o;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(config_err("--threads must be positive"));
        }
        set_threads(t)?;
    }
    std::fs::create_dir_all(&cfg.out_dir).code(error::EXIT_CONFIG, format!("cannot create {}", cfg.out_dir.display()))?;
    match cli.cmd {
        Command::Filter { input, prices } => {
            cfg.prices |= prices;
            cmd_filter(&cfg, &input_path(input, &cfg)?)
        }
        Command::Fit { input, family, bootstrap } => {
            if let Some(f) = family {
                cfg.family = f;
            }
            cmd_fit(&cfg, &input_path(input, &cfg)?, bootstrap, cli.allow_nonconverged)
        }
        Command::Simulate { model, n } => cmd_simulate(&cfg, &model, n),
        Command::Tail { model, pair, data } => cmd_tail(&cfg, &model, &pair, data.as_deref()),
        Command::Risk { input, models } => cmd_risk(&cfg, &input_path(input, &cfg)?, &models),
        Command::Report { reports } => cmd_report(&cfg, &reports),
    }
}

fn input_path(arg: Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    arg.or_else(|| cfg.input.clone()).ok_or_else(|| config_err("no input file given (argument or `input` in config)"))
}

fn read_input(cfg: &RunConfig, path: &Path) -> CliResult<Table> {
    Table::read(path)?.select(cfg.columns.as_deref())
}

/// Shortest decimal that parses back to the same value.
fn exact(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Serialize)]
struct ColumnFit {
    name: String,
    #[serde(flatten)]
    fit: GarchFit,
    /// Ljung-Box test on squared residuals, 10 lags.
    ljung_box_sq_p: f64,
}

fn cmd_filter(cfg: &RunConfig, path: &Path) -> CliResult<()> {
    let mut t = read_input(cfg, path)?;
    if cfg.prices {
        if t.values.iter().any(|&v| v <= 0.0) {
            return Err(data_err("price levels must be positive"));
        }
        let d = t.d;
        let lr: Vec<f64> = (1..t.n).flat_map(|r| (0..d).map(move |j| (r, j))).map(|(r, j)| (t.values[r * d + j] / t.values[(r - 1) * d + j]).ln()).collect();
        t = Table { dates: t.dates.map(|d| d[1..].to_vec()), names: t.names, n: t.n - 1, d, values: lr };
    }
    let per = map_range(t.d, |j| {
        let col = t.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(data_err(format!("column {} is constant: degenerate margin", t.names[j])));
        }
        let fit = fit_ar_garch(&col).map_err(|e| data_err(format!("column {}: {e}", t.names[j])))?;
        let x = filter_residuals(&col, &fit.params)?;
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        let lb = ljung_box(&sq, 10)?;
        Ok((ColumnFit { name: t.names[j].clone(), fit, ljung_box_sq_p: lb.p_value }, x))
    });
    let mut fits = Vec::with_capacity(t.d);
    let mut cols = Vec::with_capacity(t.d);
    for r in per {
        let (f, x) = r?;
        fits.push(f);
        cols.push(x);
    }
    let m = t.n - 1;
    let values = (0..m).flat_map(|r| cols.iter().map(move |c| c[r])).collect();
    let out = Table { dates: t.dates.map(|d| d[1..].to_vec()), names: t.names, n: m, d: t.d, values };
    out.write(&cfg.out_dir.join("residuals.csv"), exact)?;
    write_json(&cfg.out_dir.join("garch_params.json"), &fits)?;
    eprintln!("filtered {} series, {m} residual rows", out.d);
    Ok(())
}

fn cmd_fit(cfg: &RunConfig, path: &Path, bootstrap: bool, allow_nonconverged: bool) -> CliResult<()> {
    let family = cfg.family()?;
    let t = read_input(cfg, path)?;
    let u = ranks_to_pseudo_obs(&t.values, t.n, t.d)?;
    let mut result = fit(&u, family, &cfg.fit)?;
    if bootstrap && family.n_shape() > 0 {
        let fc = cfg.fit.clone();
        let b = bootstrap_se(&t.values, t.n, t.d, |ub| fit(ub, family, &fc).map(|r| r.theta), cfg.fit.n_boot, cfg.seed)?;
        if b.failures > 0 {
            eprintln!("warning: {} of {} bootstrap replicates failed", b.failures, cfg.fit.n_boot);
        }
        result.bootstrap_sd = Some(b.sd);
    }
    let report = result.report();
    write_json(&cfg.out_dir.join("fit_report.json"), &report)?;
    if !result.converged && !allow_nonconverged {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            err: anyhow::anyhow!("{} fit did not converge after {} iterations (fit_report.json written; pass --allow-nonconverged to keep the model)", family, result.iterations),
        });
    }
    let json = result.model.to_json()?;
    std::fs::write(cfg.out_dir.join("model.json"), json + "\n").code(EXIT_DATA, "cannot write model.json")?;
    let params: Vec<String> = report.parameters.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    eprintln!("{}: loglik {:.2}, {} ({} iterations)", family, result.loglik, params.join(" "), result.iterations);
    Ok(())
}

fn load_model(path: &Path) -> CliResult<PccModel> {
    let text = std::fs::read_to_string(path).code(EXIT_DATA, format!("cannot read {}", path.display()))?;
    PccModel::from_json(&text).map_err(|e| data_err(format!("{}: invalid model file: {e}", path.display())))
}

fn cmd_simulate(cfg: &RunConfig, model: &Path, n: usize) -> CliResult<()> {
    if n == 0 {
        return Err(config_err("-n must be positive"));
    }
    let m = load_model(model)?;
    let s = m.simulate(n, cfg.seed);
    let names = (1..=s.d).map(|j| format!("u{j}")).collect();
    let t = Table { dates: None, names, n, d: s.d, values: s.u };
    t.write(&cfg.out_dir.join("sample.csv"), |v| format!("{v:.16e}"))
}

/// Copula observations from a table: tables with a date column hold
/// residuals and are ranked; tables without are taken as uniforms.
fn copula_obs(t: &Table) -> CliResult<CopulaSample> {
    if t.dates.is_some() {
        Ok(ranks_to_pseudo_obs(&t.values, t.n, t.d)?)
    } else {
        CopulaSample::new(t.n, t.d, t.values.clone(), SampleSource::Simulated)
            .map_err(|e| data_err(format!("input without a date column must hold copula observations in (0, 1): {e}")))
    }
}

#[derive(Serialize)]
struct CpjqeRow<'a> {
    source: &'a str,
    i: usize,
    j: usize,
    q: f64,
    eta: f64,
}

fn cpjqe_rows<'a>(source: &'a str, u: &CopulaSample, q_grid: &[f64], tail: Tail, pairs: &[(usize, usize)]) -> CliResult<Vec<CpjqeRow<'a>>> {
    let mut rows = Vec::new();
    for &q in q_grid {
        let c = mc_cpjqe(u, q, tail)?;
        for &(i, j) in pairs {
            rows.push(CpjqeRow { source, i: i + 1, j: j + 1, q, eta: c.get(i, j) });
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct TailSummary {
    pair: (usize, usize),
    tail: Tail,
    analytic: Option<f64>,
    numeric_limit: Option<f64>,
    numeric_note: Option<String>,
    q: Vec<f64>,
    values: Vec<f64>,
}

fn cmd_tail(cfg: &RunConfig, model: &Path, pair: &[usize], data: Option<&Path>) -> CliResult<()> {
    let m = load_model(model)?;
    let d = m.dim();
    let &[a, b] = pair else { return Err(config_err("--pair takes two indices")) };
    if a == b || a == 0 || b == 0 || a > d || b > d {
        return Err(config_err(format!("--pair needs two distinct indices in 1..={d}")));
    }
    let (i, j) = (a - 1, b - 1);
    let tail = cfg.cpjqe.tail;
    let analytic = match (d, m.spec().groups.first().map(|g| g.law.clone())) {
        (2, Some(GeneratorLaw::Hyperbolic { alpha, beta })) if m.spec().groups.len() == 2 => {
            let c = hb_n_tail_coeffs(alpha, beta, m.lambda()[1])?;
            Some(if tail == Tail::Lower { c.eta_lower } else { c.eta_upper })
        }
        _ => None,
    };
    let mut summary = TailSummary { pair: (a, b), tail, analytic, numeric_limit: None, numeric_note: None, q: vec![], values: vec![] };
    match numeric_tail_limit(&m, i, j, tail, &default_q_sequence()) {
        Ok(l) => {
            summary.numeric_limit = Some(l.limit);
            summary.q = l.q;
            summary.values = l.values;
        }
        Err(e) => summary.numeric_note = Some(e.to_string()),
    }
    write_json(&cfg.out_dir.join("tail.json"), &summary)?;
    let sim = m.simulate(cfg.cpjqe.n_sim, cfg.seed);
    let mut rows = cpjqe_rows("model", &sim, &cfg.cpjqe.q_grid, tail, &[(i, j)])?;
    let emp;
    if let Some(p) = data {
        emp = copula_obs(&read_input(cfg, p)?)?;
        if emp.d != d {
            return Err(data_err(format!("data has {} columns, model has {d}", emp.d)));
        }
        rows.extend(cpjqe_rows("empirical", &emp, &cfg.cpjqe.q_grid, tail, &[(i, j)])?);
    }
    write_rows(&cfg.out_dir.join("cpjqe.csv"), &rows)
}

fn cmd_risk(cfg: &RunConfig, path: &Path, model_args: &[String]) -> CliResult<()> {
    let u = copula_obs(&read_input(cfg, path)?)?;
    let mut named = Vec::new();
    for arg in model_args {
        let (name, p) = match arg.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(arg);
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let name = if stem == "model" {
                    p.parent().and_then(|d| d.file_name()).map(|s| s.to_string_lossy().into_owned()).unwrap_or(stem)
                } else {
                    stem
                };
                (name, p)
            }
        };
        let m = load_model(&p)?;
        if m.dim() != u.d {
            return Err(data_err(format!("model {name} has dimension {}, data has {}", m.dim(), u.d)));
        }
        named.push((name, m));
    }
    let models: Vec<(String, &dyn DistressModel)> = named.iter().map(|(n, m)| (n.clone(), m as &dyn DistressModel)).collect();
    let report = distress_cube(&u, &models, &cfg.risk, cfg.seed)?;
    write_rows(&cfg.out_dir.join("distress_report.csv"), &report.cells)?;
    write_json(&cfg.out_dir.join("distress_report.json"), &report)?;

    let pairs: Vec<(usize, usize)> = (0..u.d).flat_map(|i| (i + 1..u.d).map(move |j| (i, j))).collect();
    let mut rows = cpjqe_rows("empirical", &u, &cfg.cpjqe.q_grid, cfg.cpjqe.tail, &pairs)?;
    let sims: Vec<(String, CopulaSample)> = named.iter().enumerate().map(|(k, (n, m))| (n.clone(), m.simulate(cfg.cpjqe.n_sim, cfg.seed.wrapping_add(k as u64 + 1)))).collect();
    for (n, s) in &sims {
        rows.extend(cpjqe_rows(n, s, &cfg.cpjqe.q_grid, cfg.cpjqe.tail, &pairs)?);
    }
    write_rows(&cfg.out_dir.join("cpjqe.csv"), &rows)
}

#[derive(Serialize)]
struct CriteriaLine {
    copula: String,
    n_shape: usize,
    loglik: f64,
    aic: f64,
    bic: f64,
    delta_aic: f64,
    delta_bic: f64,
    converged: bool,
}

fn cmd_report(cfg: &RunConfig, paths: &[PathBuf]) -> CliResult<()> {
    if paths.is_empty() {
        return Err(config_err("report needs at least one fit_report.json"));
    }
    let reports: Vec<FitReport> = paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).code(EXIT_DATA, format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).code(EXIT_DATA, format!("{}: not a fit report", p.display()))
        })
        .collect::<CliResult<_>>()?;
    if let Some(r) = reports.iter().find(|r| r.n != reports[0].n) {
        return Err(data_err(format!("reports use different sample sizes ({} and {})", reports[0].n, r.n)));
    }
    // differences are taken against the Gaussian fit when present
    let base = reports.iter().find(|r| r.family == CopulaFamily::Gauss).unwrap_or(&reports[0]);
    let lines: Vec<CriteriaLine> = reports
        .iter()
        .map(|r| CriteriaLine {
            copula: r.label.clone(),
            n_shape: r.family.n_shape(),
            loglik: r.loglik,
            aic: r.aic,
            bic: r.bic,
            delta_aic: r.aic - base.aic,
            delta_bic: r.bic - base.bic,
            converged: r.converged,
        })
        .collect();
    println!("{:<16} {:>7} {:>12} {:>10} {:>10}", "copula", "shape", "loglik", "dAIC", "dBIC");
    for l in &lines {
        println!("{:<16} {:>7} {:>12.1} {:>10.1} {:>10.1}", l.copula, l.n_shape, l.loglik, l.delta_aic, l.delta_bic);
    }
    write_rows(&cfg.out_dir.join("criteria.csv"), &lines)
}
