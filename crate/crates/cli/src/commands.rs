use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use funcmetric::fit::{default_window, DEFAULT_KS_THRESHOLD};
use funcmetric::inference::MIN_REPLICATES;
use funcmetric::random_effects::RandomCoefOptions;
use funcmetric::simlab::Estimator;
use funcmetric::{
    fit_bernstein_wls, fit_parametric_mle, fit_random_coef_mle, lp_metric, marginal_theta_expectation,
    noninferiority_decision, nonparametric_bootstrap, parametric_bootstrap, run_mc_study, select_degree_ks,
    ConstraintMode, ExpDecayParams, MetricSpec, MleOptions, ModelKind, NonparametricBootstrapOptions,
    NonparametricFit, NormOrder, ParametricFit, ResponseCurve, StudyConfig, TrialSeries,
};

use crate::config::Config;
use crate::dataset::{parse_dataset, InputDataset};
use crate::error::CliError;
use crate::plot::emit_plots;
use crate::report::{
    AnalysisReport, ArmFit, ArmSelection, BootstrapSummary, CandidateRow, DatasetSummary, EstimatorRow,
    RandomEffectsSummary, SimulationSummary, WindowMetric,
};

pub const OUT_DIR_ENV: &str = "FUNCMETRIC_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "funcmetric-out";
pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(name = "funcmetric", version)]
#[command(about = "Compare binomial response-rate curves with L_p functional metrics")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Directory for report.json and plots.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Skip SVG output.
    #[arg(long, global = true)]
    no_plots: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a response-rate curve to each arm.
    Fit(FitArgs),
    /// Tabulate KS p-values over Bernstein degrees and pick one per arm.
    SelectDegree(SelectArgs),
    /// Estimate L_p between two arms, with bootstrap uncertainty.
    Metric(MetricArgs),
    /// Same as `metric`, but a bootstrap of at least 200 replicates is required.
    Bootstrap(MetricArgs),
    /// Monte Carlo study of TP, MP and NP estimators.
    Simulate(SimulateArgs),
    /// Random-coefficients exponential-decay model across studies.
    RandomEffects(RandomEffectsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelArg {
    ExpDecay,
    LogLogistic,
    Bernstein,
}

impl FromStr for ModelArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exp-decay" | "exp" | "exponential" => Ok(ModelArg::ExpDecay),
            "log-logistic" | "loglogistic" => Ok(ModelArg::LogLogistic),
            "bernstein" | "np" => Ok(ModelArg::Bernstein),
            other => Err(format!("unknown model `{other}` (exp-decay, log-logistic, bernstein)")),
        }
    }
}

impl ModelArg {
    fn name(self) -> &'static str {
        match self {
            ModelArg::ExpDecay => "exp-decay",
            ModelArg::LogLogistic => "log-logistic",
            ModelArg::Bernstein => "bernstein",
        }
    }
}

/// Metric window `A:B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub a: f64,
    pub b: f64,
}

impl FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("window `{s}` is not of the form A:B"))?;
        let a: f64 = a.trim().parse().map_err(|_| format!("bad window start `{a}`"))?;
        let b: f64 = b.trim().parse().map_err(|_| format!("bad window end `{b}`"))?;
        Ok(Window { a, b })
    }
}

#[derive(Args, Debug)]
struct CurveArgs {
    /// exp-decay, log-logistic or bernstein [default: bernstein].
    #[arg(long)]
    model: Option<ModelArg>,
    /// Fixed Bernstein degree; by default chosen by KS selection.
    #[arg(long)]
    degree: Option<usize>,
    /// Bernstein constraints: strict, relaxed or origin [default: strict].
    #[arg(long)]
    mode: Option<ConstraintMode>,
    /// KS selection threshold [default: 0.2].
    #[arg(long)]
    alpha_ks: Option<f64>,
    /// Start of the Bernstein fitting window [default: 0].
    #[arg(long)]
    t_min: Option<f64>,
    /// End of the Bernstein fitting window [default: last observed time].
    #[arg(long)]
    t_max: Option<f64>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Input CSV (`arm,time,responders,n`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Arms to fit (repeatable) [default: all].
    #[arg(long)]
    arm: Vec<String>,
    #[command(flatten)]
    curve: CurveArgs,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    arm: Vec<String>,
    #[arg(long)]
    alpha_ks: Option<f64>,
    #[arg(long)]
    mode: Option<ConstraintMode>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
}

#[derive(Args, Debug)]
struct MetricArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Reference arm.
    #[arg(long)]
    arm1: Option<String>,
    /// Test arm.
    #[arg(long)]
    arm2: Option<String>,
    #[command(flatten)]
    curve: CurveArgs,
    /// Norm order: a number >= 1 or `inf` [default: 1].
    #[arg(long)]
    p: Option<NormOrder>,
    /// Window start (with --b).
    #[arg(long)]
    a: Option<f64>,
    /// Window end (with --a).
    #[arg(long)]
    b: Option<f64>,
    /// Window `A:B`; repeatable, overrides --a/--b.
    #[arg(long)]
    window: Vec<Window>,
    /// Bootstrap replicates; 0 disables [default: 1000].
    #[arg(long)]
    bootstrap: Option<usize>,
    /// [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Similarity margin d for the non-inferiority decision.
    #[arg(long)]
    margin: Option<f64>,
    /// Re-run degree selection inside each Bernstein bootstrap replicate.
    #[arg(long)]
    reselect_degree: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Subjects per arm [default: 100].
    #[arg(long)]
    n: Option<u32>,
    /// Sampling interval, 1 or 2 [default: 2].
    #[arg(long)]
    spacing: Option<f64>,
    /// Monte Carlo repetitions [default: 200].
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    alpha_ks: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// [default: 30]
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    p: Option<NormOrder>,
    /// [default: 5]
    #[arg(long)]
    a: Option<f64>,
    /// [default: 20]
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Args, Debug)]
struct RandomEffectsArgs {
    /// CSV with a leading `study_id` column.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Arm to model when the file has several.
    #[arg(long)]
    arm: Option<String>,
    /// Gauss–Hermite nodes per dimension [default: 20].
    #[arg(long)]
    nodes: Option<usize>,
}

/// Result of one invocation.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: Option<AnalysisReport>,
    pub report_path: Option<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `argv` (including the program name), runs the command and writes outputs.
pub fn run_command<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let echo: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let (stdout, stderr) = if code == 0 { (text, String::new()) } else { (String::new(), text) };
            return Outcome {
                exit_code: code,
                report: None,
                report_path: None,
                plots: Vec::new(),
                stdout,
                stderr,
            };
        }
    };
    match execute(&cli, echo) {
        Ok(mut report) => {
            let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
            match write_outputs(&mut report, &out_dir, !cli.no_plots) {
                Ok((report_path, plots)) => {
                    let mut stdout = report.to_human();
                    stdout.push_str(&format!("report written to {}\n", report_path.display()));
                    for p in &plots {
                        stdout.push_str(&format!("plot written to {}\n", p.display()));
                    }
                    let stderr = report.warnings.iter().map(|w| format!("warning: {w}\n")).collect();
                    Outcome {
                        exit_code: 0,
                        report: Some(report),
                        report_path: Some(report_path),
                        plots,
                        stdout,
                        stderr,
                    }
                }
                Err(e) => failure(e),
            }
        }
        Err(e) => failure(e),
    }
}

fn failure(e: CliError) -> Outcome {
    Outcome {
        exit_code: e.exit_code(),
        report: None,
        report_path: None,
        plots: Vec::new(),
        stdout: String::new(),
        stderr: format!("error: {e}\n"),
    }
}

fn write_outputs(report: &mut AnalysisReport, out_dir: &Path, plots: bool) -> Result<(PathBuf, Vec<PathBuf>), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let files = if plots {
        let (files, warnings) = emit_plots(report, out_dir)?;
        report.warnings.extend(warnings);
        files
    } else {
        Vec::new()
    };
    let path = out_dir.join("report.json");
    report.write_json(&path)?;
    Ok((path, files))
}

fn execute(cli: &Cli, argv: Vec<String>) -> Result<AnalysisReport, CliError> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let name = match &cli.command {
        Command::Fit(_) => "fit",
        Command::SelectDegree(_) => "select-degree",
        Command::Metric(_) => "metric",
        Command::Bootstrap(_) => "bootstrap",
        Command::Simulate(_) => "simulate",
        Command::RandomEffects(_) => "random-effects",
    };
    let mut report = AnalysisReport::new(name, argv);
    if let Some(path) = &cli.config {
        report.set("config_file", path.display().to_string());
    }
    match &cli.command {
        Command::Fit(args) => run_fit(args, &config, &mut report)?,
        Command::SelectDegree(args) => run_select(args, &config, &mut report)?,
        Command::Metric(args) => run_metric(args, &config, &mut report, false)?,
        Command::Bootstrap(args) => run_metric(args, &config, &mut report, true)?,
        Command::Simulate(args) => run_simulate(args, &config, &mut report)?,
        Command::RandomEffects(args) => run_random_effects(args, &config, &mut report)?,
    }
    Ok(report)
}

fn load_data(flag: &Option<PathBuf>, config: &Config, report: &mut AnalysisReport) -> Result<InputDataset, CliError> {
    let path = config
        .resolve_opt(flag.clone(), "data")?
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    let data = parse_dataset(&path)?;
    report.dataset = Some(DatasetSummary {
        source: path.display().to_string(),
        rows: data.rows.len(),
        arms: data.arms(),
    });
    report.set("data", path.display().to_string());
    report.warnings.extend(data.warnings.iter().cloned());
    Ok(data)
}

fn check_threshold(alpha: f64) -> Result<f64, CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(CliError::Usage(format!("--alpha-ks must lie in (0, 1), got {alpha}")))
    }
}

/// Resolved curve-fitting settings.
#[derive(Debug, Clone, Copy)]
struct CurveSettings {
    model: ModelArg,
    degree: Option<usize>,
    mode: ConstraintMode,
    alpha_ks: f64,
    t_min: Option<f64>,
    t_max: Option<f64>,
}

impl CurveSettings {
    fn resolve(args: &CurveArgs, config: &Config, report: &mut AnalysisReport) -> Result<Self, CliError> {
        let s = Self {
            model: config.resolve(args.model, "model", ModelArg::Bernstein)?,
            degree: config.resolve_opt(args.degree, "degree")?,
            mode: config.resolve(args.mode, "mode", ConstraintMode::Strict)?,
            alpha_ks: check_threshold(config.resolve(args.alpha_ks, "alpha_ks", DEFAULT_KS_THRESHOLD)?)?,
            t_min: config.resolve_opt(args.t_min, "t_min")?,
            t_max: config.resolve_opt(args.t_max, "t_max")?,
        };
        report.set("model", s.model.name());
        if s.model == ModelArg::Bernstein {
            report.set("degree", s.degree);
            report.set("mode", s.mode);
            report.set("alpha_ks", s.alpha_ks);
            report.set("t_min", s.t_min);
            report.set("t_max", s.t_max);
        }
        Ok(s)
    }

    fn window(&self, series: &TrialSeries) -> Result<(f64, f64), CliError> {
        let (lo, hi) = default_window(series)?;
        Ok((self.t_min.unwrap_or(lo), self.t_max.unwrap_or(hi)))
    }
}

enum Fitted {
    Parametric(ParametricFit),
    Bernstein(NonparametricFit),
}

impl Fitted {
    fn curve(&self) -> Result<ResponseCurve, CliError> {
        Ok(match self {
            Fitted::Parametric(f) => f.curve()?,
            Fitted::Bernstein(f) => ResponseCurve::Bernstein(f.curve.clone()),
        })
    }
}

fn observed(series: &TrialSeries) -> Vec<[f64; 2]> {
    let n = series.n() as f64;
    series.observations().iter().map(|o| [o.t, o.y as f64 / n]).collect()
}

fn selection_row(arm: &str, sel: &funcmetric::DegreeSelection) -> ArmSelection {
    ArmSelection {
        arm: arm.to_string(),
        alpha_threshold: sel.alpha_threshold,
        candidates: sel
            .candidates
            .iter()
            .map(|c| CandidateRow {
                m: c.m,
                ks_pvalue: c.ks_pvalue,
                failure: c.failure.clone(),
            })
            .collect(),
        chosen_m: sel.chosen_m,
        used_m: sel.chosen_or_fallback().map(|(f, _)| f.curve.degree()),
    }
}

fn fit_arm(
    arm: &str,
    series: &TrialSeries,
    s: &CurveSettings,
    report: &mut AnalysisReport,
) -> Result<Fitted, CliError> {
    let fitted = match s.model {
        ModelArg::ExpDecay | ModelArg::LogLogistic => {
            let kind = if s.model == ModelArg::ExpDecay {
                ModelKind::ExpDecay
            } else {
                ModelKind::LogLogistic
            };
            let fit = fit_parametric_mle(series, kind, &MleOptions::default())?;
            if !fit.converged {
                report
                    .warnings
                    .push(format!("arm `{arm}`: multi-start optimization did not agree across restarts"));
            }
            Fitted::Parametric(fit)
        }
        ModelArg::Bernstein => {
            let (t_min, t_max) = s.window(series)?;
            let fit = match s.degree {
                Some(m) => fit_bernstein_wls(series, m, s.mode, t_min, t_max)?,
                None => {
                    let sel = select_degree_ks(series, s.alpha_ks, s.mode, t_min, t_max)?;
                    report.selections.push(selection_row(arm, &sel));
                    let (fit, fallback) = sel.chosen_or_fallback().ok_or_else(|| {
                        funcmetric::Error::NonConvergence(format!("arm `{arm}`: no Bernstein degree could be fitted"))
                    })?;
                    if fallback {
                        let best = sel.best_pvalue_degree().unwrap_or(0);
                        report.warnings.push(format!(
                            "arm `{arm}`: no degree reached KS threshold {}; using m = {best} (largest p-value); \
                             consider --mode relaxed or --mode origin",
                            s.alpha_ks
                        ));
                    }
                    fit.clone()
                }
            };
            Fitted::Bernstein(fit)
        }
    };
    report.fits.push(arm_fit(arm, series, s.model, &fitted)?);
    Ok(fitted)
}

fn arm_fit(arm: &str, series: &TrialSeries, model: ModelArg, fitted: &Fitted) -> Result<ArmFit, CliError> {
    let mut estimates = std::collections::BTreeMap::new();
    let (eta, converged) = match fitted {
        Fitted::Parametric(f) => {
            estimates.insert("alpha".into(), f.alpha);
            estimates.insert("beta".into(), f.beta);
            if let Some([sa, sb]) = f.std_errors {
                estimates.insert("se_alpha".into(), sa);
                estimates.insert("se_beta".into(), sb);
            }
            estimates.insert("loglik".into(), f.loglik);
            (Vec::new(), f.converged)
        }
        Fitted::Bernstein(f) => {
            estimates.insert("degree".into(), f.curve.degree() as f64);
            estimates.insert("ks_pvalue".into(), f.ks_pvalue);
            estimates.insert("t_min".into(), f.curve.t_min());
            estimates.insert("t_max".into(), f.curve.t_max());
            estimates.insert("wls_objective".into(), f.objective);
            (f.curve.eta(), true)
        }
    };
    Ok(ArmFit {
        arm: arm.to_string(),
        model: model.name().to_string(),
        estimates,
        eta,
        converged,
        curve: fitted.curve()?,
        observed: observed(series),
    })
}

fn arms_or_all(flag: &[String], config: &Config, data: &InputDataset) -> Vec<String> {
    if !flag.is_empty() {
        return flag.to_vec();
    }
    match config.raw("arm") {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => data.arms(),
    }
}

fn run_fit(args: &FitArgs, config: &Config, report: &mut AnalysisReport) -> Result<(), CliError> {
    let data = load_data(&args.data, config, report)?;
    let settings = CurveSettings::resolve(&args.curve, config, report)?;
    let arms = arms_or_all(&args.arm, config, &data);
    report.set("arms", &arms);
    for arm in &arms {
        let series = data.series(arm)?;
        fit_arm(arm, &series, &settings, report)?;
    }
    Ok(())
}

fn run_select(args: &SelectArgs, config: &Config, report: &mut AnalysisReport) -> Result<(), CliError> {
    let data = load_data(&args.data, config, report)?;
    let curve = CurveArgs {
        model: Some(ModelArg::Bernstein),
        degree: None,
        mode: args.mode,
        alpha_ks: args.alpha_ks,
        t_min: args.t_min,
        t_max: args.t_max,
    };
    let settings = CurveSettings::resolve(&curve, config, report)?;
    let arms = arms_or_all(&args.arm, config, &data);
    report.set("arms", &arms);
    for arm in &arms {
        let series = data.series(arm)?;
        fit_arm(arm, &series, &settings, report)?;
    }
    Ok(())
}

fn run_metric(args: &MetricArgs, config: &Config, report: &mut AnalysisReport, require_bootstrap: bool) -> Result<(), CliError> {
    let data = load_data(&args.data, config, report)?;
    let settings = CurveSettings::resolve(&args.curve, config, report)?;
    let arm1 = config
        .resolve_opt(args.arm1.clone(), "arm1")?
        .ok_or_else(|| CliError::Usage("--arm1 is required".into()))?;
    let arm2 = config
        .resolve_opt(args.arm2.clone(), "arm2")?
        .ok_or_else(|| CliError::Usage("--arm2 is required".into()))?;
    let p = config.resolve(args.p, "p", NormOrder::Finite(1.0))?;
    let windows = if args.window.is_empty() {
        let a = config.resolve_opt(args.a, "a")?;
        let b = config.resolve_opt(args.b, "b")?;
        match (a, b) {
            (Some(a), Some(b)) => vec![Window { a, b }],
            _ => return Err(CliError::Usage("give --a and --b, or one or more --window A:B".into())),
        }
    } else {
        args.window.clone()
    };
    let specs: Vec<MetricSpec> = windows
        .iter()
        .map(|w| MetricSpec::new(p, w.a, w.b).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<_, _>>()?;
    let replicates = config.resolve(args.bootstrap, "bootstrap", DEFAULT_BOOTSTRAP)?;
    if (require_bootstrap || replicates > 0) && replicates < MIN_REPLICATES {
        return Err(CliError::Usage(format!(
            "--bootstrap needs at least {MIN_REPLICATES} replicates{}",
            if require_bootstrap { "" } else { " (or 0 to disable)" }
        )));
    }
    let seed = config.resolve(args.seed, "seed", DEFAULT_SEED)?;
    let margin = config.resolve_opt(args.margin, "margin")?;
    let reselect = args.reselect_degree || config.get::<bool>("reselect_degree")?.unwrap_or(false);
    report.set("arm1", &arm1);
    report.set("arm2", &arm2);
    report.set("p", p);
    report.set("windows", windows.iter().map(|w| [w.a, w.b]).collect::<Vec<_>>());
    report.set("bootstrap", replicates);
    report.set("seed", seed);
    report.set("margin", margin);
    if settings.model == ModelArg::Bernstein {
        report.set("reselect_degree", reselect);
    }

    let s1 = data.series(&arm1)?;
    let s2 = data.series(&arm2)?;
    let f1 = fit_arm(&arm1, &s1, &settings, report)?;
    let f2 = fit_arm(&arm2, &s2, &settings, report)?;
    let (c1, c2) = (f1.curve()?, f2.curve()?);

    for spec in &specs {
        let m = lp_metric(&c1, &c2, spec)?;
        let boot = if replicates == 0 {
            None
        } else {
            Some(match (&f1, &f2) {
                (Fitted::Parametric(a), Fitted::Parametric(b)) => {
                    parametric_bootstrap(&s1, &s2, a, b, spec, replicates, seed, &MleOptions::default())?
                }
                (Fitted::Bernstein(a), Fitted::Bernstein(b)) => {
                    let opts = NonparametricBootstrapOptions {
                        reselect_degree: reselect,
                        ks_threshold: settings.alpha_ks,
                    };
                    nonparametric_bootstrap(&s1, &s2, a, b, spec, replicates, seed, &opts)?
                }
                _ => unreachable!("both arms use the same model"),
            })
        };
        let noninferiority = match (&boot, margin) {
            (Some(b), Some(d)) => Some(noninferiority_decision(b, d)?),
            (None, Some(_)) => {
                report
                    .warnings
                    .push("a margin was given but the bootstrap is disabled; no decision made".into());
                None
            }
            _ => None,
        };
        report.metrics.push(WindowMetric {
            arm1: arm1.clone(),
            arm2: arm2.clone(),
            a: spec.a,
            b: spec.b,
            p: p.to_string(),
            estimate: m.value,
            scaled: m.scaled_value,
            normalized: m.normalized_value,
            bootstrap: boot.as_ref().map(BootstrapSummary::from),
            noninferiority,
        });
    }
    Ok(())
}

fn run_simulate(args: &SimulateArgs, config: &Config, report: &mut AnalysisReport) -> Result<(), CliError> {
    let base = StudyConfig::default();
    let truth = |fa: Option<f64>, ka: &str, fb: Option<f64>, kb: &str, d: ExpDecayParams| -> Result<ExpDecayParams, CliError> {
        let alpha = config.resolve(fa, ka, d.alpha)?;
        let beta = config.resolve(fb, kb, d.beta)?;
        ExpDecayParams::new(alpha, beta).map_err(|e| CliError::Usage(e.to_string()))
    };
    let p = config.resolve(args.p, "p", base.metric_spec.p)?;
    let a = config.resolve(args.a, "a", base.metric_spec.a)?;
    let b = config.resolve(args.b, "b", base.metric_spec.b)?;
    let study = StudyConfig {
        truth1: truth(args.alpha1, "alpha1", args.beta1, "beta1", base.truth1)?,
        truth2: truth(args.alpha2, "alpha2", args.beta2, "beta2", base.truth2)?,
        horizon: config.resolve(args.horizon, "horizon", base.horizon)?,
        spacing: config.resolve(args.spacing, "spacing", base.spacing)?,
        n: config.resolve(args.n, "n", base.n)?,
        reps: config.resolve(args.reps, "reps", base.reps)?,
        metric_spec: MetricSpec::new(p, a, b).map_err(|e| CliError::Usage(e.to_string()))?,
        ks_threshold: check_threshold(config.resolve(args.alpha_ks, "alpha_ks", DEFAULT_KS_THRESHOLD)?)?,
        seed: config.resolve(args.seed, "seed", DEFAULT_SEED)?,
    };
    study.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    report.set("study", &study);
    let result = run_mc_study(&study)?;
    report.simulation = Some(SimulationSummary {
        l0: result.l0,
        n_points: result.n_points,
        estimators: Estimator::ALL
            .iter()
            .map(|&e| {
                let s = result.summary(e);
                EstimatorRow {
                    estimator: e.label().to_string(),
                    mean_rb: s.mean_rb,
                    mc_se: s.mc_se,
                }
            })
            .collect(),
        mean_m_arm1: result.mean_m_arm1,
        mc_se_m_arm1: result.mc_se_m_arm1,
        mean_m_arm2: result.mean_m_arm2,
        mc_se_m_arm2: result.mc_se_m_arm2,
        selection_fallbacks: result.selection_fallbacks,
        failed_reps: result.failed_reps,
    });
    if result.failed_reps > 0 {
        report
            .warnings
            .push(format!("{} repetitions failed and were dropped", result.failed_reps));
    }
    Ok(())
}

fn run_random_effects(args: &RandomEffectsArgs, config: &Config, report: &mut AnalysisReport) -> Result<(), CliError> {
    let data = load_data(&args.data, config, report)?;
    let arm = config.resolve_opt(args.arm.clone(), "arm")?;
    let nodes = config.resolve(args.nodes, "nodes", RandomCoefOptions::default().nodes)?;
    if nodes < 16 {
        return Err(CliError::Usage("--nodes must be at least 16".into()));
    }
    report.set("arm", &arm);
    report.set("nodes", nodes);
    let studies = data.studies(arm.as_deref())?;
    let opts = RandomCoefOptions {
        nodes,
        ..RandomCoefOptions::default()
    };
    let fit = fit_random_coef_mle(&studies, &opts)?;
    report.warnings.extend(fit.warnings.iter().cloned());

    let t_max = studies
        .iter()
        .filter_map(TrialSeries::max_time)
        .fold(0.0f64, f64::max);
    let mut curve = Vec::new();
    for i in 0..=50 {
        let t = t_max * i as f64 / 50.0;
        match marginal_theta_expectation(&fit.params, t) {
            Ok(v) => curve.push([t, v]),
            Err(e) => report.warnings.push(format!("marginal mean at t = {t}: {e}")),
        }
    }
    let names = ["mu_a", "mu_b", "sigma_a", "sigma_b", "sigma_ab"];
    report.random_effects = Some(RandomEffectsSummary {
        studies: fit.n_studies,
        params: fit.params,
        std_errors: fit
            .std_errors
            .map(|se| names.iter().map(|n| n.to_string()).zip(se).collect()),
        loglik: fit.loglik,
        converged: fit.converged,
        prob_alpha_above_one: fit.prob_alpha_above_one,
        marginal_curve: curve,
    });
    Ok(())
}
