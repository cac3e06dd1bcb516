//! `scanlab` command-line pipelines. Every subcommand is a pure function of its
//! arguments, config file, `--seed` and input files; pipelines compose through
//! files only.

use crate::cluster::{read_cluster_list, write_cluster_list, Metadata};
use crate::clusters::{ClassSpec, PathMode, ShapeKind, ThickParams, ThinParams};
use crate::detect::{calibrate_from, decide, Rate, RATE_NAMES};
use crate::error::{Result, ScanError};
use crate::growth::{scan_spacetime_cylinders, GrowthSpec};
use crate::metric::{build_net, verify_cover};
use crate::models::{plant, plant_sequence, sample_null, Field, SignalSpec};
use crate::network::{NetMeta, NodeSet};
use crate::rng::derive_seed;
use crate::sim::{sample_truths, sweep, ExperimentConfig, NetSpec, PreparedTest, Truth};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "scanlab", version, about = "Scan-statistic cluster detection on networks")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed; overrides any seed in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a node set and write it as CSV plus a `.meta.json` sidecar.
    Net(NetArgs),
    /// Enumerate a cluster class over a node set.
    Enumerate(EnumerateArgs),
    /// Build a greedy ε-net from a cluster list.
    Netbuild(NetbuildArgs),
    /// Calibrate an experiment's test on null fields.
    Calibrate(ConfigArgs),
    /// Run an experiment's test on one field.
    Test(TestArgs),
    /// Generate a cluster sequence.
    Grow(ConfigArgs),
    /// Risk sweep over the Λ grid of an experiment.
    Sweep(ConfigArgs),
    /// Evaluate a closed-form detection threshold.
    Rates(RatesArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetMode {
    Lattice,
    Cloud,
    Grid,
}

#[derive(Args, Debug, Serialize)]
pub struct NetArgs {
    #[arg(long, value_enum)]
    pub mode: NetMode,
    #[arg(long)]
    pub d: usize,
    /// Lattice or grid side length.
    #[arg(long)]
    pub side: Option<usize>,
    /// Number of cloud points.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value = "net.csv")]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Balls,
    Thick,
    Tubes,
    Bands,
    Animals,
}

#[derive(Args, Debug, Serialize)]
pub struct EnumerateArgs {
    /// Node set CSV written by `net` (its `.meta.json` sidecar is read too).
    #[arg(long, default_value = "net.csv")]
    pub net: PathBuf,
    #[arg(long, value_enum)]
    pub family: Family,
    /// Ball radius, or thick `lambda_lo` (native units).
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub lambda_hi: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long)]
    pub level_step: Option<f64>,
    /// Tubes: smallest admissible λ/r.
    #[arg(long, default_value_t = 4.0)]
    pub lambda_over_r_min: f64,
    /// Band path length.
    #[arg(long)]
    pub length: Option<usize>,
    /// Band half-width.
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub self_avoiding: bool,
    #[arg(long, default_value_t = 2000)]
    pub budget: usize,
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Print only the number of clusters.
    #[arg(long)]
    pub count: bool,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct NetbuildArgs {
    #[arg(long)]
    pub clusters: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    /// Also check the covering guarantee against the input list.
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TestArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Field CSV; if absent a field is sampled (planted with the first truth when `--lambda` is given).
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Signal strength for sampled fields and for the oracle cutoff.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fixed threshold; otherwise the test is calibrated (or uses its own cutoff).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct RatesArgs {
    #[arg(long)]
    pub formula: String,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub n: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub ell: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
}

/// Exit status for an error.
pub fn exit_code(err: &ScanError) -> i32 {
    match err {
        ScanError::Capacity(_) => 3,
        ScanError::Io(_) => 1,
        _ => 2,
    }
}

/// Parses `argv` (program name first) and runs, writing `-` outputs to `out`
/// and diagnostics to `err`.
pub fn run_with<I, T>(argv: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(ScanError::param("threads", "must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ScanError::param("threads", e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli, out, err))),
        None => dispatch(&cli, out, err),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

fn dispatch(cli: &Cli, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<()> {
    match &cli.command {
        Command::Net(a) => cmd_net(a, cli.seed.unwrap_or(0), out, err),
        Command::Enumerate(a) => cmd_enumerate(a, cli.seed.unwrap_or(0), out, err),
        Command::Netbuild(a) => cmd_netbuild(a, out, err),
        Command::Calibrate(a) => cmd_calibrate(a, cli.seed, out, err),
        Command::Test(a) => cmd_test(a, cli.seed, out, err),
        Command::Grow(a) => cmd_grow(a, cli.seed, out, err),
        Command::Sweep(a) => cmd_sweep(a, cli.seed, out, err),
        Command::Rates(a) => cmd_rates(a, out, err),
    }
}

/// Writes the fully resolved configuration, as TOML comments, to `err`.
fn echo<T: Serialize>(err: &mut (dyn Write + Send), section: &str, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| ScanError::Config {
        key: section.to_string(),
        reason: e.to_string(),
    })?;
    writeln!(err, "# resolved {section}")?;
    for line in text.lines() {
        writeln!(err, "#   {line}")?;
    }
    Ok(())
}

fn with_output(
    path: &Path,
    out: &mut (dyn Write + Send),
    f: impl FnOnce(&mut (dyn Write + Send)) -> Result<()>,
) -> Result<()> {
    if path.as_os_str() == "-" {
        f(out)?;
        out.flush()?;
    } else {
        let mut w = BufWriter::new(File::create(path)?);
        f(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn meta_path(net: &Path) -> PathBuf {
    let mut s = net.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn read_net(path: &Path) -> Result<NodeSet<f64>> {
    let meta: NetMeta = serde_json::from_reader(open(&meta_path(path))?)
        .map_err(|e| ScanError::Parse(format!("{}: {e}", meta_path(path).display())))?;
    NodeSet::read_csv(open(path)?, &meta)
}

/// Reads a TOML config, naming the offending key on failure.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let key = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "<config>".to_string());
        ScanError::Config { key, reason: msg }
    })
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn missing(key: &str) -> ScanError {
    ScanError::Config {
        key: key.to_string(),
        reason: "required for this subcommand".into(),
    }
}

fn cmd_net(a: &NetArgs, seed: u64, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<()> {
    echo(err, "net", a)?;
    let spec = match a.mode {
        NetMode::Lattice => NetSpec::Lattice {
            d: a.d,
            side: a.side.ok_or_else(|| missing("side"))?,
        },
        NetMode::Grid => NetSpec::Grid {
            d: a.d,
            side: a.side.ok_or_else(|| missing("side"))?,
        },
        NetMode::Cloud => NetSpec::Cloud {
            d: a.d,
            m: a.m.ok_or_else(|| missing("m"))?,
            seed,
        },
    };
    let net: NodeSet<f64> = spec.build()?;
    with_output(&a.out, out, |w| net.write_csv(w))?;
    if a.out.as_os_str() != "-" {
        let mut w = BufWriter::new(File::create(meta_path(&a.out))?);
        net.write_meta(&mut w)?;
        w.flush()?;
    }
    writeln!(err, "{} nodes", net.len())?;
    Ok(())
}

fn class_from_args(a: &EnumerateArgs, seed: u64) -> Result<ClassSpec<f64>> {
    let need = |v: Option<f64>, k: &str| v.ok_or_else(|| missing(k));
    Ok(match a.family {
        Family::Balls => ClassSpec::Balls {
            radius: need(a.radius, "radius")?,
        },
        Family::Thick => {
            let lo = need(a.radius, "radius")?;
            ClassSpec::Thick(ThickParams {
                lambda_lo: lo,
                lambda_hi: a.lambda_hi.unwrap_or(lo),
                kappa: a.kappa.unwrap_or(1.0),
                shapes: vec![ShapeKind::Ball, ShapeKind::Ellipsoid, ShapeKind::Rectangle],
                center_pitch: 0.5,
            })
        }
        Family::Tubes => ClassSpec::Tubes(ThinParams {
            alpha: need(a.alpha, "alpha")?,
            kappa: need(a.kappa, "kappa")?,
            radius: need(a.radius, "radius")?,
            segments: a.segments.ok_or_else(|| missing("segments"))?,
            level_step: need(a.level_step, "level_step")?,
            max_curves: 200_000,
            lambda_over_r_min: a.lambda_over_r_min,
        }),
        Family::Bands => ClassSpec::Bands {
            length: a.length.ok_or_else(|| missing("length"))?,
            width: need(a.width, "width")?,
            mode: if a.self_avoiding {
                PathMode::SelfAvoiding
            } else {
                PathMode::Nondecreasing
            },
            budget: a.budget,
            seed,
        },
        Family::Animals => ClassSpec::Animals {
            kmax: a.kmax.ok_or_else(|| missing("kmax"))?,
        },
    })
}

fn cmd_enumerate(
    a: &EnumerateArgs,
    seed: u64,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<()> {
    let class = class_from_args(a, seed)?;
    echo(err, "class", &class)?;
    let net = read_net(&a.net)?;
    let clusters = class.clusters(&net)?;
    if a.count {
        with_output(&a.out, out, |w| Ok(writeln!(w, "{}", clusters.len())?))?;
    } else {
        let meta = class.metadata().with("m", net.len()).with("count", clusters.len());
        with_output(&a.out, out, |w| write_cluster_list(w, &meta, &clusters))?;
    }
    writeln!(err, "{} clusters", clusters.len())?;
    Ok(())
}

fn cmd_netbuild(a: &NetbuildArgs, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<()> {
    echo(err, "netbuild", a)?;
    let (meta, clusters) = read_cluster_list(open(&a.clusters)?)?;
    let family = meta.get("family").unwrap_or("clusters").to_string();
    let net = build_net(clusters.iter().cloned(), a.epsilon, family)?;
    if a.verify {
        let report = verify_cover(&net, clusters.iter().cloned());
        writeln!(
            err,
            "cover: max min δ = {:.6} over {} clusters; {}",
            report.max_min_dist,
            report.checked,
            if report.pass { "pass" } else { "FAIL" }
        )?;
        if !report.pass {
            return Err(ScanError::domain("ε-net does not cover its stream"));
        }
    }
    with_output(&a.out, out, |w| write_cluster_list(w, &net.metadata(), &net.members))?;
    writeln!(err, "{} of {} clusters kept", net.len(), clusters.len())?;
    Ok(())
}

fn experiment(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig<f64>> {
    let mut cfg: ExperimentConfig<f64> = load_config(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Echo<'a, T> {
    args: &'a ConfigArgs,
    config: &'a T,
}

fn cmd_sweep(
    a: &ConfigArgs,
    seed: Option<u64>,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<()> {
    let cfg = experiment(&a.config, seed)?;
    echo(err, "sweep", &Echo { args: a, config: &cfg })?;
    let result = sweep(&cfg)?;
    for w in &result.warnings {
        writeln!(err, "warning: {w}")?;
    }
    writeln!(
        err,
        "search set {}; {} truth clusters{}",
        result.search_size,
        result.truths.len(),
        if result.exhaustive_truth {
            " (exhaustive)"
        } else {
            " (sampled)"
        }
    )?;
    if let Some(c) = &result.calibration {
        writeln!(
            err,
            "calibrated threshold {:.6} from {} null draws",
            c.threshold, c.draws
        )?;
    }
    with_output(&a.out, out, |w| result.write_csv(w))
}

fn cmd_calibrate(
    a: &ConfigArgs,
    seed: Option<u64>,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<()> {
    let cfg = experiment(&a.config, seed)?;
    echo(err, "calibrate", &Echo { args: a, config: &cfg })?;
    let net: NodeSet<f64> = cfg.net.build()?;
    let test = PreparedTest::prepare(&cfg.test, &net, cfg.t_max)?;
    let (truths, _) = sample_truths(&cfg.truth, &net, cfg.t_max, cfg.truth_samples, cfg.seed)?;
    let cal = calibrate_experiment(&cfg, &net, &test, &truths[0])?;
    with_output(&a.out, out, |w| {
        writeln!(w, "alpha,draws,threshold,seed")?;
        writeln!(w, "{},{},{:.6},{}", cal.alpha, cal.draws, cal.threshold, cfg.seed)?;
        Ok(())
    })
}

fn calibrate_experiment(
    cfg: &ExperimentConfig<f64>,
    net: &NodeSet<f64>,
    test: &PreparedTest<f64>,
    truth: &Truth,
) -> Result<crate::detect::Calibration<f64>> {
    use rayon::prelude::*;
    let stats = (0..cfg.calibration_draws)
        .into_par_iter()
        .map(|i| {
            let field: Field<f64> = sample_null(net.len(), cfg.model, cfg.t_max, derive_seed(cfg.seed, &[0, i as u64]));
            test.statistic(&field, truth, cfg.model)
        })
        .collect::<Result<Vec<f64>>>()?;
    calibrate_from(stats, cfg.alpha, derive_seed(cfg.seed, &[0]))
}

#[derive(Serialize)]
struct TestEcho<'a> {
    args: &'a TestArgs,
    config: &'a ExperimentConfig<f64>,
}

fn cmd_test(a: &TestArgs, seed: Option<u64>, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<()> {
    let cfg = experiment(&a.config, seed)?;
    echo(err, "test", &TestEcho { args: a, config: &cfg })?;
    let net: NodeSet<f64> = cfg.net.build()?;
    let test = PreparedTest::prepare(&cfg.test, &net, cfg.t_max)?;
    let (truths, _) = sample_truths(&cfg.truth, &net, cfg.t_max, cfg.truth_samples, cfg.seed)?;
    let truth = &truths[0];
    let field: Field<f64> = match &a.field {
        Some(p) => {
            let f = Field::read_csv(open(p)?)?;
            if f.nodes() != net.len() || f.t_max() != cfg.t_max {
                return Err(ScanError::domain(
                    "field does not match the configured node set and t_max",
                ));
            }
            f
        }
        None => {
            let null = sample_null(net.len(), cfg.model, cfg.t_max, derive_seed(cfg.seed, &[4]));
            match a.lambda {
                None => null,
                Some(l) => {
                    let sig = SignalSpec::new(l);
                    let s = derive_seed(cfg.seed, &[5]);
                    match truth {
                        Truth::Static(c) => plant(&null, c, &sig, cfg.model, s)?,
                        Truth::Sequence(q) => plant_sequence(&null, q, &sig, cfg.model, s)?,
                    }
                }
            }
        }
    };
    let start = Instant::now();
    let statistic = test.statistic(&field, truth, cfg.model)?;
    let argmax_size = match &test {
        PreparedTest::Scan(c) => Some(c[crate::detect::scan(&field, c, cfg.model)?.argmax].len()),
        PreparedTest::Cylinders(b) => Some(scan_spacetime_cylinders(&field, b, cfg.model)?.pairs),
        PreparedTest::Oracle | PreparedTest::Average => Some(truth.pairs(cfg.t_max)),
        _ => None,
    };
    let elapsed = start.elapsed().as_millis();
    let threshold = match (a.threshold, test.calibrated()) {
        (Some(t), _) => t,
        (None, true) => calibrate_experiment(&cfg, &net, &test, truth)?.threshold,
        (None, false) => test.fixed_threshold(a.lambda.unwrap_or(0.0)),
    };
    let decision = decide(statistic, threshold);
    with_output(&a.out, out, |w| {
        writeln!(w, "statistic,threshold,decision,argmax_size,wallclock_ms")?;
        writeln!(
            w,
            "{:.6},{:.6},{},{},{}",
            statistic,
            threshold,
            decision.as_str(),
            argmax_size.map_or(String::new(), |s| s.to_string()),
            elapsed
        )?;
        Ok(())
    })
}

/// `grow` config: node set, horizon and growth model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowConfig {
    pub net: NetSpec,
    pub t_max: usize,
    pub growth: GrowthSpec<f64>,
}

fn cmd_grow(
    a: &ConfigArgs,
    seed: Option<u64>,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<()> {
    let mut cfg: GrowConfig = load_config(&a.config)?;
    if let (Some(s), GrowthSpec::Richardson { seed, .. }) = (seed, &mut cfg.growth) {
        *seed = s;
    }
    echo(err, "grow", &cfg)?;
    let net: NodeSet<f64> = cfg.net.build()?;
    let seq = cfg.growth.build(&net, cfg.t_max)?;
    let meta: Metadata = cfg.growth.metadata().with("t_max", cfg.t_max).with("m", net.len());
    with_output(&a.out, out, |w| seq.write(w, &meta))?;
    writeln!(err, "{} anomalous pairs, onset {:?}", seq.total_pairs(), seq.onset())?;
    Ok(())
}

fn cmd_rates(a: &RatesArgs, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<()> {
    echo(err, "rates", a)?;
    if !RATE_NAMES.contains(&a.formula.as_str()) {
        return Err(ScanError::Config {
            key: "formula".into(),
            reason: format!(
                "unknown formula `{}`; expected one of {}",
                a.formula,
                RATE_NAMES.join(", ")
            ),
        });
    }
    let mut params = BTreeMap::new();
    let pairs = [
        ("m", a.m),
        ("k", a.k),
        ("d", a.d),
        ("n", a.n),
        ("p", a.p),
        ("r", a.r),
        ("lambda", a.lambda),
        ("eps", a.eps),
        ("ell", a.ell),
        ("h", a.h),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            params.insert(k.to_string(), v);
        }
    }
    let value = Rate::from_params(&a.formula, &params)?.eval()?;
    writeln!(out, "{value:.4}")?;
    Ok(())
}
