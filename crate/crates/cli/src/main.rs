use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use interp_lab::exponent::{
    classify, gn_solve, holder_decompose, interpolation_solve, iterated_conjugate, parse_rational, sobolev_conjugate,
    ExtendedExponent,
};
use interp_lab::grid::{read_gfn_file, write_gfn_file, DiffConfig, FamilySpec, GridFunction};
use interp_lab::harness::{
    extremizer_search, init_threads_from_env, ratio, sweep, InequalityInstance, InstanceSpec, SearchConfig,
    SweepConfig,
};
use interp_lab::iso::{ball_comparison_check, read_rsn_file, write_rsn_file, RasterSet};
use interp_lab::norm::{
    derivative_norm, extended_norm_with, weak_lorentz_norm, DistributionFunction, HolderMethod, NormConfig,
};
use interp_lab::proof::{balance_s, layer_cake_tail_bound, tail_moment_bound, truncate};

#[derive(Parser)]
#[command(name = "interp-lab", version, about = "Extended norm scale and inequality checks on grid functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Theorem {
    Interpolation,
    Gn,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Bb,
    Naive,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve and check an exponent tuple, or classify a single exponent.
    CheckExponents {
        #[arg(long, value_enum)]
        theorem: Option<Theorem>,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        j: Option<u32>,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        r: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        q: Option<String>,
        /// Classify and decompose this exponent instead of checking a tuple.
        #[arg(long, allow_hyphen_values = true)]
        p: Option<String>,
        /// With --p: also report this many Sobolev conjugations.
        #[arg(long, default_value_t = 0)]
        conjugates: u32,
    },
    /// Norm of a GFN1 grid function on the extended scale.
    Norm {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        p: Option<String>,
        /// Weak Lorentz norm of this order instead of --p.
        #[arg(long)]
        weak: Option<f64>,
        /// Apply to the j-th derivative tensor.
        #[arg(long, default_value_t = 0)]
        j: usize,
        #[arg(long, value_enum, default_value = "bb")]
        method: Method,
        #[arg(long, default_value_t = 2)]
        accuracy: usize,
    },
    /// Truncate at level s, optionally checking the tail and moment bounds.
    Truncate {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        r: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        out_truncated: Option<PathBuf>,
        #[arg(long)]
        out_tail: Option<PathBuf>,
    },
    /// Find the level balancing the two truncation terms.
    Balance {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
    },
    /// Compare inner parallel measures of a set with those of the equal-measure ball.
    Isoperimetric {
        /// RSN1 set, or a GFN1 function together with --level.
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        level: Option<f64>,
        /// Explicit distances; defaults to an even grid of --t-count values.
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
        #[arg(long, default_value_t = 16)]
        t_count: usize,
    },
    /// Sweep a family against an instance, with refinement drift and invariants.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        refine: bool,
        #[arg(long, default_value_t = 0.05)]
        drift_threshold: f64,
        #[arg(long, default_value_t = 1e-8)]
        scale_tolerance: f64,
    },
    /// Derivative-free search for a large ratio over family parameters.
    Extremize {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value_t = 60)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// CSV series for external plotting.
    PlotData {
        #[command(subcommand)]
        series: Series,
    },
    /// Render one family member to a GFN1 file (or its superlevel set to RSN1).
    Generate {
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write the set {|u| > level} as RSN1 instead.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

#[derive(Subcommand)]
enum Series {
    /// (t, λ(t)) at every distinct level.
    Distribution {
        #[arg(long)]
        file: PathBuf,
    },
    /// (s, rhs(s)) of the balancing map on a log grid.
    Balance {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        #[arg(long, default_value_t = 64)]
        points: usize,
    },
    /// (seed, ratio) over a family.
    Ratios {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        family: PathBuf,
    },
}

enum Outcome {
    Ok,
    Violation(String),
}

fn print_json(v: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_grid(path: &Path) -> Result<GridFunction> {
    read_gfn_file(path).with_context(|| format!("reading {}", path.display()))
}

fn exponent(s: &str) -> Result<ExtendedExponent> {
    s.parse().with_context(|| format!("exponent `{s}`"))
}

fn required<'a>(v: &'a Option<String>, name: &str) -> Result<&'a str> {
    v.as_deref().with_context(|| format!("--{name} is required"))
}

fn load_instance(path: &Path) -> Result<InequalityInstance> {
    let spec: InstanceSpec = read_json(path)?;
    Ok(InequalityInstance::new(spec)?)
}

#[allow(clippy::too_many_arguments)]
fn check_exponents(
    theorem: Option<Theorem>,
    n: u32,
    j: Option<u32>,
    k: Option<u32>,
    theta: &Option<String>,
    r: &Option<String>,
    q: &Option<String>,
    p: &Option<String>,
    conjugates: u32,
) -> Result<Outcome> {
    if let Some(p) = p {
        let e = exponent(p)?;
        let class = classify(&e, n);
        let decomposition = if e.is_negative() { Some(holder_decompose(&e, n)?) } else { None };
        let conjugate = sobolev_conjugate(&e, n).ok();
        let iterated = (conjugates > 0).then(|| iterated_conjugate(&e, n, conjugates));
        print_json(&serde_json::json!({
            "p": e,
            "n": n,
            "class": class.to_string(),
            "decomposition": decomposition,
            "conjugate": conjugate,
            "iterated": iterated.map(|r| match r {
                Ok(v) => serde_json::json!({ "value": v }),
                Err(c) => serde_json::json!({ "critical": c.to_string() }),
            }),
        }))?;
        return Ok(Outcome::Ok);
    }
    let theorem = theorem.context("--theorem or --p is required")?;
    let theta = parse_rational(required(theta, "theta")?)?;
    let r = exponent(required(r, "r")?)?;
    let q = exponent(required(q, "q")?)?;
    let decision = match theorem {
        Theorem::Interpolation => {
            let (tuple, adm) = interpolation_solve(&r, &q, theta, n);
            print_json(&serde_json::json!({ "tuple": tuple, "admissibility": adm }))?;
            adm
        }
        Theorem::Gn => {
            let j = j.context("--j is required for gn")?;
            let k = k.context("--k is required for gn")?;
            let (tuple, adm) = gn_solve(n, j, k, theta, &r, &q)?;
            print_json(&serde_json::json!({ "tuple": tuple, "admissibility": adm }))?;
            adm
        }
    };
    Ok(match decision.rejection() {
        Some(r) => Outcome::Violation(r.to_string()),
        None => Outcome::Ok,
    })
}

fn norm_cmd(file: &Path, p: &Option<String>, weak: Option<f64>, j: usize, method: Method, accuracy: usize) -> Result<Outcome> {
    let u = load_grid(file)?;
    let cfg = NormConfig {
        diff: DiffConfig { accuracy, ..DiffConfig::default() },
        holder: match method {
            Method::Bb => HolderMethod::BranchAndBound,
            Method::Naive => HolderMethod::Naive,
        },
    };
    let value = match (p, weak) {
        (Some(_), Some(_)) => bail!("give either --p or --weak"),
        (None, Some(q)) => {
            if j != 0 {
                bail!("--weak applies to the function itself");
            }
            weak_lorentz_norm(&u, q)?
        }
        (Some(p), None) => {
            let e = exponent(p)?;
            if j == 0 {
                extended_norm_with(&u, &e, &cfg)?
            } else {
                derivative_norm(&u, j, &e, &cfg)?
            }
        }
        (None, None) => bail!("--p or --weak is required"),
    };
    print_json(&value)?;
    Ok(Outcome::Ok)
}

#[allow(clippy::too_many_arguments)]
fn truncate_cmd(
    file: &Path,
    s: f64,
    p: Option<f64>,
    r: Option<f64>,
    q: Option<f64>,
    out_truncated: &Option<PathBuf>,
    out_tail: &Option<PathBuf>,
) -> Result<Outcome> {
    let u = load_grid(file)?;
    let t = truncate(&u, s)?;
    if let Some(path) = out_truncated {
        write_gfn_file(path, &t.truncated)?;
    }
    if let Some(path) = out_tail {
        write_gfn_file(path, &t.tail)?;
    }
    let mut records = Vec::new();
    let mut outcome = Outcome::Ok;
    if let (Some(p), Some(r)) = (p, r) {
        let b = layer_cake_tail_bound(&u, s, p, r)?;
        records.push(b.record(&u, s, p, r));
    }
    if let (Some(p), Some(q)) = (p, q) {
        let m = tail_moment_bound(&u, s, p, q)?;
        if m.ratio > 1.0 + 1e-12 {
            outcome = Outcome::Violation(format!("tail moment ratio {} exceeds 1", m.ratio));
        }
        records.push(m.record(&u, s, p, q));
    }
    print_json(&serde_json::json!({
        "s": s,
        "superlevel_measure": t.superlevel_measure,
        "truncated_max": t.truncated.max_abs(),
        "tail_max": t.tail.max_abs(),
        "checks": records,
    }))?;
    Ok(outcome)
}

fn balance_cmd(file: &Path, p: f64, q: f64, r: f64) -> Result<Outcome> {
    let u = load_grid(file)?;
    let b = balance_s(&u, p, q, r)?;
    print_json(&serde_json::json!({ "result": b, "record": b.record(&u, p, q, r) }))?;
    Ok(if b.monotone { Outcome::Ok } else { Outcome::Violation("balancing map is not monotone".into()) })
}

fn load_set(file: &Path, level: Option<f64>) -> Result<RasterSet> {
    Ok(match level {
        Some(l) => RasterSet::threshold(&load_grid(file)?, l)?,
        None => read_rsn_file(file).with_context(|| format!("reading {}", file.display()))?,
    })
}

fn isoperimetric_cmd(file: &Path, level: Option<f64>, t: &[f64], t_count: usize) -> Result<Outcome> {
    let set = load_set(file, level)?;
    let ts: Vec<f64> = if t.is_empty() {
        let rho = (set.measure() / interp_lab::iso::unit_ball_volume(set.n())).powf(1.0 / set.n() as f64);
        (0..t_count).map(|i| rho * i as f64 / t_count as f64).collect()
    } else {
        t.to_vec()
    };
    let reports = ball_comparison_check(&set, &ts)?;
    let violations = reports.iter().filter(|r| r.violation).count();
    print_json(&serde_json::json!({
        "measure": set.measure(),
        "perimeter_proxy": set.perimeter_proxy(),
        "reports": reports,
        "violations": violations,
    }))?;
    Ok(if violations == 0 {
        Outcome::Ok
    } else {
        Outcome::Violation(format!("{violations} distances exceed the ball bound beyond tolerance"))
    })
}

fn verify_cmd(instance: &Path, family: &Path, refine: bool, drift_threshold: f64, scale_tolerance: f64) -> Result<Outcome> {
    let inst = load_instance(instance)?;
    let fam: FamilySpec = read_json(family)?;
    let cfg = SweepConfig { refine, scale_tolerance, ..SweepConfig::default() };
    let report = sweep(&fam, &inst, &cfg)?;
    print_json(&report)?;
    let mut problems = Vec::new();
    if let Some(d) = report.drift.filter(|d| *d > drift_threshold) {
        problems.push(format!("refinement drift {d:.4} exceeds {drift_threshold}"));
    }
    for inv in report.invariants.iter().filter(|i| !i.passed) {
        problems.push(format!("invariant {} failed: {}", inv.name, inv.detail));
    }
    Ok(if problems.is_empty() { Outcome::Ok } else { Outcome::Violation(problems.join("; ")) })
}

fn extremize_cmd(instance: &Path, family: &Path, budget: usize, seed: u64) -> Result<Outcome> {
    let inst = load_instance(instance)?;
    let fam: FamilySpec = read_json(family)?;
    let report = extremizer_search(&inst, &fam, &SearchConfig { budget, seed, ..SearchConfig::default() })?;
    print_json(&report)?;
    Ok(Outcome::Ok)
}

fn plot_cmd(series: &Series) -> Result<Outcome> {
    let mut out = std::io::stdout().lock();
    match series {
        Series::Distribution { file } => {
            let u = load_grid(file)?;
            let d = DistributionFunction::new(&u);
            writeln!(out, "t,lambda")?;
            for t in d.levels().into_iter().rev() {
                writeln!(out, "{t},{}", d.measure_above(t))?;
            }
        }
        Series::Balance { file, p, q, r, points } if *p > *q => {
            let u = load_grid(file)?;
            let d = DistributionFunction::new(&u);
            let top = d.max();
            if top == 0.0 {
                bail!("the zero function has no balancing map");
            }
            writeln!(out, "s,rhs")?;
            let points = (*points).max(2);
            for i in 0..points {
                let s = top * 2f64.powf(-12.0 * (1.0 - i as f64 / (points - 1) as f64));
                let lam = d.measure_above(s);
                let rhs = if lam == 0.0 { f64::INFINITY } else { s.powf(p - q) * lam.powf(p / r - 1.0) };
                writeln!(out, "{s},{rhs}")?;
            }
        }
        Series::Balance { .. } => bail!("the balancing map needs p > q"),
        Series::Ratios { instance, family } => {
            let inst = load_instance(instance)?;
            let fam: FamilySpec = read_json(family)?;
            writeln!(out, "seed,ratio")?;
            for s in fam.samples()? {
                let r = ratio(&s.function, &inst)?;
                match r.ratio {
                    Some(v) => writeln!(out, "{},{v}", s.seed)?,
                    None => writeln!(out, "{},", s.seed)?,
                }
            }
        }
    }
    Ok(Outcome::Ok)
}

fn generate_cmd(family: &Path, seed: u64, out: &Path, threshold: Option<f64>) -> Result<Outcome> {
    let fam: FamilySpec = read_json(family)?;
    let sample = fam.sample(seed)?;
    match threshold {
        Some(l) => write_rsn_file(out, &RasterSet::threshold(&sample.function, l)?)?,
        None => write_gfn_file(out, &sample.function)?,
    }
    print_json(&serde_json::json!({
        "seed": sample.seed,
        "params": sample.params,
        "truncation_level": sample.truncation_level,
        "out": out,
    }))?;
    Ok(Outcome::Ok)
}

fn run(cli: Cli) -> Result<Outcome> {
    init_threads_from_env()?;
    match cli.command {
        Command::CheckExponents { theorem, n, j, k, theta, r, q, p, conjugates } => {
            check_exponents(theorem, n, j, k, &theta, &r, &q, &p, conjugates)
        }
        Command::Norm { file, p, weak, j, method, accuracy } => norm_cmd(&file, &p, weak, j, method, accuracy),
        Command::Truncate { file, s, p, r, q, out_truncated, out_tail } => {
            truncate_cmd(&file, s, p, r, q, &out_truncated, &out_tail)
        }
        Command::Balance { file, p, q, r } => balance_cmd(&file, p, q, r),
        Command::Isoperimetric { file, level, t, t_count } => isoperimetric_cmd(&file, level, &t, t_count),
        Command::Verify { instance, family, refine, drift_threshold, scale_tolerance } => {
            verify_cmd(&instance, &family, refine, drift_threshold, scale_tolerance)
        }
        Command::Extremize { instance, family, budget, seed } => extremize_cmd(&instance, &family, budget, seed),
        Command::PlotData { series } => plot_cmd(&series),
        Command::Generate { family, seed, out, threshold } => generate_cmd(&family, seed, &out, threshold),
    }
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let kind = c
            .downcast_ref::<std::io::Error>()
            .map(|io| io.kind())
            .or_else(|| c.downcast_ref::<serde_json::Error>().and_then(|j| j.io_error_kind()));
        kind == Some(std::io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
