use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fibidx_core::checks::{self, CheckRow, CheckSettings, Group, OracleTag, Report};
use fibidx_core::connecting::{calibrate_kappa, chern_simons_pairing, radul_index, winding_symbol, CsPath};
use fibidx_core::forms::{ConnectionSpec, Cycle};
use fibidx_core::oracle::index_idempotent_pairing;
use serde::{Deserialize, Serialize};

const SCHEMA_VERSION: u32 = 1;
const LOG_ENV: &str = "FIBIDX_LOG";

#[derive(Parser, Debug)]
#[command(name = "fibidx", version, about = "Index pairings on circle fibrations, checked against matrix oracles")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for summary.txt, checks.csv and report.json.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Multiplies every tolerance.
    #[arg(long, global = true)]
    tol_scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Point pairing of the winding symbol `(e^{i w₊ x}, e^{i w₋ x})` by both formulas.
    Pair {
        #[arg(long, allow_hyphen_values = true)]
        wp: i32,
        #[arg(long, allow_hyphen_values = true)]
        wm: i32,
        #[arg(long, default_value_t = 4)]
        depth: usize,
    },
    /// Idempotent trace of the winding symbol on `|n| ≤ cutoff`.
    Oracle {
        #[arg(long, allow_hyphen_values = true)]
        wp: i32,
        #[arg(long, allow_hyphen_values = true)]
        wm: i32,
        #[arg(long, default_value_t = 128)]
        cutoff: i64,
        #[arg(long, default_value_t = 4)]
        depth: usize,
    },
    /// Family pairings over T² against lattice Chern numbers.
    Family,
    /// Runs one group of checks.
    Check {
        #[arg(value_enum)]
        target: Target,
    },
    /// Runs every check.
    Report,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Target {
    Zeta,
    Fedosov,
    Xcomplex,
    All,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    schema_version: u32,
    #[serde(default)]
    checks: CheckSettings,
}

impl Default for Config {
    fn default() -> Self {
        Config { schema_version: SCHEMA_VERSION, checks: CheckSettings::default() }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else { return Ok(Config::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if cfg.schema_version != SCHEMA_VERSION {
        bail!("unsupported schema_version {} (expected {SCHEMA_VERSION})", cfg.schema_version);
    }
    Ok(cfg)
}

fn settings(cli: &Cli) -> Result<CheckSettings> {
    let mut s = load_config(cli.config.as_deref())?.checks;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(t) = cli.tol_scale {
        if !(t.is_finite() && t > 0.0) {
            bail!("--tol-scale must be a positive number");
        }
        s.tol_scale = t;
    }
    Ok(s)
}

fn point_rows(s: &CheckSettings, wp: i32, wm: i32, depth: usize) -> Vec<CheckRow> {
    let q = winding_symbol(wp, wm);
    let oracle = index_idempotent_pairing(&q, s.corpus.cutoff, depth);
    let tol = s.tol().corpus;
    let label = format!("w+={wp},w-={wm}");
    let mut rows = vec![];
    let values = [
        ("radul", radul_index(&q, depth)),
        ("chern-simons", chern_simons_pairing(&ConnectionSpec::flat(0), &q, &Cycle::Point(vec![]), depth, CsPath::General)),
    ];
    for (path, v) in values {
        let (formula, o, delta, note) = match (&v, &oracle) {
            (Ok(v), Ok(o)) => (v.re, o.e_trace.re, (v - o.e_trace).norm(), None),
            (Err(e), _) => (f64::NAN, f64::NAN, f64::INFINITY, Some(e.to_string())),
            (_, Err(e)) => (f64::NAN, f64::NAN, f64::INFINITY, Some(e.to_string())),
        };
        rows.push(CheckRow {
            criterion: 1,
            name: format!("pair/{path}[{label}]"),
            formula,
            oracle: o,
            delta,
            tolerance: tol,
            pass: delta <= tol,
            tag: OracleTag::Derived,
            theorem_check: true,
            note,
        });
    }
    rows
}

fn oracle_rows(s: &CheckSettings, wp: i32, wm: i32, cutoff: i64, depth: usize) -> Vec<CheckRow> {
    let q = winding_symbol(wp, wm);
    let expect = (wp - wm) as f64;
    let name = format!("oracle/e-trace[w+={wp},w-={wm}] N={cutoff}");
    let tol = s.tol().corpus;
    let row = match index_idempotent_pairing(&q, cutoff, depth) {
        Ok(o) => CheckRow {
            criterion: 9,
            name,
            formula: o.e_trace.re,
            oracle: expect,
            delta: (o.e_trace.re - expect).abs(),
            tolerance: tol,
            pass: (o.e_trace.re - expect).abs() <= tol,
            tag: OracleTag::Paper,
            theorem_check: false,
            note: Some(format!("rounded {}", o.rounded)),
        },
        Err(e) => CheckRow {
            criterion: 9,
            name,
            formula: f64::NAN,
            oracle: expect,
            delta: f64::INFINITY,
            tolerance: tol,
            pass: false,
            tag: OracleTag::Paper,
            theorem_check: false,
            note: Some(e.to_string()),
        },
    };
    vec![row]
}

fn report_from_rows(s: &CheckSettings, rows: Vec<CheckRow>, kappa: Option<f64>) -> Report {
    let tolerances = s.tol().ledger().into_iter().map(|(n, v)| (n.to_string(), v)).collect();
    Report { settings: s.clone(), kappa, tolerances, rows, timings: vec![] }
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.6e}")
    }
}

fn summary(r: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!("seed {}  tol-scale {}\n", r.settings.seed, r.settings.tol_scale));
    if let Some(k) = r.kappa {
        out.push_str(&format!("kappa {k:.12}\n"));
    }
    let mut criteria: Vec<u8> = r.rows.iter().map(|x| x.criterion).collect();
    criteria.dedup();
    for c in criteria {
        let rows: Vec<&CheckRow> = r.rows.iter().filter(|x| x.criterion == c).collect();
        let pass = rows.iter().all(|x| x.pass);
        let worst = rows.iter().map(|x| x.delta).fold(0.0, f64::max);
        let theorem = if rows.iter().any(|x| x.theorem_check) { "  [theorem check]" } else { "" };
        out.push_str(&format!(
            "criterion {c:>2}: {}  rows {:>3}  max delta {}{theorem}\n",
            if pass { "PASS" } else { "FAIL" },
            rows.len(),
            fmt(worst)
        ));
        for x in rows.iter().filter(|x| !x.pass) {
            out.push_str(&format!("    FAIL {}  delta {} > {}  {}\n", x.name, fmt(x.delta), fmt(x.tolerance), x.note.as_deref().unwrap_or("")));
        }
    }
    for t in r.timings.iter().filter(|t| !t.within_budget()) {
        out.push_str(&format!("    FAIL criterion {} ran {:.1}s, budget {:.0}s\n", t.criterion, t.seconds, t.budget.unwrap_or(0.0)));
    }
    let failed = r.rows.iter().filter(|x| !x.pass).count();
    out.push_str(&format!("{} rows, {failed} failing\n", r.rows.len()));
    out
}

fn write_csv(path: &Path, rows: &[CheckRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "formula", "oracle", "delta", "tolerance", "pass"])?;
    for r in rows {
        w.write_record([r.name.clone(), fmt(r.formula), fmt(r.oracle), fmt(r.delta), fmt(r.tolerance), r.pass.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_outputs(dir: &Path, r: &Report, text: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("summary.txt"), text)?;
    write_csv(&dir.join("checks.csv"), &r.rows)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(r)?)?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    let s = settings(&cli)?;
    let report = match &cli.command {
        Command::Pair { wp, wm, depth } => report_from_rows(&s, point_rows(&s, *wp, *wm, *depth), None),
        Command::Oracle { wp, wm, cutoff, depth } => report_from_rows(&s, oracle_rows(&s, *wp, *wm, *cutoff, *depth), None),
        Command::Family => {
            let kappa = calibrate_kappa(s.family.calibration_depth)?;
            report_from_rows(&s, checks::family_index(&s, kappa), Some(kappa))
        }
        Command::Check { target } => {
            let groups = match target {
                Target::Zeta => vec![Group::Zeta],
                Target::Fedosov => vec![Group::Fedosov],
                Target::Xcomplex => vec![Group::Xcomplex],
                Target::All => Group::all(),
            };
            checks::run(&s, &groups)
        }
        Command::Report => checks::run(&s, &Group::all()),
    };
    for t in &report.timings {
        log::info!("criterion {} took {:.2}s", t.criterion, t.seconds);
        if !t.within_budget() {
            log::warn!("criterion {} exceeded its time budget: {:.1}s", t.criterion, t.seconds);
        }
    }
    let text = summary(&report);
    print!("{text}");
    if let Some(dir) = &cli.out {
        write_outputs(dir, &report, &text)?;
    }
    if report.rows.iter().any(|r| !r.pass) || report.timings.iter().any(|t| !t.within_budget()) {
        std::process::exit(1);
    }
    Ok(())
}
