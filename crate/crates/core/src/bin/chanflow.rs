//! Command-line front end: `solve`, `sweep`, `audit` and `selftest`.
//!
//! Exit codes: 0 when every check passes, 2 when the run completed with
//! failures, 3 for configuration, usage or I/O errors.

use chanflow::harness::{self, Config, FieldDump, PointStatus, Summary};
use chanflow::selftest;
use chanflow::Error;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_FAILURES: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "chanflow", version, about = "Steady compressible channel flow near a Poiseuille-Couette profile")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single (eps, grid) point.
    Solve(Common),
    /// Run the full viscosity sweep with rate fits.
    Sweep(Common),
    /// Run the estimate audits on saved field dumps.
    Audit(AuditArgs),
    /// Run the manufactured-solution suites and exact-solution oracles.
    Selftest(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file (defaults are used when omitted).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Grid nodes per direction (overrides the configuration).
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
    /// Viscosity (overrides the sweep list).
    #[arg(long, value_name = "X")]
    eps: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, value_name = "K")]
    workers: Option<usize>,
    /// Save the final fields of every point.
    #[arg(long)]
    dump_fields: bool,
}

#[derive(Args, Clone)]
struct AuditArgs {
    #[command(flatten)]
    common: Common,
    /// Field dump to audit; defaults to every dump in the output directory.
    #[arg(long, value_name = "PATH")]
    fields: Option<PathBuf>,
}

fn load_config(c: &Common) -> Result<Config, Error> {
    let mut cfg = match &c.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(n) = c.grid {
        cfg.grid.nodes = vec![n];
    }
    if let Some(e) = c.eps {
        cfg.sweep.eps = vec![e];
    }
    if let Some(k) = c.workers {
        cfg.sweep.workers = k;
    }
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    if c.dump_fields {
        cfg.output.dump_fields = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_for(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(EXIT_CONFIG)
}

fn print_points(s: &Summary) {
    println!(
        "{:>10} {:>5} {:>8} {:>5} {:>10} {:>10} {:>8}",
        "eps", "grid", "status", "iter", "max_ratio", "bound", "seconds"
    );
    for p in &s.points {
        let status = match p.status {
            PointStatus::Ok => "ok",
            PointStatus::Failed => "FAILED",
            PointStatus::Skipped => "skipped",
        };
        println!(
            "{:>10.3e} {:>5} {:>8} {:>5} {:>10.3e} {:>10.3e} {:>8.2}",
            p.eps,
            p.grid,
            status,
            p.iteration_count(),
            p.max_ratio(),
            p.max_bound_ratio(),
            p.elapsed_s
        );
        if let Some(e) = &p.error {
            println!("{:>10} {e}", "");
        }
    }
}

fn print_fits(s: &Summary) {
    if s.fits.is_empty() {
        return;
    }
    println!("\n{:<24} {:>5} {:>9} {:>9} {:>7} {:>5}", "quantity", "grid", "slope", "+/-", "target", "pass");
    for f in &s.fits {
        let slope = f.slope.map_or("vanish".to_string(), |v| format!("{v:.4}"));
        let ci = f.ci.map_or("-".to_string(), |v| format!("{v:.4}"));
        let pass = match f.pass {
            Some(true) => "yes",
            Some(false) => "NO",
            None => "-",
        };
        println!(
            "{:<24} {:>5} {:>9} {:>9} {:>7.3} {:>5}{}",
            f.name,
            f.grid,
            slope,
            ci,
            f.target.unwrap_or(f64::NAN),
            pass,
            if f.gated { "  *" } else { "" }
        );
    }
    println!("(* gated)");
}

fn print_checks(s: &Summary) {
    println!();
    for c in &s.checks {
        println!("[{}] {:<20} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn finish(summary: &Summary, dumps: &[FieldDump], dir: &Path) -> ExitCode {
    print_points(summary);
    print_fits(summary);
    print_checks(summary);
    match harness::emit_report(summary, dumps, dir) {
        Ok(files) => println!("\nwrote {}", files.summary_json.display()),
        Err(e) => return exit_for(&e),
    }
    if summary.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURES)
    }
}

fn cmd_solve(c: &Common) -> ExitCode {
    let cfg = match load_config(c) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let eps = cfg.sweep.eps[0];
    let nodes = cfg.grid.nodes[0];
    match harness::run_single(&cfg, eps, nodes) {
        Ok(r) => {
            let s = Summary::build(&cfg, r.points, false);
            finish(&s, &r.dumps, &cfg.output.dir)
        }
        Err(e) => exit_for(&e),
    }
}

fn cmd_sweep(c: &Common) -> ExitCode {
    let cfg = match load_config(c) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    match harness::run_sweep(&cfg) {
        Ok(r) => {
            let s = Summary::build(&cfg, r.points, true);
            finish(&s, &r.dumps, &cfg.output.dir)
        }
        Err(e) => exit_for(&e),
    }
}

fn dump_paths(a: &AuditArgs, dir: &Path) -> Result<Vec<PathBuf>, Error> {
    if let Some(p) = &a.fields {
        return Ok(vec![p.clone()]);
    }
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut v: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("fields_") && n.ends_with(".json"))
        })
        .collect();
    v.sort();
    if v.is_empty() {
        return Err(Error::Config(format!("no field dumps in {}", dir.display())));
    }
    Ok(v)
}

fn cmd_audit(a: &AuditArgs) -> ExitCode {
    let cfg = match load_config(&a.common) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let dir = cfg.output.dir.clone();
    let paths = match dump_paths(a, &dir) {
        Ok(p) => p,
        Err(e) => return exit_for(&e),
    };
    let mut rows = Vec::new();
    for p in &paths {
        let d = match FieldDump::load(p) {
            Ok(d) => d,
            Err(e) => return exit_for(&e),
        };
        for audit in d.audits() {
            rows.push(harness::AuditRow { grid: d.nodes, audit });
        }
    }
    println!("{:<18} {:>10} {:>12} {:>12} {:>12}", "audit", "eps", "lhs", "rhs", "constant");
    for r in &rows {
        let a = &r.audit;
        println!(
            "{:<18} {:>10.3e} {:>12.4e} {:>12.4e} {:>12}",
            a.key(),
            a.eps,
            a.lhs,
            a.rhs,
            a.constant.map_or("-".into(), |c| format!("{c:.4e}"))
        );
    }
    if let Err(e) = std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e)) {
        return exit_for(&e);
    }
    let csv = dir.join("audits_from_dump.csv");
    if let Err(e) = std::fs::write(&csv, harness::audits_csv(&rows)).map_err(|e| Error::io(&csv, e)) {
        return exit_for(&e);
    }
    println!("\nwrote {}", csv.display());
    if rows.iter().any(|r| r.audit.flagged) {
        ExitCode::from(EXIT_FAILURES)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_selftest(c: &Common) -> ExitCode {
    let cfg = match load_config(c) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let report = match selftest::run_selftest(cfg.grid.nodes[0]) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("selftest aborted: {e}");
            return ExitCode::from(EXIT_FAILURES);
        }
    };
    for o in &report.orders {
        let ratios: Vec<String> = o.ratios.iter().map(|r| format!("{r:.3}")).collect();
        let window = match o.max_ratio {
            Some(m) => format!("[{}, {}]", o.min_ratio, m),
            None => format!(">= {}", o.min_ratio),
        };
        println!(
            "[{}] {:<30} ratios {:<18} {window} {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            ratios.join(" "),
            o.note
        );
    }
    for e in &report.exact {
        println!(
            "[{}] {:<30} {:.3e} (tol {:.1e})",
            if e.pass { "PASS" } else { "FAIL" },
            e.name,
            e.value,
            e.tol
        );
    }
    if c.out.is_some() {
        let dir = &cfg.output.dir;
        let path = dir.join("selftest.json");
        let res = std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(dir, e))
            .and_then(|_| {
                let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
                std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
            });
        if let Err(e) = res {
            return exit_for(&e);
        }
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURES)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match &cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Audit(a) => cmd_audit(a),
        Command::Selftest(c) => cmd_selftest(c),
    }
}
