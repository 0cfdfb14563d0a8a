//! Human-readable tables. Numbers are shown to 4 significant digits; the
//! JSON and CSV outputs carry full precision.

use std::fmt::Write;
use std::path::PathBuf;

use covbreak::cptest::TestReport;
use covbreak::harness::ExperimentResult;
use covbreak::limits::CritValRow;

/// `x` rounded to 4 significant digits.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn test_table(r: &TestReport, files: &[PathBuf]) -> String {
    let mut s = String::new();
    let decision = if r.reject { "reject H0: change detected" } else { "no change detected" };
    writeln!(s, "statistic       {}", r.kind).unwrap();
    writeln!(s, "value           {}", sig4(r.statistic)).unwrap();
    writeln!(s, "critical value  {} (level {})", sig4(r.critical_value), r.level).unwrap();
    writeln!(s, "decision        {decision}").unwrap();
    writeln!(s, "seed            {}", r.seed).unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:<4} {:>7} {:>10} {:>9} {:>5} {:>7}  {:<16}  file",
        "j", "n", "alpha^2", "bandwidth", "lags", "argmax", "projection"
    )
    .unwrap();
    for (j, p) in r.per_sample.iter().enumerate() {
        let flag = if p.lrv_degenerate { " (floored)" } else { "" };
        writeln!(
            s,
            "{:<4} {:>7} {:>10} {:>9} {:>5} {:>7}  {:<16}  {}{flag}",
            j + 1,
            p.n,
            sig4(p.alpha_sq),
            sig4(p.bandwidth),
            p.n_lags,
            p.argmax_k,
            p.projection,
            files.get(j).map(|f| f.display().to_string()).unwrap_or_default()
        )
        .unwrap();
    }
    s
}

pub fn critval_table(rows: &[CritValRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{:<8} {:>3} {:>7} {:>9} {:>7} {:>8}  seed", "kind", "K", "level", "value", "n_grid", "n_rep").unwrap();
    for r in rows {
        writeln!(
            s,
            "{:<8} {:>3} {:>7} {:>9} {:>7} {:>8}  {}",
            r.kind,
            r.k,
            r.level,
            sig4(r.value),
            r.n_grid,
            r.n_rep,
            r.seed
        )
        .unwrap();
    }
    s
}

pub fn experiment_table(r: &ExperimentResult) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<4} {:>5} {:<18} {:>6} {:<8} {:<14} {:>7} {:>7} {:>6}",
        "case", "d", "scenario", "change", "kind", "lrv", "rate", "stderr", "n"
    )
    .unwrap();
    for c in &r.cells {
        writeln!(
            s,
            "{:<4} {:>5} {:<18} {:>6} {:<8} {:<14} {:>7} {:>7} {:>6}",
            c.case.as_str(),
            c.d,
            c.scenario.as_str(),
            c.change_time.map(|t| t.to_string()).unwrap_or_else(|| "-".into()),
            c.kind.as_str(),
            c.lrv,
            sig4(c.rate),
            sig4(c.stderr),
            c.n
        )
        .unwrap();
    }
    for k in &r.skipped {
        writeln!(s, "skipped {}: {}", k.cell, k.reason).unwrap();
    }
    writeln!(
        s,
        "seed {}  config {}  wall time {:.1}s",
        r.seed,
        r.config_hash,
        r.wall_time.as_secs_f64()
    )
    .unwrap();
    s
}
