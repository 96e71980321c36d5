//! Output files of an experiment: `levels.csv`, `errors.csv`, `report.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::experiment::{ErrorRow, ExperimentOutcome, ExperimentReport, LevelTable};

pub const LEVELS_HEADER: [&str; 13] = [
    "level",
    "degree",
    "nodes",
    "r_eff",
    "r_max",
    "step1_evals",
    "step2_evals",
    "pde_solves",
    "time_s",
    "eps_level",
    "eps_target",
    "spatial_rank",
    "level_share",
];

pub const ERRORS_HEADER: [&str; 7] = [
    "L",
    "L_ref",
    "eps_ml_u",
    "eps_e_u",
    "eps_ml_psi",
    "eps_e_psi",
    "samples",
];

fn sci(v: f64) -> String {
    format!("{v:.6e}")
}

fn opt_sci(v: Option<f64>) -> String {
    v.map(sci).unwrap_or_default()
}

pub fn write_levels_csv<W: std::io::Write>(out: W, table: &LevelTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEVELS_HEADER)?;
    for (i, d) in table.levels.iter().enumerate() {
        w.write_record([
            d.level.to_string(),
            d.degree.to_string(),
            d.nodes.to_string(),
            sci(d.r_eff),
            d.r_max.to_string(),
            d.step1.to_string(),
            d.step2.to_string(),
            d.pde_solves.to_string(),
            sci(d.time_s),
            opt_sci(table.eps_level.get(i).copied()),
            sci(d.eps),
            d.spatial_rank.to_string(),
            opt_sci(table.level_share.get(i).copied()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_errors_csv<W: std::io::Write>(out: W, rows: &[ErrorRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ERRORS_HEADER)?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.max_level.to_string(),
            r.reference_level.map(|l| l.to_string()).unwrap_or_default(),
            sci(m.ml_u),
            opt_sci(m.e_u),
            sci(m.ml_psi),
            opt_sci(m.e_psi),
            m.samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable summary; everything except times and the environment is
/// deterministic for fixed seeds.
pub fn render_report(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let env = &report.environment;
    let _ = writeln!(s, "experiment: {}", report.config.name);
    let _ = writeln!(
        s,
        "mltc {} on {}/{}, {} thread(s), {} timing",
        env.version,
        env.os,
        env.arch,
        env.threads,
        env.timing.as_str()
    );
    let _ = writeln!(s, "status: {}", report.aborted.as_deref().map_or("ok".to_string(), |m| format!("budget abort ({m})")));
    let _ = writeln!(s, "\n[configuration]\n{}", report.config.to_toml().trim_end());
    for t in &report.tables {
        let _ = writeln!(s, "\n[levels, L = {}]", t.max_level);
        let _ = writeln!(
            s,
            "{:>3} {:>3} {:>6} {:>8} {:>5} {:>9} {:>10} {:>9} {:>10} {:>11} {:>11}",
            "l", "p", "nodes", "r_eff", "r_max", "step1", "step2", "solves", "time_s", "eps_level", "eps_target"
        );
        for (i, d) in t.levels.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>3} {:>3} {:>6} {:>8.3} {:>5} {:>9} {:>10} {:>9} {:>10.3e} {:>11} {:>11.3e}",
                d.level,
                d.degree,
                d.nodes,
                d.r_eff,
                d.r_max,
                d.step1,
                d.step2,
                d.pde_solves,
                d.time_s,
                t.eps_level.get(i).map_or("-".into(), |v| format!("{v:.3e}")),
                d.eps
            );
        }
        if let Some(m) = &t.aborted {
            let _ = writeln!(s, "aborted: {m}");
        }
    }
    if !report.errors.is_empty() {
        let _ = writeln!(s, "\n[errors]");
        let _ = writeln!(
            s,
            "{:>3} {:>5} {:>11} {:>11} {:>11} {:>11} {:>7}",
            "L", "L_ref", "eps_ml_u", "eps_e_u", "eps_ml_psi", "eps_e_psi", "samples"
        );
        let dash = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.3e}"));
        for r in &report.errors {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{:>3} {:>5} {:>11.3e} {:>11} {:>11.3e} {:>11} {:>7}",
                r.max_level,
                r.reference_level.map_or("-".into(), |l| l.to_string()),
                m.ml_u,
                dash(m.e_u),
                m.ml_psi,
                dash(m.e_psi),
                m.samples
            );
        }
    }
    s
}

/// Writes all outputs into `dir`. A sweep also gets `levels_L<L>.csv` per
/// run; `levels.csv` always holds the finest run.
pub fn write_outputs(dir: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let report = &outcome.report;
    if let Some(last) = report.tables.last() {
        write_levels_csv(fs::File::create(dir.join("levels.csv"))?, last)?;
    } else {
        write_levels_csv(
            fs::File::create(dir.join("levels.csv"))?,
            &LevelTable {
                max_level: 0,
                levels: Vec::new(),
                eps_level: Vec::new(),
                level_share: Vec::new(),
                aborted: None,
            },
        )?;
    }
    if report.tables.len() > 1 {
        for t in &report.tables {
            write_levels_csv(fs::File::create(dir.join(format!("levels_L{}.csv", t.max_level)))?, t)?;
        }
    }
    write_errors_csv(fs::File::create(dir.join("errors.csv"))?, &report.errors)?;
    fs::write(dir.join("report.txt"), render_report(report))?;
    if report.config.output.save_surrogate {
        for s in &outcome.surrogates {
            let Ok(top) = s.top_level() else { continue };
            let sub = dir.join(format!("surrogate_L{top}"));
            fs::create_dir_all(&sub)?;
            fs::write(sub.join("plan.json"), serde_json::to_string_pretty(s.plan())?)?;
            for lvl in s.levels() {
                lvl.tensor.save_json(sub.join(format!("level_{}.json", lvl.spec.level)))?;
            }
        }
    }
    Ok(())
}
