//! Benchmark table generation over directories of layouts, plus PSF
//! arithmetic verification against published component values.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use layoutforge_core::metrics::{build_report, psf};

use crate::artifacts::LayoutFile;

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub label: String,
    pub cf: f64,
    pub ib: f64,
    pub pos: Option<f64>,
    pub ali: Option<f64>,
    pub fc: f64,
    pub psf: Option<f64>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn opt_mean(values: &[Option<f64>]) -> Option<f64> {
    let collected: Vec<f64> = values.iter().copied().flatten().collect();
    if collected.len() == values.len() && !collected.is_empty() {
        Some(mean(&collected))
    } else {
        None
    }
}

/// Evaluate every `*.json` layout under `dir/<scenario>/`, one table row per
/// scenario plus an Average row.
pub fn bench_directory(dir: &Path, tau: f64) -> Result<Vec<BenchRow>> {
    let mut scenario_dirs: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    scenario_dirs.sort();
    if scenario_dirs.is_empty() {
        bail!("no scenario directories under {}", dir.display());
    }

    let mut rows = Vec::new();
    for scenario_dir in &scenario_dirs {
        let mut layouts: Vec<_> = std::fs::read_dir(scenario_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
            .collect();
        layouts.sort();
        if layouts.is_empty() {
            continue;
        }
        let mut cf = Vec::new();
        let mut ib = Vec::new();
        let mut fc = Vec::new();
        for path in &layouts {
            let file = LayoutFile::load(path)?;
            let layout = file.to_layout()?;
            let report = build_report(&layout, &file.boundary, &file.requested, tau, None)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            cf.push(report.cf);
            ib.push(report.ib);
            fc.push(report.fc);
        }
        rows.push(BenchRow {
            label: scenario_dir
                .file_name()
                .map(|n| n.to_string_lossy().to_string())
                .unwrap_or_default(),
            cf: mean(&cf),
            ib: mean(&ib),
            pos: None,
            ali: None,
            fc: mean(&fc),
            psf: None,
        });
    }
    if rows.is_empty() {
        bail!("no layout files under {}", dir.display());
    }
    let average = BenchRow {
        label: "Average".into(),
        cf: mean(&rows.iter().map(|r| r.cf).collect::<Vec<_>>()),
        ib: mean(&rows.iter().map(|r| r.ib).collect::<Vec<_>>()),
        pos: opt_mean(&rows.iter().map(|r| r.pos).collect::<Vec<_>>()),
        ali: opt_mean(&rows.iter().map(|r| r.ali).collect::<Vec<_>>()),
        fc: mean(&rows.iter().map(|r| r.fc).collect::<Vec<_>>()),
        psf: None,
    };
    rows.push(average);
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.1}"),
        None => "-".into(),
    }
}

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "Scenario", "CF", "IB", "Pos.", "Ali.", "FC", "PSF"
    );
    for row in rows {
        let _ = writeln!(
            out,
            "{:<24} {:>7.1} {:>7.1} {:>7} {:>7} {:>7.1} {:>7}",
            row.label,
            row.cf,
            row.ib,
            fmt_opt(row.pos),
            fmt_opt(row.ali),
            row.fc,
            fmt_opt(row.psf),
        );
    }
    out
}

pub fn format_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("scenario,cf,ib,pos,ali,fc,psf\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{:.1},{:.1},{},{},{:.1},{}",
            row.label,
            row.cf,
            row.ib,
            fmt_opt(row.pos),
            fmt_opt(row.ali),
            row.fc,
            fmt_opt(row.psf),
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct PsfCheckRow {
    pub method: String,
    pub computed: f64,
    pub expected: f64,
    pub pass: bool,
}

/// Verify the PSF column of a published component table: each row must
/// reproduce within +/-0.05.
pub fn psf_check(csv_path: &Path) -> Result<Vec<PsfCheckRow>> {
    let text = std::fs::read_to_string(csv_path)
        .with_context(|| format!("cannot read {}", csv_path.display()))?;
    psf_check_text(&text, &csv_path.display().to_string())
}

pub fn psf_check_text(text: &str, origin: &str) -> Result<Vec<PsfCheckRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("method")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            bail!("{origin}: line {} needs 7 fields (method,cf,ib,pos,ali,fc,psf)", idx + 1);
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .with_context(|| format!("{origin}: line {} field {}", idx + 1, i + 1))
        };
        let computed = psf(num(1)?, num(2)?, num(3)?, num(4)?, num(5)?);
        let expected = num(6)?;
        rows.push(PsfCheckRow {
            method: fields[0].to_string(),
            computed,
            expected,
            pass: (computed - expected).abs() <= 0.05 + 1e-9,
        });
    }
    if rows.is_empty() {
        bail!("{origin}: no data rows");
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_passes_psf_check() {
        let rows = psf_check_text(include_str!("../assets/table2_avg.csv"), "bundled").unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
    }

    #[test]
    fn psf_check_flags_wrong_column() {
        let rows =
            psf_check_text("method,cf,ib,pos,ali,fc,psf\nX,100,100,100,100,100,90.0\n", "inline")
                .unwrap();
        assert!(!rows[0].pass);
        assert!((rows[0].computed - 100.0).abs() < 1e-12);
    }
}
