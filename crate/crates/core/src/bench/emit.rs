use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{BenchError, BenchReport, OutcomeRow, SweepPoint};

pub const CSV_HEADER: &str = "instance,mode,executed,solved,attempts,tokens,duration_ms";
pub const SWEEP_HEADER: &str =
    "parameter,value,mode,total,executed,solved,success_rate,execution_rate";

fn io(path: &Path) -> impl Fn(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>, BenchError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    let file = fs::File::create(path).map_err(io(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn header(h: &str) -> Vec<&str> {
    h.split(',').collect()
}

/// The per-run table.
pub fn write_csv(rows: &[OutcomeRow], path: &Path) -> Result<(), BenchError> {
    let mut w = writer(path)?;
    w.write_record(header(CSV_HEADER))?;
    for r in rows {
        w.write_record([
            r.instance.clone(),
            r.mode.to_string(),
            r.executed.to_string(),
            r.solved.to_string(),
            r.attempts.to_string(),
            r.tokens.to_string(),
            r.duration_ms.to_string(),
        ])?;
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

/// Writes `<dir>/<timestamp>.json`, adding a suffix if that name is taken.
pub fn write_json(report: &BenchReport, dir: &Path) -> Result<PathBuf, BenchError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let mut path = dir.join(format!("{stamp}.json"));
    let mut n = 1;
    while path.exists() {
        path = dir.join(format!("{stamp}-{n}.json"));
        n += 1;
    }
    let json = serde_json::to_string_pretty(report).expect("reports serialize");
    fs::write(&path, json + "\n").map_err(io(&path))?;
    Ok(path)
}

/// One line of the plot-data file: either a per-mode bar or a per-instance
/// point of SNOP length against outcome.
#[derive(Debug, Clone, PartialEq)]
pub enum PlotRow {
    Mode {
        mode: String,
        success_rate: f64,
        execution_rate: f64,
    },
    Instance {
        mode: String,
        instance: String,
        snop_length: usize,
        solved: bool,
    },
}

pub const PLOT_HEADER: &str = "kind,mode,instance,snop_length,success_rate,execution_rate,solved";

/// `snop_lengths` maps instance id to the character count of its serialized SNOP.
pub fn plot_rows(report: &BenchReport, snop_lengths: &BTreeMap<String, usize>) -> Vec<PlotRow> {
    let mut rows: Vec<PlotRow> = report
        .modes
        .iter()
        .map(|m| PlotRow::Mode {
            mode: m.mode.to_string(),
            success_rate: m.success_rate,
            execution_rate: m.execution_rate,
        })
        .collect();
    rows.extend(report.rows.iter().map(|r| PlotRow::Instance {
        mode: r.mode.to_string(),
        instance: r.instance.clone(),
        snop_length: snop_lengths.get(&r.instance).copied().unwrap_or(0),
        solved: r.solved,
    }));
    rows
}

pub fn write_plot_data(
    report: &BenchReport,
    snop_lengths: &BTreeMap<String, usize>,
    path: &Path,
) -> Result<(), BenchError> {
    let mut w = writer(path)?;
    w.write_record(header(PLOT_HEADER))?;
    for row in plot_rows(report, snop_lengths) {
        let rec: [String; 7] = match row {
            PlotRow::Mode {
                mode,
                success_rate,
                execution_rate,
            } => [
                "mode".into(),
                mode,
                String::new(),
                String::new(),
                success_rate.to_string(),
                execution_rate.to_string(),
                String::new(),
            ],
            PlotRow::Instance {
                mode,
                instance,
                snop_length,
                solved,
            } => [
                "instance".into(),
                mode,
                instance,
                snop_length.to_string(),
                String::new(),
                String::new(),
                u8::from(solved).to_string(),
            ],
        };
        w.write_record(rec)?;
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

pub fn write_sweep_csv(points: &[SweepPoint], path: &Path) -> Result<(), BenchError> {
    let mut w = writer(path)?;
    w.write_record(header(SWEEP_HEADER))?;
    for p in points {
        w.write_record([
            p.parameter.as_str().to_string(),
            p.value.to_string(),
            p.mode.to_string(),
            p.total.to_string(),
            p.executed.to_string(),
            p.solved.to_string(),
            p.success_rate.to_string(),
            p.execution_rate.to_string(),
        ])?;
    }
    w.flush().map_err(io(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::Tolerance;

    fn empty_report() -> BenchReport {
        BenchReport {
            corpus_version: "v".into(),
            generated_at: String::new(),
            classification: String::new(),
            tolerance: Tolerance::default(),
            configs: vec![],
            modes: vec![],
            rows: vec![],
        }
    }

    #[test]
    fn empty_report_gives_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&empty_report().rows, &path).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            format!("{CSV_HEADER}\n")
        );
    }

    #[test]
    fn json_names_do_not_collide() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_json(&empty_report(), dir.path()).unwrap();
        let b = write_json(&empty_report(), dir.path()).unwrap();
        assert_ne!(a, b);
    }
}
