//! Text and CSV rendering of run reports. Column order is fixed: the
//! recognition and task columns first, then execution time and error counts.

use crate::harness::{ReportRow, RunReport, Stat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected table or csv)")),
        }
    }
}

const METRICS: [&str; 7] = ["objects", "contexts", "tasks", "exec_time", "manip_errors", "percept_errors", "nav_errors"];

pub fn csv_header() -> Vec<String> {
    let mut h = vec!["mode".to_string(), "increment".to_string(), "runs".to_string(), "labels".to_string()];
    for m in METRICS {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_std"));
    }
    h
}

fn stats(row: &ReportRow) -> [Option<Stat>; 7] {
    [
        row.object_acc,
        row.context_acc,
        row.task_acc,
        row.exec_time,
        row.manip_errors,
        row.percept_errors,
        row.nav_errors,
    ]
}

fn mode(report: &RunReport) -> &'static str {
    if report.joint {
        "joint"
    } else {
        "incremental"
    }
}

pub fn emit_report(report: &RunReport, format: Format) -> String {
    match format {
        Format::Csv => emit_csv(report),
        Format::Table => emit_table(report),
    }
}

fn emit_csv(report: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header()).expect("write to memory");
    for row in &report.rows {
        let mut rec = vec![
            mode(report).to_string(),
            row.increment.to_string(),
            report.runs.to_string(),
            row.labels.to_string(),
        ];
        for s in stats(row) {
            match s {
                Some(s) => {
                    rec.push(format!("{:.4}", s.mean));
                    rec.push(format!("{:.4}", s.std));
                }
                None => {
                    rec.push(String::new());
                    rec.push(String::new());
                }
            }
        }
        w.write_record(&rec).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

fn emit_table(report: &RunReport) -> String {
    let header = [
        "Increment", "Labels", "Objects (%)", "Contexts (%)", "Tasks (%)", "Exec time (s)", "Manip err", "Percept err", "Nav err",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for row in &report.rows {
        let mut cells = vec![
            if report.joint {
                format!("JT@{}", row.increment)
            } else {
                row.increment.to_string()
            },
            row.labels.to_string(),
        ];
        for s in stats(row) {
            cells.push(match s {
                Some(s) => format!("{:.1} ± {:.1}", s.mean, s.std),
                None => "-".into(),
            });
        }
        rows.push(cells);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}", w = *w))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{IncrementMetrics, Timing};

    fn stat(mean: f64) -> Option<Stat> {
        Some(Stat { mean, std: 0.0, n: 1 })
    }

    fn one_row() -> RunReport {
        RunReport {
            joint: false,
            runs: 1,
            rows: vec![ReportRow {
                increment: 1,
                labels: 3,
                object_acc: stat(90.0),
                context_acc: stat(100.0),
                task_acc: stat(80.0),
                exec_time: None,
                manip_errors: stat(1.0),
                percept_errors: stat(0.0),
                nav_errors: stat(0.0),
            }],
            per_run: vec![vec![IncrementMetrics::default()]],
            timing: Timing::default(),
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let csv = emit_report(&RunReport::empty(), Format::Csv);
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(csv.trim_end(), csv_header().join(","));
        assert_eq!(emit_report(&RunReport::empty(), Format::Table).lines().count(), 2);
    }

    #[test]
    fn csv_roundtrips_through_a_reader() {
        let text = emit_report(&one_row(), Format::Csv);
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(headers, csv_header());
        let recs: Vec<csv::StringRecord> = r.records().collect::<Result<_, _>>().unwrap();
        assert_eq!(recs.len(), 1);
        let rec = &recs[0];
        assert_eq!(&rec[0], "incremental");
        assert_eq!(rec[4].parse::<f64>().unwrap(), 90.0);
        assert_eq!(&rec[5], "0.0000");
        assert_eq!(&rec[10], "", "missing exec time stays empty");
    }

    #[test]
    fn table_has_table_one_column_order() {
        let t = emit_report(&one_row(), Format::Table);
        let head = t.lines().next().unwrap();
        let pos = |s: &str| head.find(s).unwrap();
        assert!(pos("Objects") < pos("Contexts"));
        assert!(pos("Contexts") < pos("Tasks"));
        assert!(pos("Tasks") < pos("Exec time"));
        assert!(t.contains("90.0 ± 0.0"));
    }

    #[test]
    fn format_parses() {
        assert_eq!("csv".parse::<Format>().unwrap(), Format::Csv);
        assert!("xml".parse::<Format>().is_err());
    }
}
