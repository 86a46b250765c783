//! Rendering of evaluation reports.

use std::str::FromStr;

use crate::eval::{EvalReport, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "md" | "markdown" => Ok(Self::Markdown),
            other => Err(format!("unknown report format `{other}` (expected json or md)")),
        }
    }
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => report.to_canonical_json(),
        ReportFormat::Markdown => markdown_table(report),
    }
}

fn header(metric: Metric) -> &'static str {
    match metric {
        Metric::Fad => "FAD↓",
        Metric::Kl => "KL↓",
        Metric::IbRank => "IB Rank↑",
    }
}

fn lower_is_better(metric: Metric) -> bool {
    !matches!(metric, Metric::IbRank)
}

fn value(report: &EvalReport, system: &str, metric: Metric) -> Option<f64> {
    let s = &report.systems[system];
    match metric {
        Metric::Fad => s.fad,
        Metric::Kl => s.kl,
        Metric::IbRank => s.ib_rank,
    }
}

/// One row per system, one column per requested metric, three decimals.
/// The best value in each column is bold; ties are all bold.
pub fn markdown_table(report: &EvalReport) -> String {
    let metrics = &report.metrics;
    let mut out = String::from("| Model |");
    for m in metrics {
        out.push_str(&format!(" {} |", header(*m)));
    }
    out.push_str("\n| --- |");
    out.push_str(&" ---: |".repeat(metrics.len()));
    out.push('\n');

    let best: Vec<Option<f64>> = metrics
        .iter()
        .map(|m| {
            let values = report.systems.keys().filter_map(|s| value(report, s, *m));
            if lower_is_better(*m) {
                values.reduce(f64::min)
            } else {
                values.reduce(f64::max)
            }
        })
        .collect();
    for system in report.systems.keys() {
        out.push_str(&format!("| {system} |"));
        for (m, best) in metrics.iter().zip(&best) {
            let cell = match value(report, system, *m) {
                Some(v) if Some(v) == *best => format!("**{v:.3}**"),
                Some(v) => format!("{v:.3}"),
                None => "n/a".to_string(),
            };
            out.push_str(&format!(" {cell} |"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::eval::SystemScores;

    fn report(metrics: Vec<Metric>) -> EvalReport {
        let s = |fad, kl, ib| SystemScores {
            fad: Some(fad),
            kl: Some(kl),
            ib_rank: Some(ib),
        };
        EvalReport {
            systems: BTreeMap::from([
                ("alpha".to_string(), s(4.0, 0.25, 0.5)),
                ("beta".to_string(), s(2.5, 0.25, 0.75)),
                ("gamma".to_string(), s(6.0, 0.5, 0.25)),
            ]),
            item_count: 3,
            metrics,
            config_digest: "0".repeat(64),
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn table_bolds_best_and_ties() {
        let t = markdown_table(&report(Metric::ALL.to_vec()));
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "| Model | FAD↓ | KL↓ | IB Rank↑ |");
        assert_eq!(lines[2], "| alpha | 4.000 | **0.250** | 0.500 |");
        assert_eq!(lines[3], "| beta | **2.500** | **0.250** | **0.750** |");
        assert_eq!(lines[4], "| gamma | 6.000 | 0.500 | 0.250 |");
    }

    #[test]
    fn table_has_only_requested_columns() {
        let t = markdown_table(&report(vec![Metric::Kl]));
        assert!(t.starts_with("| Model | KL↓ |\n"));
        assert!(!t.contains("FAD"));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("md".parse::<ReportFormat>().unwrap(), ReportFormat::Markdown);
        assert_eq!("JSON".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
        assert!("csv".parse::<ReportFormat>().is_err());
    }
}
