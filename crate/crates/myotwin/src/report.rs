//! CSV and text-table renderings of loss curves and RMS reports.

use std::fmt::Write as _;

use myotwin_core::estimator::{RmsReport, SectionRms};

pub const LOSS_FILE: &str = "loss_curve.csv";
pub const REPORT_FILE: &str = "report.csv";

pub const OUTPUT_LABELS: [&str; 2] = ["stiffness (N·m/rad)", "orientation (deg)"];
pub const SECTION_NAMES: [&str; 4] = ["First", "Second", "Third", "Whole"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

pub fn loss_curve_csv(loss: &[f64]) -> String {
    let mut s = String::from("epoch,mse\n");
    for (i, l) in loss.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", i + 1);
    }
    s
}

fn cells(r: &SectionRms) -> [Option<f64>; 4] {
    [r.first, r.second, r.third, Some(r.whole)]
}

pub fn report_csv(r: &RmsReport) -> String {
    let mut s = format!("output,{}\n", SECTION_NAMES.join(","));
    for (label, out) in OUTPUT_LABELS.iter().zip(r.outputs()) {
        let vals: Vec<String> = cells(out).iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()).collect();
        let _ = writeln!(s, "{label},{}", vals.join(","));
    }
    s
}

/// Fixed-width table with a header carrying the units.
pub fn table(title: &str, rows: &[(String, [Option<f64>; 4])]) -> String {
    let width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(6).max(6);
    let mut s = format!("{title}\n{:<width$}", "output");
    for n in SECTION_NAMES {
        let _ = write!(s, " {n:>10}");
    }
    s.push('\n');
    for (label, vals) in rows {
        let pad = width - label.chars().count();
        let _ = write!(s, "{label}{}", " ".repeat(pad));
        for v in vals {
            match v {
                Some(x) => {
                    let _ = write!(s, " {x:>10.4}");
                }
                None => {
                    let _ = write!(s, " {:>10}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

pub fn report_table(r: &RmsReport) -> String {
    let rows: Vec<_> = OUTPUT_LABELS
        .iter()
        .zip(r.outputs())
        .map(|(l, o)| (l.to_string(), cells(o)))
        .collect();
    let title = format!(
        "RMS error, stiffness in N·m/rad and orientation in deg (test samples {}; sections {:?})",
        r.total, r.section_sizes
    );
    table(&title, &rows)
}

pub fn render_report(r: &RmsReport, format: Format) -> String {
    match format {
        Format::Csv => report_csv(r),
        Format::Table => report_table(r),
    }
}

/// Linearly interpolated quantile of unsorted data (`q` in [0, 1]).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty data");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn iqr(values: &[f64]) -> f64 {
    quantile(values, 0.75) - quantile(values, 0.25)
}

#[cfg(test)]
mod tests {
    use super::*;
    use myotwin_core::estimator::rms_report;

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(iqr(&v), 3.25 - 1.75);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn report_schema() {
        let r = rms_report(&[[1.0, 4.0], [1.0, 4.0], [1.0, 4.0]]);
        let csv = report_csv(&r);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("output,First,Second,Third,Whole"));
        assert_eq!(lines.next(), Some("stiffness (N·m/rad),1,1,1,1"));
        assert_eq!(lines.next(), Some("orientation (deg),2,2,2,2"));
        let t = report_table(&r);
        assert!(t.lines().next().unwrap().contains("N·m/rad") && t.contains("deg"));
    }

    #[test]
    fn absent_sections_render_empty() {
        let r = rms_report(&[[1.0, 1.0], [9.0, 9.0]]);
        assert!(report_csv(&r).contains("stiffness (N·m/rad),,,,"));
        assert!(report_table(&r).contains('-'));
    }

    #[test]
    fn loss_curve_rows() {
        assert_eq!(loss_curve_csv(&[0.5, 0.25]), "epoch,mse\n1,0.5\n2,0.25\n");
    }
}
