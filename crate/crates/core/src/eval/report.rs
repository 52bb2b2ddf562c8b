use std::fmt::Write as _;

use super::EvalReport;

fn percent(ap: Option<f64>) -> String {
    ap.map_or_else(|| "n/a".to_owned(), |v| format!("{:.2}", 100.0 * v))
}

/// Human-readable AP table, one row per variant, one column per bin.
pub fn render_table(rows: &[(String, &EvalReport)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let width = rows.iter().map(|(name, _)| name.len()).max().unwrap_or(0).max(10);
    let mut out = String::new();
    writeln!(
        out,
        "3D AP (%), {} interpolation, IoU >= {}",
        first.interpolation.name(),
        first.iou_threshold
    )
    .unwrap();
    write!(out, "{:<width$}", "variant").unwrap();
    for b in &first.bins {
        write!(out, " {:>10}", b.label).unwrap();
    }
    writeln!(out).unwrap();
    for (name, report) in rows {
        write!(out, "{name:<width$}").unwrap();
        for b in &report.bins {
            write!(out, " {:>10}", percent(b.ap)).unwrap();
        }
        writeln!(out).unwrap();
    }
    out
}

pub const CSV_HEADER: &str = "variant,bin,lo,hi,interpolation,iou_threshold,ap,num_gt,tp,fp,fn,ghosts";

/// Machine-readable report: one row per variant and bin. Undefined AP is an
/// empty field.
pub fn render_csv(rows: &[(String, &EvalReport)]) -> String {
    let mut out = String::new();
    writeln!(out, "{CSV_HEADER}").unwrap();
    for (name, report) in rows {
        for b in &report.bins {
            writeln!(
                out,
                "{name},{},{},{},{},{},{},{},{},{},{},{}",
                b.label,
                b.bin.lo,
                b.bin.hi,
                report.interpolation.name(),
                report.iou_threshold,
                b.ap.map(|v| v.to_string()).unwrap_or_default(),
                b.num_gt,
                b.tp,
                b.fp,
                b.fn_,
                b.ghosts
            )
            .unwrap();
        }
    }
    out
}
