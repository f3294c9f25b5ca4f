//! Markdown comparison of metrics CSV files.

use std::path::Path;

use aslnet::metrics::MetricsReport;
use aslnet::Error;

/// Columns of the comparison table: name, CSV column, percent scaling.
pub const COLUMNS: [(&str, &str, bool); 6] = [
    ("OA (%)", "oa", true),
    ("F1 (%)", "f1", true),
    ("IoU (%)", "iou", true),
    ("MR (%)", "mr", true),
    ("E_curv", "e_curv", false),
    ("E_shape", "e_shape", false),
];

/// One method: its `TOTAL` row values in [`COLUMNS`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

/// Reads the `TOTAL` row of a metrics CSV written by `eval`.
pub fn read_total(path: &Path, name: &str) -> anyhow::Result<MethodRow> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != MetricsReport::csv_header() {
        return Err(Error::Format {
            offset: 0,
            reason: format!("{}: unexpected columns `{header}`", path.display()),
        }
        .into());
    }
    let cols: Vec<&str> = header.split(',').collect();
    let mut offset = header.len() + 1;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Format {
                offset,
                reason: format!("{}: row has {} fields, header {}", path.display(), fields.len(), cols.len()),
            }
            .into());
        }
        if fields[0] == "TOTAL" {
            let values = COLUMNS
                .iter()
                .map(|(_, key, _)| {
                    let i = cols.iter().position(|c| c == key).expect("header checked");
                    match fields[i] {
                        "NA" => Ok(None),
                        v => v.parse::<f64>().map(Some).map_err(|_| {
                            Error::Format {
                                offset,
                                reason: format!("{}: bad number `{v}`", path.display()),
                            }
                        }),
                    }
                })
                .collect::<Result<_, _>>()?;
            return Ok(MethodRow {
                name: name.to_string(),
                values,
            });
        }
        offset += line.len() + 1;
    }
    Err(Error::Format {
        offset,
        reason: format!("{}: no TOTAL row", path.display()),
    }
    .into())
}

fn cell(v: Option<f64>, percent: bool) -> String {
    match v {
        Some(x) if percent => format!("{:.2}", 100.0 * x),
        Some(x) => format!("{x:.2}"),
        None => "NA".into(),
    }
}

fn delta(a: Option<f64>, b: Option<f64>, percent: bool) -> String {
    match (a, b) {
        (Some(a), Some(b)) => {
            let d = if percent { 100.0 * (b - a) } else { b - a };
            format!("{d:+.2}")
        }
        _ => "NA".into(),
    }
}

/// Rows are methods; each method after the first also gets a row of
/// differences to the first.
pub fn markdown(rows: &[MethodRow]) -> String {
    let mut out = String::from("| Method |");
    for (name, _, _) in COLUMNS {
        out.push_str(&format!(" {name} |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(COLUMNS.len()));
    out.push('\n');
    for r in rows {
        out.push_str(&format!("| {} |", r.name));
        for (v, (_, _, pct)) in r.values.iter().zip(COLUMNS) {
            out.push_str(&format!(" {} |", cell(*v, pct)));
        }
        out.push('\n');
    }
    if let Some((first, rest)) = rows.split_first() {
        for r in rest {
            out.push_str(&format!("| Δ {} − {} |", r.name, first.name));
            for ((a, b), (_, _, pct)) in first.values.iter().zip(&r.values).zip(COLUMNS) {
                out.push_str(&format!(" {} |", delta(*a, *b, pct)));
            }
            out.push('\n');
        }
    }
    out
}
