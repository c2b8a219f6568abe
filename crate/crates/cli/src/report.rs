//! Plain-text and CSV renderings of analysis results.

use grm_core::analysis::{EdgeOutcome, EdgeReport, RepeatabilityReport, SuccessTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

/// Renders rows as left-aligned text columns or as CSV.
fn render(header: &[String], rows: &[Vec<String>], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            for r in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
                let cells: Vec<String> = r.iter().map(|c| csv_cell(c)).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        Format::Text => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
            for r in rows {
                for (w, c) in widths.iter_mut().zip(r) {
                    *w = (*w).max(c.len());
                }
            }
            for r in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
                let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
            }
        }
    }
    out
}

fn csv_cell(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

fn num(x: f64) -> String {
    // trims the noise from values like 2.1428571428571428
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn angles(a: &[f64]) -> String {
    a.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")
}

pub fn success_table(t: &SuccessTable, format: Format) -> String {
    let mut header: Vec<String> = ["pose", "range", "grasp"].map(String::from).to_vec();
    for o in &t.objects {
        header.extend([format!("{o}_angles"), format!("{o}_rate"), format!("{o}_n")]);
    }
    let mut rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            let unit = if r.perturb_axis.is_rotation() { "deg" } else { "mm" };
            let mut row = vec![
                r.perturb_axis.to_string(),
                format!("{}-{} {unit}", num(r.range.0), num(r.range.1)),
                r.grasp_type.to_string(),
            ];
            for c in &r.cells {
                let rate = if c.n == 0 { "-".to_string() } else { format!("{}%", c.success_rate) };
                row.extend([angles(&c.angles), rate, c.n.to_string()]);
            }
            row
        })
        .collect();
    let mut total = vec!["overall".to_string(), String::new(), String::new()];
    total.resize(header.len(), String::new());
    total[3] = format!("{}/{} = {}%", t.successes, t.n, t.overall_rate);
    rows.push(total);
    render(&header, &rows, format)
}

pub fn repeatability(r: &RepeatabilityReport, format: Format) -> String {
    let header = ["n", "std_x_mm", "std_y_mm", "mean_std_xy_mm", "std_xy_se_mm", "std_theta_deg", "failures"]
        .map(String::from)
        .to_vec();
    let row = vec![
        r.n.to_string(),
        format!("{:.4}", r.std_x),
        format!("{:.4}", r.std_y),
        format!("{:.4}", r.mean_std_xy),
        format!("{:.4}", r.std_xy_se),
        format!("{:.3}", r.std_theta),
        r.failures.to_string(),
    ];
    render(&header, &[row], format)
}

pub fn edges(reports: &[EdgeReport], format: Format) -> String {
    let header = ["object", "angle", "grasp", "axis", "n", "outcome", "boundary", "bracket"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|e| {
            let (outcome, boundary, bracket) = match &e.outcome {
                EdgeOutcome::Boundary { value, low, high } => {
                    ("boundary".to_string(), num(*value), format!("{} .. {}", num(*low), num(*high)))
                }
                EdgeOutcome::NoTransition => ("none".to_string(), String::new(), String::new()),
                EdgeOutcome::NonMonotone(idx) => (
                    "non_monotone".to_string(),
                    String::new(),
                    idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "),
                ),
            };
            vec![
                e.object_id.clone(),
                num(e.object_angle),
                e.grasp_type.to_string(),
                e.perturb_axis.to_string(),
                e.n.to_string(),
                outcome,
                boundary,
                bracket,
            ]
        })
        .collect();
    render(&header, &rows, format)
}
