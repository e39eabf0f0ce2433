//! Markdown and plot-ready CSV views of an [`EvaluationReport`].

use std::fmt::Write as _;

use super::{Cell, EvaluationReport, NaReason};
use crate::datastore::format_sig9;
use crate::error::Result;
use crate::psychometrics::{Corrected, CorrelationResult};

fn na(reason: NaReason) -> String {
    format!("NA ({})", reason.as_str())
}

fn two(v: f64) -> String {
    format!("{v:.2}")
}

fn cell_f64(c: &Cell<f64>) -> String {
    match c {
        Cell::Value(v) => two(*v),
        Cell::Na(r) => na(*r),
    }
}

fn cell_corrected(c: &Cell<Corrected>) -> String {
    match c {
        Cell::Value(v) if v.clamped => format!("{}†", two(v.value)),
        Cell::Value(v) => two(v.value),
        Cell::Na(r) => na(*r),
    }
}

fn starred(partial: &Cell<Corrected>, raw: &Cell<CorrelationResult>) -> String {
    match (partial, raw) {
        (Cell::Value(_), Cell::Value(r)) => format!("{}{}", cell_corrected(partial), r.stars.marks()),
        _ => cell_corrected(partial),
    }
}

fn table_header(out: &mut String, columns: &[String]) {
    let _ = writeln!(out, "| {} |", columns.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(columns.len()));
}

fn table_row(out: &mut String, cells: &[String]) {
    let _ = writeln!(out, "| {} |", cells.join(" | "));
}

pub fn render_markdown(report: &EvaluationReport) -> String {
    let m = &report.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "# Semantic projection evaluation report\n");
    let _ = writeln!(out, "- Model: `{}`", m.model_id);
    let seed = m.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    let _ = writeln!(out, "- Seed: {seed}");
    let _ = writeln!(out, "- Time points: {}", m.time_point);
    let _ = writeln!(
        out,
        "- Responses: {}; participants: {}; observations: {}",
        m.n_responses, m.n_participants, m.n_observations
    );
    if m.non_independent_observations {
        let _ = writeln!(
            out,
            "- Some participants contribute two time points; p-values treat them as independent."
        );
    }
    let rels: Vec<String> = m
        .reliabilities
        .iter()
        .map(|(s, r)| format!("{} {}", s.label(), r.value))
        .collect();
    let _ = writeln!(out, "- Scale reliabilities: {}", rels.join(", "));
    let _ = writeln!(
        out,
        "- Sentiment lexicon: {} (sha256 {})",
        m.sentiment_lexicon.id, m.sentiment_lexicon.checksum
    );
    if !m.clamped_cells.is_empty() {
        let _ = writeln!(out, "- Clamped corrections (marked †): {}", m.clamped_cells.len());
    }
    let _ = writeln!(out, "- Generated: {}\n", m.generated_at);

    for t in &report.correlations {
        let _ = writeln!(
            out,
            "## Associations between semantic projections and clinical totals: {}\n",
            t.construct
        );
        let _ = writeln!(
            out,
            "Pearson correlations of severity with each total, corrected for the reliability of the clinical scale only. \
             Stars use the uncorrected p-value: * p < .05, ** p < .01, *** p < .001.\n"
        );
        let mut cols = vec!["Format".to_string()];
        for a in &t.axes {
            for s in &t.scales {
                cols.push(format!("{a} {}", s.label()));
            }
        }
        table_header(&mut out, &cols);
        for &row in &t.rows {
            let mut cells = vec![row.label().to_string()];
            for a in &t.axes {
                for &s in &t.scales {
                    cells.push(
                        t.cell(row, a, s)
                            .map_or_else(|| na(NaReason::NoData), |c| starred(&c.partial, &c.raw)),
                    );
                }
            }
            table_row(&mut out, &cells);
        }
        out.push('\n');
    }

    let r = &report.reliability;
    let _ = writeln!(out, "## Split-half reliability of semantic projection scores\n");
    let _ = writeln!(
        out,
        "Odd/even split-half correlations stepped up with the Spearman-Brown formula.\n"
    );
    let mut cols = vec!["Format".to_string()];
    cols.extend(r.axes.iter().cloned());
    table_header(&mut out, &cols);
    for &row in &r.rows {
        let mut cells = vec![row.label().to_string()];
        for a in &r.axes {
            cells.push(cell_f64(&r.r_sb(row, a)));
        }
        table_row(&mut out, &cells);
    }
    out.push('\n');

    for t in &report.sensitivity {
        let _ = writeln!(
            out,
            "## Raw, partial and split-half corrected correlations: {}\n",
            t.construct
        );
        table_header(
            &mut out,
            &["Format", "Axis", "Scale", "Raw", "Partial", "Split-half corrected"].map(String::from),
        );
        for c in &t.cells {
            table_row(
                &mut out,
                &[
                    c.row.label().to_string(),
                    c.axis.clone(),
                    c.scale.label().to_string(),
                    cell_f64(&c.raw),
                    cell_corrected(&c.partial),
                    cell_corrected(&c.full),
                ],
            );
        }
        out.push('\n');
    }

    for t in &report.distributions {
        let _ = writeln!(
            out,
            "## Distributional similarity to clinical totals: {}\n",
            t.construct
        );
        let _ = writeln!(
            out,
            "Wasserstein distance between z-scored severity and z-scored totals (lower is more similar), with the raw correlation.\n"
        );
        table_header(
            &mut out,
            &["Rank", "Format", "Axis", "Scale", "WD_z", "Raw r"].map(String::from),
        );
        for top in &t.top {
            table_row(
                &mut out,
                &[
                    top.rank.to_string(),
                    top.row.label().to_string(),
                    top.axis.clone(),
                    top.scale.label().to_string(),
                    two(top.wd_z),
                    cell_f64(&top.raw_r),
                ],
            );
        }
        out.push('\n');
    }

    let _ = writeln!(out, "## Semantic projection versus lexicon sentiment\n");
    let _ = writeln!(
        out,
        "Δ is the best partially corrected projection correlation minus that of the sentiment distress index on the raw text.\n"
    );
    table_header(
        &mut out,
        &[
            "Construct",
            "Format",
            "Scale",
            "Best projection",
            "Projection r",
            "Sentiment r",
            "Δ",
        ]
        .map(String::from),
    );
    for c in &report.baseline.cells {
        let (best, pr) = match &c.projection {
            Cell::Value(b) => (format!("{} ({})", b.axis, b.row.label()), two(b.partial_r)),
            Cell::Na(r) => ("-".to_string(), na(*r)),
        };
        table_row(
            &mut out,
            &[
                c.construct.to_string(),
                c.format.label().to_string(),
                c.scale.label().to_string(),
                best,
                pr,
                cell_corrected(&c.sentiment_partial),
                cell_f64(&c.delta),
            ],
        );
    }
    out
}

fn csv_f64(c: &Cell<f64>) -> String {
    match c {
        Cell::Value(v) => format_sig9(*v),
        Cell::Na(_) => "NA".into(),
    }
}

fn csv_corrected(c: &Cell<Corrected>) -> String {
    csv_f64(&c.map(|v| v.value))
}

fn to_csv(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Plot-ready CSV files as `(file name, contents)` pairs.
pub fn plot_tables(report: &EvaluationReport) -> Result<Vec<(&'static str, String)>> {
    let mut sensitivity = Vec::new();
    for t in &report.sensitivity {
        for c in &t.cells {
            sensitivity.push(vec![
                t.construct.to_string(),
                c.row.to_string(),
                c.axis.clone(),
                c.scale.to_string(),
                csv_f64(&c.raw),
                csv_corrected(&c.partial),
                csv_corrected(&c.full),
            ]);
        }
    }
    let mut distributions = Vec::new();
    for t in &report.distributions {
        for c in &t.cells {
            let rank = t
                .top
                .iter()
                .find(|r| r.row == c.row && r.axis == c.axis && r.scale == c.scale)
                .map_or_else(String::new, |r| r.rank.to_string());
            distributions.push(vec![
                t.construct.to_string(),
                c.row.to_string(),
                c.axis.clone(),
                c.scale.to_string(),
                c.n.to_string(),
                csv_f64(&c.wd_z),
                csv_f64(&c.raw_r),
                rank,
            ]);
        }
    }
    let mut delta = Vec::new();
    for c in &report.baseline.cells {
        let (row, axis, pr) = match &c.projection {
            Cell::Value(b) => (b.row.to_string(), b.axis.clone(), format_sig9(b.partial_r)),
            Cell::Na(_) => (String::new(), String::new(), "NA".into()),
        };
        delta.push(vec![
            c.construct.to_string(),
            c.format.to_string(),
            c.scale.to_string(),
            row,
            axis,
            pr,
            csv_corrected(&c.sentiment_partial),
            csv_f64(&c.delta),
        ]);
    }
    let mut reliability = Vec::new();
    for c in &report.reliability.cells {
        reliability.push(vec![
            c.construct.to_string(),
            c.row.to_string(),
            c.axis.clone(),
            c.n_pairs.to_string(),
            c.excluded.to_string(),
            csv_f64(&c.r_half),
            csv_f64(&c.r_sb),
        ]);
    }
    Ok(vec![
        (
            "sensitivity.csv",
            to_csv(
                &["construct", "row", "axis", "scale", "raw", "partial", "full"],
                sensitivity,
            )?,
        ),
        (
            "distributions.csv",
            to_csv(
                &["construct", "row", "axis", "scale", "n", "wd_z", "raw_r", "top_rank"],
                distributions,
            )?,
        ),
        (
            "baseline_delta.csv",
            to_csv(
                &[
                    "construct",
                    "format",
                    "scale",
                    "best_row",
                    "best_axis",
                    "projection_partial_r",
                    "sentiment_partial_r",
                    "delta",
                ],
                delta,
            )?,
        ),
        (
            "reliability.csv",
            to_csv(
                &["construct", "row", "axis", "n_pairs", "excluded", "r_half", "r_sb"],
                reliability,
            )?,
        ),
    ])
}
