use std::collections::BTreeMap;
use std::fmt::Write;

use serde_json::{json, Value};

use super::matrix::EvalCell;
use crate::models::Variant;

/// Cells whose mean lies within this distance of the row best are all bold.
pub const BOLD_TOLERANCE: f64 = 5e-4;

const TITLE: &str = "AUC results, forward chaining";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Json,
}

/// `0.679±0.036`, with `†` when some folds were single-class and `n/a`
/// when all were.
pub fn format_cell(cell: &EvalCell) -> String {
    match (cell.mean_auc, cell.std_auc) {
        (Some(m), Some(s)) => {
            let mark = if cell.is_degenerate() { "†" } else { "" };
            format!("{m:.3}±{s:.3}{mark}")
        }
        _ => "n/a".to_string(),
    }
}

struct Table<'a> {
    window: usize,
    fold_count: usize,
    variants: Vec<Variant>,
    rows: Vec<(u32, Vec<Option<&'a EvalCell>>)>,
}

fn tables(cells: &[EvalCell]) -> Vec<Table<'_>> {
    let mut by_window: BTreeMap<usize, Vec<&EvalCell>> = BTreeMap::new();
    for c in cells {
        by_window.entry(c.window).or_default().push(c);
    }
    by_window
        .into_iter()
        .map(|(window, cs)| {
            let mut variants: Vec<Variant> = cs.iter().map(|c| c.variant).collect();
            variants.sort_unstable();
            variants.dedup();
            let mut gammas: Vec<u32> = cs.iter().map(|c| c.gamma).collect();
            gammas.sort_unstable();
            gammas.dedup();
            let rows = gammas
                .into_iter()
                .map(|g| {
                    let row = variants
                        .iter()
                        .map(|&v| cs.iter().copied().find(|c| c.gamma == g && c.variant == v))
                        .collect();
                    (g, row)
                })
                .collect();
            Table {
                window,
                fold_count: cs.iter().map(|c| c.folds.len()).max().unwrap_or(0),
                variants,
                rows,
            }
        })
        .collect()
}

fn bold_flags(row: &[Option<&EvalCell>]) -> Vec<bool> {
    let best = row
        .iter()
        .filter_map(|c| c.and_then(|c| c.mean_auc))
        .fold(f64::NEG_INFINITY, f64::max);
    row.iter()
        .map(|c| {
            c.and_then(|c| c.mean_auc)
                .is_some_and(|m| best - m <= BOLD_TOLERANCE)
        })
        .collect()
}

fn markdown(cells: &[EvalCell]) -> String {
    let mut out = format!("# {TITLE}\n");
    let tables = tables(cells);
    if tables.is_empty() {
        return out;
    }
    out.push_str(
        "\nEach cell is the mean ± population standard deviation of the test-fold AUC. \
         The best result in each row is in bold; results within 0.0005 of it are bold too.\n",
    );
    let mut any_partial = false;
    for t in &tables {
        let _ = write!(
            out,
            "\n## {}-fold forward chaining. For M = {}.\n\n| γ |",
            t.fold_count, t.window
        );
        for v in &t.variants {
            let _ = write!(out, " {} |", v.display_name());
        }
        out.push_str("\n|---:|");
        out.push_str(&":---:|".repeat(t.variants.len()));
        out.push('\n');
        for (gamma, row) in &t.rows {
            let _ = write!(out, "| {gamma} |");
            for (cell, bold) in row.iter().zip(bold_flags(row)) {
                let text = cell.map_or_else(|| "–".to_string(), format_cell);
                any_partial |= cell.is_some_and(|c| c.is_degenerate());
                if bold {
                    let _ = write!(out, " **{text}** |");
                } else {
                    let _ = write!(out, " {text} |");
                }
            }
            out.push('\n');
        }
    }
    if any_partial {
        out.push_str(
            "\n† Some test folds contained a single class, so their AUC is undefined; the cell \
             summarizes the remaining folds. `n/a`: no fold had both classes.\n",
        );
    }
    out
}

/// The report tables as JSON, with per-fold detail.
pub fn report_json(cells: &[EvalCell]) -> Value {
    let tables: Vec<Value> = tables(cells)
        .iter()
        .map(|t| {
            let rows: Vec<Value> = t
                .rows
                .iter()
                .map(|(gamma, row)| {
                    let cells: Vec<Value> = row
                        .iter()
                        .zip(bold_flags(row))
                        .filter_map(|(c, bold)| {
                            c.map(|c| {
                                json!({
                                    "variant": c.variant,
                                    "label": c.variant.display_name(),
                                    "mean_auc": c.mean_auc,
                                    "std_auc": c.std_auc,
                                    "text": format_cell(c),
                                    "bold": bold,
                                    "degenerate_folds": c.degenerate_folds,
                                    "folds": c.folds.iter().map(|f| json!({
                                        "fold": f.fold,
                                        "train_items": f.train_items,
                                        "test_items": f.test_items,
                                        "test_positives": f.test_positives,
                                        "auc": f.auc,
                                    })).collect::<Vec<_>>(),
                                })
                            })
                        })
                        .collect();
                    json!({ "gamma": gamma, "cells": cells })
                })
                .collect();
            json!({
                "M": t.window,
                "fold_count": t.fold_count,
                "variants": t.variants,
                "rows": rows,
            })
        })
        .collect();
    json!({
        "title": TITLE,
        "metric": "roc_auc",
        "spread": "population standard deviation over folds with a defined AUC",
        "bold_tolerance": BOLD_TOLERANCE,
        "tables": tables,
    })
}

pub fn render_report(cells: &[EvalCell], format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => markdown(cells),
        ReportFormat::Json => {
            let mut s =
                serde_json::to_string_pretty(&report_json(cells)).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::FoldOutcome;

    fn cell(variant: Variant, gamma: u32, aucs: &[Option<f64>]) -> EvalCell {
        let folds: Vec<FoldOutcome> = aucs
            .iter()
            .enumerate()
            .map(|(k, &auc)| FoldOutcome {
                fold: k + 1,
                train_items: 10,
                test_items: 5,
                test_positives: 2,
                auc,
                roc: None,
            })
            .collect();
        let defined: Vec<f64> = aucs.iter().flatten().copied().collect();
        let n = defined.len() as f64;
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / n);
        let std = mean.map(|m| (defined.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt());
        EvalCell {
            variant,
            gamma,
            window: 5,
            degenerate_folds: folds
                .iter()
                .filter(|f| f.auc.is_none())
                .map(|f| f.fold)
                .collect(),
            folds,
            mean_auc: mean,
            std_auc: std,
        }
    }

    #[test]
    fn cell_text() {
        let c = cell(
            Variant::LstmNet,
            2,
            &[Some(0.643), Some(0.715), Some(0.679), Some(0.679)],
        );
        assert_eq!(
            format_cell(&c),
            format!("{:.3}±{:.3}", c.mean_auc.unwrap(), c.std_auc.unwrap())
        );
        let mut fixed = c.clone();
        fixed.mean_auc = Some(0.679);
        fixed.std_auc = Some(0.036);
        assert_eq!(format_cell(&fixed), "0.679±0.036");
        assert_eq!(
            format_cell(&cell(Variant::DnnNet, 2, &[None, Some(0.6)])),
            "0.600±0.000†"
        );
        assert_eq!(format_cell(&cell(Variant::DnnNet, 2, &[None, None])), "n/a");
    }

    #[test]
    fn larger_mean_is_bold() {
        let cells = [
            cell(Variant::DnnNet, 2, &[Some(0.6)]),
            cell(Variant::LogisticRegression, 2, &[Some(0.55)]),
        ];
        let md = render_report(&cells, ReportFormat::Markdown);
        assert!(md.contains("| 2 | **0.600±0.000** | 0.550±0.000 |"), "{md}");
    }

    #[test]
    fn near_ties_are_all_bold() {
        let cells = [
            cell(Variant::DnnNet, 2, &[Some(0.6)]),
            cell(Variant::RandomForest, 2, &[Some(0.6004)]),
            cell(Variant::LogisticRegression, 2, &[Some(0.59)]),
        ];
        let json = report_json(&cells);
        let bold: Vec<bool> = json["tables"][0]["rows"][0]["cells"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["bold"].as_bool().unwrap())
            .collect();
        assert_eq!(bold, [true, true, false]);
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(
            render_report(&[], ReportFormat::Markdown),
            format!("# {TITLE}\n")
        );
        let json = report_json(&[]);
        assert_eq!(json["tables"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn rows_ascend_and_columns_follow_variant_order() {
        let cells = [
            cell(Variant::LogisticRegression, 10, &[Some(0.5)]),
            cell(Variant::LstmNet, 10, &[Some(0.6)]),
            cell(Variant::LogisticRegression, 2, &[Some(0.5)]),
            cell(Variant::LstmNet, 2, &[Some(0.6)]),
        ];
        let md = render_report(&cells, ReportFormat::Markdown);
        assert!(md.contains("| γ | LSTM-net | LR |"));
        assert!(md.find("| 2 |").unwrap() < md.find("| 10 |").unwrap());
    }
}
