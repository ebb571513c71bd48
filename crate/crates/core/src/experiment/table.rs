//! Result tables assembled from run records.

use std::str::FromStr;

use serde::Serialize;

use super::runner::RunRecord;
use crate::datasets::Family;
use crate::error::{Result, ZddaError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableLayout {
    /// Tasks as columns; source-only, one ZDDA2 row per task-irrelevant
    /// family, and target-only as rows. Cells are `overall/per-class` in %.
    Adaptation,
}

impl FromStr for TableLayout {
    type Err = ZddaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table4" | "adaptation" => Ok(TableLayout::Adaptation),
            other => Err(ZddaError::Configuration(format!("unknown table layout {other:?}"))),
        }
    }
}

/// Where a cell value came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSource {
    pub run: String,
    pub config_hash: String,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub label: String,
    pub cells: Vec<Option<String>>,
    pub sources: Vec<Option<CellSource>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    SourceOnly,
    Zdda2(Family),
    TargetOnly,
}

impl RowKind {
    fn label(self) -> String {
        match self {
            RowKind::SourceOnly => "source only".into(),
            RowKind::Zdda2(f) => format!("ZDDA2 (T-I {f})"),
            RowKind::TargetOnly => "target only".into(),
        }
    }

    fn report(self) -> &'static str {
        match self {
            RowKind::SourceOnly => "source_only",
            RowKind::Zdda2(_) => "zdda2",
            RowKind::TargetOnly => "target_only",
        }
    }

    fn accepts(self, r: &RunRecord) -> bool {
        match self {
            RowKind::Zdda2(f) => r.task.task_irrelevant.family == f,
            _ => true,
        }
    }
}

/// Builds a table; rows without any value are dropped, and a cell that
/// several records could fill takes the first record in the given order.
pub fn emit_table(records: &[RunRecord], layout: TableLayout) -> ResultTable {
    match layout {
        TableLayout::Adaptation => adaptation_table(records),
    }
}

fn adaptation_table(records: &[RunRecord]) -> ResultTable {
    let tasks = Family::ALL;
    let mut kinds = vec![RowKind::SourceOnly];
    kinds.extend(Family::ALL.into_iter().map(RowKind::Zdda2));
    kinds.push(RowKind::TargetOnly);
    let mut rows = Vec::new();
    for kind in kinds {
        let mut cells = Vec::new();
        let mut sources = Vec::new();
        for task in tasks {
            let hit = records.iter().find_map(|r| {
                if r.task.source.family != task || !kind.accepts(r) {
                    return None;
                }
                r.reports.get(kind.report()).map(|rep| (r, rep))
            });
            match hit {
                Some((r, rep)) => {
                    cells.push(Some(rep.cell()));
                    sources.push(Some(CellSource {
                        run: r.name.clone(),
                        config_hash: r.config_hash.clone(),
                        report: kind.report().into(),
                    }));
                }
                None => {
                    cells.push(None);
                    sources.push(None);
                }
            }
        }
        if cells.iter().any(Option::is_some) {
            rows.push(TableRow {
                label: kind.label(),
                cells,
                sources,
            });
        }
    }
    ResultTable {
        corner: "method".into(),
        columns: tasks.iter().map(|f| format!("{f} -> {f}-m")).collect(),
        rows,
    }
}

const NA: &str = "N/A";

impl ResultTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| ZddaError::Consistency(e.to_string());
        let mut header = vec![self.corner.clone()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(to_err)?;
        for r in &self.rows {
            let mut rec = vec![r.label.clone()];
            rec.extend(r.cells.iter().map(|c| c.clone().unwrap_or_else(|| NA.into())));
            w.write_record(&rec).map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| ZddaError::Consistency(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| ZddaError::Consistency(e.to_string()))
    }

    /// Fixed-width plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut grid = vec![{
            let mut h = vec![self.corner.clone()];
            h.extend(self.columns.iter().cloned());
            h
        }];
        for r in &self.rows {
            let mut line = vec![r.label.clone()];
            line.extend(r.cells.iter().map(|c| c.clone().unwrap_or_else(|| NA.into())));
            grid.push(line);
        }
        let ncol = grid[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|j| grid.iter().map(|l| l[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, line) in grid.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, &w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (ncol - 1)));
                out.push('\n');
            }
        }
        out
    }
}
