//! SVG heatmaps of noise-grid results, with explicit layout metadata so text
//! placement can be checked without rasterizing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZddaError};
use crate::eval::grid::{NAIVE, ZDDA3};
use crate::eval::NoiseGridResult;

const CELL: f64 = 64.0;
const FONT: f64 = 13.0;
/// Average glyph advance as a fraction of the font size.
const ADVANCE: f64 = 0.62;
const MARGIN_LEFT: f64 = 96.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const X_LABEL: &str = "p_target (%)";
const Y_LABEL: &str = "p_source (%)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn intersects(&self, o: &BBox) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    fn contains(&self, o: &BBox) -> bool {
        o.x >= self.x && o.y >= self.y && o.x + o.w <= self.x + self.w && o.y + o.h <= self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextRole {
    Title,
    AxisLabel,
    TickLabel,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextBox {
    pub role: TextRole,
    pub text: String,
    pub bbox: BBox,
    /// Text rotation in degrees (axis labels on the vertical axis).
    pub rotation: f64,
}

fn text_box(role: TextRole, text: String, cx: f64, cy: f64, size: f64, vertical: bool) -> TextBox {
    let len = text.chars().count() as f64 * size * ADVANCE;
    let (w, h) = if vertical { (size, len) } else { (len, size) };
    TextBox {
        role,
        text,
        bbox: BBox {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        },
        rotation: if vertical { -90.0 } else { 0.0 },
    }
}

/// Geometry of one heatmap: plot area, cells (row-major) and every text item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapLayout {
    pub width: f64,
    pub height: f64,
    pub plot: BBox,
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<BBox>,
    pub texts: Vec<TextBox>,
}

fn level_label(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{p:.0}")
    } else {
        format!("{p}")
    }
}

impl HeatmapLayout {
    /// Rows follow the source levels top to bottom, columns the target
    /// levels left to right.
    pub fn new(title: &str, p_source: &[f64], p_target: &[f64], annotations: &[Vec<String>]) -> Self {
        let (rows, cols) = (p_source.len(), p_target.len());
        let text_len = |t: &str, size: f64| t.chars().count() as f64 * size * ADVANCE;
        let (plot_w, plot_h) = (cols as f64 * CELL, rows as f64 * CELL);
        // small grids: pad so the axis labels and the title still fit
        let pad_v = ((text_len(Y_LABEL, FONT) + 8.0 - plot_h) / 2.0).max(0.0);
        let plot = BBox {
            x: MARGIN_LEFT,
            y: MARGIN_TOP + pad_v,
            w: plot_w,
            h: plot_h,
        };
        let width = (MARGIN_LEFT + plot_w + MARGIN_RIGHT)
            .max(text_len(title, FONT + 2.0) + 2.0 * MARGIN_RIGHT)
            .max(MARGIN_LEFT + (plot_w + text_len(X_LABEL, FONT)) / 2.0 + MARGIN_RIGHT);
        let height = MARGIN_TOP + 2.0 * pad_v + plot_h + MARGIN_BOTTOM;
        let mut cells = Vec::with_capacity(rows * cols);
        let mut texts = vec![text_box(TextRole::Title, title.to_string(), width / 2.0, MARGIN_TOP / 2.0, FONT + 2.0, false)];
        for i in 0..rows {
            for j in 0..cols {
                let b = BBox {
                    x: plot.x + j as f64 * CELL,
                    y: plot.y + i as f64 * CELL,
                    w: CELL,
                    h: CELL,
                };
                cells.push(b);
                if let Some(a) = annotations.get(i).and_then(|r| r.get(j)) {
                    texts.push(text_box(TextRole::Annotation, a.clone(), b.x + CELL / 2.0, b.y + CELL / 2.0, FONT, false));
                }
            }
        }
        for (j, &p) in p_target.iter().enumerate() {
            let cx = plot.x + (j as f64 + 0.5) * CELL;
            texts.push(text_box(TextRole::TickLabel, level_label(p), cx, plot.y + plot.h + 14.0, FONT, false));
        }
        for (i, &p) in p_source.iter().enumerate() {
            let cy = plot.y + (i as f64 + 0.5) * CELL;
            let label = level_label(p);
            let w = label.chars().count() as f64 * FONT * ADVANCE;
            texts.push(text_box(TextRole::TickLabel, label, plot.x - 8.0 - w / 2.0, cy, FONT, false));
        }
        texts.push(text_box(
            TextRole::AxisLabel,
            X_LABEL.into(),
            plot.x + plot.w / 2.0,
            plot.y + plot.h + 42.0,
            FONT,
            false,
        ));
        texts.push(text_box(
            TextRole::AxisLabel,
            Y_LABEL.into(),
            24.0,
            plot.y + plot.h / 2.0,
            FONT,
            true,
        ));
        Self {
            width,
            height,
            plot,
            rows,
            cols,
            cells,
            texts,
        }
    }

    /// Pairs of text items that overlap, plus texts outside the canvas
    /// (reported as `(i, i)`), and non-annotation texts inside the plot.
    pub fn collisions(&self) -> Vec<(usize, usize)> {
        let canvas = BBox {
            x: 0.0,
            y: 0.0,
            w: self.width,
            h: self.height,
        };
        let mut out = Vec::new();
        for (i, a) in self.texts.iter().enumerate() {
            if !canvas.contains(&a.bbox) {
                out.push((i, i));
            }
            if a.role != TextRole::Annotation && a.bbox.intersects(&self.plot) {
                out.push((i, i));
            }
            for (j, b) in self.texts.iter().enumerate().skip(i + 1) {
                if a.bbox.intersects(&b.bbox) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|k| a[k] + (b[k] - a[k]) * t)
}

fn hex(c: [f64; 3]) -> String {
    let b = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", b(c[0]), b(c[1]), b(c[2]))
}

/// Sequential map for accuracies in `[0, 1]`.
fn sequential(v: f64) -> String {
    const STOPS: [[f64; 3]; 3] = [[0.267, 0.005, 0.329], [0.128, 0.567, 0.551], [0.993, 0.906, 0.144]];
    let t = v.clamp(0.0, 1.0) * 2.0;
    let k = (t.floor() as usize).min(1);
    hex(lerp(STOPS[k], STOPS[k + 1], t - k as f64))
}

/// Diverging map, white at zero, saturated at `+-scale`.
fn diverging(v: f64, scale: f64) -> String {
    let t = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let white = [1.0, 1.0, 1.0];
    if t >= 0.0 {
        hex(lerp(white, [0.70, 0.09, 0.17], t))
    } else {
        hex(lerp(white, [0.13, 0.40, 0.67], -t))
    }
}

fn luminance(hex: &str) -> f64 {
    let c = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).unwrap_or(0) as f64 / 255.0;
    0.299 * c(1) + 0.587 * c(3) + 0.114 * c(5)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a layout with one fill color per cell.
pub fn render_svg(layout: &HeatmapLayout, fills: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
        w = layout.width,
        h = layout.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (b, fill) in layout.cells.iter().zip(fills) {
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" stroke="white"/>"#,
            b.x, b.y, b.w, b.h
        );
    }
    let mut cell_of_annotation = 0;
    for t in &layout.texts {
        let cx = t.bbox.x + t.bbox.w / 2.0;
        let cy = t.bbox.y + t.bbox.h / 2.0;
        let size = if t.role == TextRole::Title { FONT + 2.0 } else { FONT };
        let color = if t.role == TextRole::Annotation {
            let fill = fills.get(cell_of_annotation).map(String::as_str).unwrap_or("#ffffff");
            cell_of_annotation += 1;
            if luminance(fill) < 0.5 {
                "white"
            } else {
                "black"
            }
        } else {
            "black"
        };
        let rotate = if t.rotation != 0.0 {
            format!(r#" transform="rotate({} {cx} {cy})""#, t.rotation)
        } else {
            String::new()
        };
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{cy}" font-size="{size}" fill="{color}" text-anchor="middle" dominant-baseline="central"{rotate}>{}</text>"#,
            escape(&t.text)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Layout metadata of the three images written by [`emit_heatmap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSet {
    pub naive: HeatmapLayout,
    pub zdda3: HeatmapLayout,
    pub diff: HeatmapLayout,
    /// Cell values of the difference image, row-major, as drawn.
    pub diff_values: Vec<f64>,
}

fn percent_cells(g: &[Vec<f64>]) -> Vec<Vec<String>> {
    g.iter().map(|r| r.iter().map(|v| format!("{:.1}", v * 100.0)).collect()).collect()
}

/// Builds the three layouts of a grid.
pub fn heatmap_set(grid: &NoiseGridResult) -> Result<HeatmapSet> {
    grid.check_complete()?;
    let (ps, pt) = (&grid.p_source_levels, &grid.p_target_levels);
    let model = serde_json::to_value(grid.noise_model)?;
    let model = model.as_str().unwrap_or("noise").to_string();
    let diff_cells: Vec<Vec<String>> = grid
        .diff
        .iter()
        .map(|r| r.iter().map(|v| format!("{:+.1}", v * 100.0)).collect())
        .collect();
    Ok(HeatmapSet {
        naive: HeatmapLayout::new(&format!("naive fusion, {model}"), ps, pt, &percent_cells(&grid.accuracy[NAIVE])),
        zdda3: HeatmapLayout::new(&format!("ZDDA3, {model}"), ps, pt, &percent_cells(&grid.accuracy[ZDDA3])),
        diff: HeatmapLayout::new(&format!("ZDDA3 - naive, {model}"), ps, pt, &diff_cells),
        diff_values: grid.diff.iter().flatten().copied().collect(),
    })
}

/// Writes `<tag>_naive.svg`, `<tag>_zdda3.svg`, `<tag>_diff.svg` and
/// `<tag>_layout.json` into `dir`. Accuracy annotations are percentages.
pub fn emit_heatmap(grid: &NoiseGridResult, dir: &Path, tag: &str) -> Result<Vec<PathBuf>> {
    let set = heatmap_set(grid)?;
    for (name, l) in [("naive", &set.naive), ("zdda3", &set.zdda3), ("diff", &set.diff)] {
        let c = l.collisions();
        if !c.is_empty() {
            return Err(ZddaError::Consistency(format!("{name} heatmap has overlapping text: {c:?}")));
        }
    }
    fs::create_dir_all(dir).map_err(|e| ZddaError::io(dir, e))?;
    let seq = |g: &Vec<Vec<f64>>| g.iter().flatten().map(|&v| sequential(v)).collect::<Vec<_>>();
    let scale = set.diff_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let div: Vec<String> = set.diff_values.iter().map(|&v| diverging(v, scale)).collect();
    let mut written = Vec::new();
    for (name, layout, fills) in [
        ("naive", &set.naive, seq(&grid.accuracy[NAIVE])),
        ("zdda3", &set.zdda3, seq(&grid.accuracy[ZDDA3])),
        ("diff", &set.diff, div),
    ] {
        let path = dir.join(format!("{tag}_{name}.svg"));
        fs::write(&path, render_svg(layout, &fills)).map_err(|e| ZddaError::io(&path, e))?;
        written.push(path);
    }
    let path = dir.join(format!("{tag}_layout.json"));
    fs::write(&path, serde_json::to_string_pretty(&set)?).map_err(|e| ZddaError::io(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors_are_in_range() {
        assert_eq!(sequential(0.0), "#440154");
        assert_eq!(diverging(0.0, 1.0), "#ffffff");
        assert_eq!(diverging(0.3, 0.0), "#ffffff");
        assert!(luminance(&sequential(1.0)) > 0.5);
    }

    #[test]
    fn fractional_levels_keep_decimals() {
        assert_eq!(level_label(40.0), "40");
        assert_eq!(level_label(12.5), "12.5");
    }
}
