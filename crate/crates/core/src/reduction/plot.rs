use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::diffvec::{DiffVector, Direction};
use crate::error::{Error, Result};

/// One row of a points file.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub language: String,
    pub deprel: String,
    pub direction: Direction,
    pub head_upos: String,
    pub dep_upos: String,
    pub sentence: usize,
    pub head_idx: usize,
    pub dep_idx: usize,
}

impl PointRecord {
    /// Pairs 2-D coordinates with the metadata of the vectors they came from.
    pub fn from_projection(points: &DMatrix<f64>, vectors: &[DiffVector]) -> Result<Vec<Self>> {
        if points.nrows() != vectors.len() || points.ncols() != 2 {
            return Err(Error::Dimension(format!(
                "{}x{} points for {} vectors",
                points.nrows(),
                points.ncols(),
                vectors.len()
            )));
        }
        Ok(vectors
            .iter()
            .enumerate()
            .map(|(i, d)| PointRecord {
                x: points[(i, 0)],
                y: points[(i, 1)],
                language: d.language.clone(),
                deprel: d.deprel.clone(),
                direction: d.direction,
                head_upos: d.head_upos.clone(),
                dep_upos: d.dep_upos.clone(),
                sentence: d.sentence,
                head_idx: d.head_idx,
                dep_idx: d.dep_idx,
            })
            .collect())
    }
}

const HEADER: &str = "x\ty\tlanguage\tdeprel\tdirection\thead_upos\tdep_upos\tsentence\thead_idx\tdep_idx";

pub fn points_tsv(records: &[PointRecord]) -> String {
    let mut out = format!("{HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{:?}\t{:?}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.x,
            r.y,
            r.language,
            r.deprel,
            r.direction,
            r.head_upos,
            r.dep_upos,
            r.sentence,
            r.head_idx,
            r.dep_idx
        );
    }
    out
}

pub fn read_points_tsv(text: &str) -> Result<Vec<PointRecord>> {
    let mut lines = text.lines().filter(|l| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some(h) if h == HEADER => {}
        _ => return Err(Error::Format("missing points header".into())),
    }
    let bad = |what: &str, v: &str| Error::Format(format!("bad {what} {v:?}"));
    lines
        .map(|line| {
            let c: Vec<&str> = line.split('\t').collect();
            if c.len() != 10 {
                return Err(Error::Format(format!("points row has {} columns", c.len())));
            }
            Ok(PointRecord {
                x: c[0].parse().map_err(|_| bad("x", c[0]))?,
                y: c[1].parse().map_err(|_| bad("y", c[1]))?,
                language: c[2].to_string(),
                deprel: c[3].to_string(),
                direction: c[4].parse()?,
                head_upos: c[5].to_string(),
                dep_upos: c[6].to_string(),
                sentence: c[7].parse().map_err(|_| bad("sentence", c[7]))?,
                head_idx: c[8].parse().map_err(|_| bad("head_idx", c[8]))?,
                dep_idx: c[9].parse().map_err(|_| bad("dep_idx", c[9]))?,
            })
        })
        .collect()
}

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#ad494a",
];

const SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;
const LEGEND: f64 = 160.0;

fn marker(out: &mut String, shape: usize, x: f64, y: f64, color: &str) {
    let r = 3.0;
    match shape % 4 {
        0 => {
            let _ = write!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{color}"/>"#);
        }
        1 => {
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}" fill="{color}"/>"#,
                x - r,
                y - r,
                2.0 * r,
                2.0 * r
            );
        }
        2 => {
            let _ = write!(
                out,
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
                x,
                y - r,
                x - r,
                y + r,
                x + r,
                y + r
            );
        }
        _ => {
            let _ = write!(
                out,
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
                x,
                y - r,
                x + r,
                y,
                x,
                y + r,
                x - r,
                y
            );
        }
    }
    out.push('\n');
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static scatter plot: colour by relation, marker shape by language.
pub fn render_svg(records: &[PointRecord]) -> String {
    let mut colors: BTreeMap<&str, usize> = BTreeMap::new();
    let mut shapes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        let next = colors.len();
        colors.entry(&r.deprel).or_insert(next);
        let next = shapes.len();
        shapes.entry(&r.language).or_insert(next);
    }
    // Stable assignment independent of record order.
    for (i, v) in colors.values_mut().enumerate() {
        *v = i;
    }
    for (i, v) in shapes.values_mut().enumerate() {
        *v = i;
    }

    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for r in records {
        x0 = x0.min(r.x);
        x1 = x1.max(r.x);
        y0 = y0.min(r.y);
        y1 = y1.max(r.y);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));
    let plot = SIZE - 2.0 * MARGIN;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{SIZE}" viewBox="0 0 {} {SIZE}">"#,
        SIZE + LEGEND,
        SIZE + LEGEND
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for r in records {
        let px = MARGIN + (r.x - x0) / sx * plot;
        let py = SIZE - MARGIN - (r.y - y0) / sy * plot;
        let color = PALETTE[colors[r.deprel.as_str()] % PALETTE.len()];
        marker(&mut out, shapes[r.language.as_str()], px, py, color);
    }
    let mut ly = MARGIN;
    for (label, &c) in &colors {
        marker(&mut out, 0, SIZE + 10.0, ly - 4.0, PALETTE[c % PALETTE.len()]);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-size="12" font-family="sans-serif">{}</text>"#,
            SIZE + 20.0,
            escape(label)
        );
        ly += 16.0;
    }
    ly += 8.0;
    for (lang, &s) in &shapes {
        marker(&mut out, s, SIZE + 10.0, ly - 4.0, "#333333");
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-size="12" font-family="sans-serif">{}</text>"#,
            SIZE + 20.0,
            escape(lang)
        );
        ly += 16.0;
    }
    out.push_str("</svg>\n");
    out
}
