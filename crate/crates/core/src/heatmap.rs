//! Co-clustered heatmap of selected covariates: each covariate is scaled to
//! mean 0 and sd 1, samples and covariates are ordered by agglomerative
//! clustering, and values are drawn on a diverging colour scale.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::plot::escape;
use kodama::Method;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// Colour scale bounds in standardised units.
pub const COLOR_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Complete,
    Average,
    Single,
}

impl Linkage {
    fn method(self) -> Method {
        match self {
            Linkage::Complete => Method::Complete,
            Linkage::Average => Method::Average,
            Linkage::Single => Method::Single,
        }
    }
}

impl std::str::FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            "single" => Ok(Linkage::Single),
            other => Err(Error::InvalidArgument(format!("unknown linkage {other:?} (complete|average|single)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeatmapSpec {
    /// Selected covariates (rows) by samples (columns), standardised per row.
    pub values: DMatrix<f64>,
    pub covariate_names: Vec<String>,
    pub sample_labels: Vec<String>,
    /// Row display order, a permutation of `0..rows`.
    pub row_order: Vec<usize>,
    pub col_order: Vec<usize>,
    pub color_limits: (f64, f64),
}

/// Leaf order of an agglomerative clustering of the rows of `points`; the
/// subtree holding the smaller original index is drawn first.
pub fn leaf_order(points: &DMatrix<f64>, linkage: Linkage) -> Vec<usize> {
    let n = points.nrows();
    if n <= 1 {
        return (0..n).collect();
    }
    let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            condensed.push((points.row(i) - points.row(j)).norm());
        }
    }
    let dend = kodama::linkage(&mut condensed, n, linkage.method());
    let steps = dend.steps();
    // min leaf and children of every internal node
    let mut min_leaf: Vec<usize> = (0..n).collect();
    let mut children = Vec::with_capacity(steps.len());
    for s in steps {
        let m = min_leaf[s.cluster1].min(min_leaf[s.cluster2]);
        min_leaf.push(m);
        children.push((s.cluster1, s.cluster2));
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![n + steps.len() - 1];
    while let Some(node) = stack.pop() {
        if node < n {
            order.push(node);
            continue;
        }
        let (a, b) = children[node - n];
        let (first, second) = if min_leaf[a] <= min_leaf[b] { (a, b) } else { (b, a) };
        stack.push(second);
        stack.push(first);
    }
    order
}

pub fn cocluster_heatmap(d: &Dataset, selected: &[usize], labels: &[String], linkage: Linkage) -> Result<HeatmapSpec> {
    if selected.is_empty() {
        return Err(Error::InvalidArgument("heatmap needs at least one selected covariate".into()));
    }
    let n = d.n();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: format!("{n} sample labels"), found: labels.len().to_string() });
    }
    if let Some(&bad) = selected.iter().find(|&&j| j >= d.p()) {
        return Err(Error::InvalidArgument(format!("selected covariate index {bad} out of range")));
    }
    let mut values = DMatrix::zeros(selected.len(), n);
    for (r, &j) in selected.iter().enumerate() {
        let c = d.matrix.column(j);
        let m = c.mean();
        let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        for i in 0..n {
            values[(r, i)] = if sd > 0.0 { (c[i] - m) / sd } else { 0.0 };
        }
    }
    let row_order = leaf_order(&values, linkage);
    let col_order = leaf_order(&values.transpose(), linkage);
    Ok(HeatmapSpec {
        values,
        covariate_names: selected.iter().map(|&j| d.covariate_names[j].clone()).collect(),
        sample_labels: labels.to_vec(),
        row_order,
        col_order,
        color_limits: (-COLOR_LIMIT, COLOR_LIMIT),
    })
}

/// Blue at the lower limit, white at 0, red at the upper limit.
pub fn diverging_color(v: f64, limit: f64) -> String {
    let t = (v / limit).clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let s = 1.0 + t;
        (s, s, 1.0)
    } else {
        (1.0, 1.0 - t, 1.0 - t)
    };
    let c = |x: f64| (x * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(r), c(g), c(b))
}

impl HeatmapSpec {
    pub fn to_svg(&self, title: &str) -> String {
        let (rows, cols) = self.values.shape();
        let cell_w = (720.0 / cols as f64).clamp(4.0, 24.0);
        let cell_h = (720.0 / rows as f64).clamp(3.0, 18.0);
        let left = 20.0;
        let top = 40.0;
        let label_w = 140.0;
        let bottom = 110.0;
        let width = left + cols as f64 * cell_w + label_w + 80.0;
        let height = top + rows as f64 * cell_h + bottom;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="10">"#
        );
        let _ = writeln!(s, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{left}" y="22" font-size="14">{}</text>"#, escape(title));
        let limit = self.color_limits.1;
        for (ri, &r) in self.row_order.iter().enumerate() {
            let y = top + ri as f64 * cell_h;
            for (ci, &c) in self.col_order.iter().enumerate() {
                let x = left + ci as f64 * cell_w;
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.1}" y="{y:.1}" width="{cell_w:.1}" height="{cell_h:.1}" fill="{}"/>"#,
                    diverging_color(self.values[(r, c)], limit)
                );
            }
            if cell_h >= 6.0 {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" font-size="{:.1}">{}</text>"#,
                    left + cols as f64 * cell_w + 4.0,
                    y + cell_h * 0.8,
                    (cell_h - 1.0).min(10.0),
                    escape(&self.covariate_names[r])
                );
            }
        }
        let base = top + rows as f64 * cell_h + 6.0;
        if cell_w >= 6.0 {
            for (ci, &c) in self.col_order.iter().enumerate() {
                let x = left + (ci as f64 + 0.7) * cell_w;
                let _ = writeln!(
                    s,
                    r#"<text x="{x:.1}" y="{base:.1}" font-size="{:.1}" transform="rotate(90 {x:.1} {base:.1})">{}</text>"#,
                    (cell_w - 1.0).min(10.0),
                    escape(&self.sample_labels[c])
                );
            }
        }
        // colour key
        let kx = left + cols as f64 * cell_w + label_w;
        for k in 0..=60 {
            let v = limit - 2.0 * limit * k as f64 / 60.0;
            let _ = writeln!(s, r#"<rect x="{kx:.1}" y="{:.1}" width="14" height="2" fill="{}"/>"#, top + 2.0 * k as f64, diverging_color(v, limit));
        }
        for (v, dy) in [(limit, 0.0), (0.0, 60.0), (-limit, 120.0)] {
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, kx + 18.0, top + dy + 4.0, v);
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Response, ResponseKind};

    fn dataset(m: DMatrix<f64>) -> Dataset {
        let (n, p) = m.shape();
        let y = Response::new("y", ResponseKind::Binary, (0..n).map(|i| (i % 2) as f64).collect()).unwrap();
        Dataset::new(m, (0..p).map(|j| format!("c{j}")).collect(), y, (0..n).map(|i| format!("s{i}")).collect()).unwrap()
    }

    fn is_perm(v: &[usize], n: usize) -> bool {
        let mut s = v.to_vec();
        s.sort_unstable();
        s == (0..n).collect::<Vec<_>>()
    }

    #[test]
    fn identical_samples_are_adjacent() {
        let mut m = DMatrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * i as f64);
        let r = m.row(1).clone_owned();
        m.set_row(4, &r);
        let order = leaf_order(&m, Linkage::Complete);
        assert!(is_perm(&order, 6));
        let a = order.iter().position(|&v| v == 1).unwrap();
        let b = order.iter().position(|&v| v == 4).unwrap();
        assert_eq!(a.abs_diff(b), 1);
    }

    #[test]
    fn block_toy_gives_block_order() {
        // samples 0,2,4 high on covariates 0,1,2; samples 1,3,5 high on 3,4,5
        let m = DMatrix::from_fn(6, 6, |i, j| {
            let high = (i % 2 == 0) == (j < 3);
            (if high { 2.0 } else { -2.0 }) + 0.01 * ((i * 5 + j * 3) % 7) as f64
        });
        let d = dataset(m);
        let labels: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let h = cocluster_heatmap(&d, &[0, 1, 2, 3, 4, 5], &labels, Linkage::Complete).unwrap();
        let first_half: Vec<bool> = h.col_order[..3].iter().map(|&i| i % 2 == 0).collect();
        assert!(first_half.iter().all(|&b| b == first_half[0]));
        let rows: Vec<bool> = h.row_order[..3].iter().map(|&r| r < 3).collect();
        assert!(rows.iter().all(|&b| b == rows[0]));
    }

    #[test]
    fn single_covariate_and_rows_standardised() {
        let d = dataset(DMatrix::from_fn(5, 3, |i, j| (i * i + j) as f64));
        let labels: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let h = cocluster_heatmap(&d, &[2], &labels, Linkage::Complete).unwrap();
        assert_eq!(h.row_order, vec![0]);
        assert!(h.values.row(0).mean().abs() < 1e-12);
        let var = h.values.row(0).iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-12);
        assert!(cocluster_heatmap(&d, &[], &labels, Linkage::Complete).is_err());
        assert_eq!(h.to_svg("t"), h.to_svg("t"));
    }

    #[test]
    fn colours_span_blue_white_red() {
        assert_eq!(diverging_color(-5.0, 3.0), "#0000ff");
        assert_eq!(diverging_color(0.0, 3.0), "#ffffff");
        assert_eq!(diverging_color(3.0, 3.0), "#ff0000");
    }
}
