//! Splicing per-view feature vectors into the sample × feature matrix.

use std::io::Write;

use crate::convnet::FeatureVector;
use crate::error::{Error, Result};
use crate::imageio::ViewKind;

/// Column segments of a spliced row: `(view, segment length)` in view order.
pub type ViewLayout = Vec<(ViewKind, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct SplicedRow {
    pub values: Vec<f64>,
    pub label: usize,
    pub layout: ViewLayout,
}

/// Concatenates one sample's view vectors in the order given by `views`.
///
/// `sample` names the sample in the error raised when a configured view is
/// missing from `vectors`.
pub fn splice(
    vectors: &[FeatureVector],
    views: &[ViewKind],
    label: usize,
    sample: &str,
) -> Result<SplicedRow> {
    let mut values = Vec::new();
    let mut layout = Vec::with_capacity(views.len());
    for &view in views {
        let v = vectors
            .iter()
            .find(|f| f.view == view)
            .ok_or_else(|| Error::Fusion {
                sample: sample.to_owned(),
                view: view.name().to_owned(),
                expected: None,
            })?;
        values.extend_from_slice(&v.values);
        layout.push((view, v.len()));
    }
    Ok(SplicedRow {
        values,
        label,
        layout,
    })
}

/// Row-major `rows × cols` matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
    layout: ViewLayout,
}

impl FeatureMatrix {
    /// Builds a matrix from raw row-major data with a single anonymous segment.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let layout = vec![(ViewKind::Gray, cols)];
        Self::build(
            rows.iter().map(|r| r.as_slice()),
            labels,
            layout,
            rows.len(),
        )
    }

    fn build<'a>(
        rows: impl Iterator<Item = &'a [f64]>,
        labels: Vec<usize>,
        layout: ViewLayout,
        m: usize,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::Shape("feature matrix needs at least one row".into()));
        }
        if labels.len() != m {
            return Err(Error::Shape(format!(
                "{} labels for {m} rows",
                labels.len()
            )));
        }
        let cols: usize = layout.iter().map(|(_, n)| n).sum();
        if cols == 0 {
            return Err(Error::Shape(
                "feature matrix needs at least one column".into(),
            ));
        }
        let mut data = Vec::with_capacity(m * cols);
        for (i, r) in rows.enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} features, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: m,
            cols,
            data,
            labels,
            layout,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn layout(&self) -> &ViewLayout {
        &self.layout
    }

    /// The slice of row `i` belonging to `view`, if present.
    pub fn segment(&self, i: usize, view: ViewKind) -> Option<&[f64]> {
        let mut start = 0;
        for &(v, len) in &self.layout {
            if v == view {
                return Some(&self.row(i)[start..start + len]);
            }
            start += len;
        }
        None
    }

    /// CSV with header `label,f0,f1,...`; values use shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = String::from("label");
        for j in 0..self.cols {
            header.push_str(&format!(",f{j}"));
        }
        writeln!(out, "{header}")?;
        for i in 0..self.rows {
            let mut line = self.labels[i].to_string();
            for v in self.row(i) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Stacks spliced rows, preserving order. Every row must share one layout.
pub fn assemble(rows: &[SplicedRow]) -> Result<FeatureMatrix> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Shape("feature matrix needs at least one row".into()))?;
    if let Some((i, r)) = rows
        .iter()
        .enumerate()
        .find(|(_, r)| r.layout != first.layout)
    {
        return Err(Error::Shape(format!(
            "row {i} has layout {:?}, expected {:?}",
            r.layout, first.layout
        )));
    }
    FeatureMatrix::build(
        rows.iter().map(|r| r.values.as_slice()),
        rows.iter().map(|r| r.label).collect(),
        first.layout.clone(),
        rows.len(),
    )
}
