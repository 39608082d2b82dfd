use std::fmt::Write as _;

use serde_json::json;

/// Per-class recall, its unweighted mean, and the confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub per_class_accuracy: Vec<f64>,
    /// Mean over classes that have at least one test sample.
    pub mean_class_accuracy: f64,
    pub pooled_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn from_predictions(classes: &[String], truth: &[usize], predicted: &[usize]) -> Self {
        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let per_class_accuracy: Vec<f64> = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: usize = row.iter().sum();
                if total == 0 {
                    0.0
                } else {
                    row[i] as f64 / total as f64
                }
            })
            .collect();
        let present: Vec<f64> = confusion
            .iter()
            .zip(&per_class_accuracy)
            .filter(|(row, _)| row.iter().sum::<usize>() > 0)
            .map(|(_, &a)| a)
            .collect();
        let mean_class_accuracy = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
        let pooled_accuracy = if truth.is_empty() {
            0.0
        } else {
            correct as f64 / truth.len() as f64
        };
        Self {
            classes: classes.to_vec(),
            per_class_accuracy,
            mean_class_accuracy,
            pooled_accuracy,
            confusion,
        }
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn to_json(&self) -> String {
        let value = json!({
            "classes": self.classes,
            "per_class_accuracy": self.per_class_accuracy,
            "mean_class_accuracy": self.mean_class_accuracy,
            "pooled_accuracy": self.pooled_accuracy,
            "confusion": self.confusion,
        });
        let mut s = serde_json::to_string_pretty(&value).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = self
            .classes
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(5);
        for (name, acc) in self.classes.iter().zip(&self.per_class_accuracy) {
            let _ = writeln!(s, "{name:<width$}  accuracy {acc:.6}");
        }
        let _ = writeln!(s, "mean_class_accuracy: {:.6}", self.mean_class_accuracy);
        let _ = writeln!(s, "pooled_accuracy: {:.6}", self.pooled_accuracy);
        let _ = writeln!(s, "confusion (rows = true class, columns = predicted):");
        for (name, row) in self.classes.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
            let _ = writeln!(s, "{name:<width$} {}", cells.join(""));
        }
        s
    }
}
