use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Labelled examples with cached per-class counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DenseMatrix,
    labels: Vec<usize>,
    class_counts: Vec<usize>,
    name: String,
}

impl Dataset {
    /// Validates that labels match the feature rows and that every class in
    /// `0..num_classes` has at least one example.
    pub fn new(
        features: DenseMatrix,
        labels: Vec<usize>,
        num_classes: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        let class_counts = count_labels(&labels, num_classes)?;
        if let Some(k) = class_counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!("class {k} has no examples")));
        }
        Ok(Self {
            features,
            labels,
            class_counts,
            name: name.into(),
        })
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn is_balanced(&self) -> bool {
        self.class_counts.windows(2).all(|w| w[0] == w[1])
    }

    /// Indices of the examples of each class, in dataset order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    /// Rows at `indices` (in that order) as a new dataset over the same classes.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let features = self.features.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels, self.num_classes(), name)
    }

    pub fn with_features(&self, features: DenseMatrix, name: impl Into<String>) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.num_classes(), name)
    }
}

/// Per-class counts; errors on labels outside `0..num_classes`.
pub fn count_labels(labels: &[usize], num_classes: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        if y >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        counts[y] += 1;
    }
    Ok(counts)
}
