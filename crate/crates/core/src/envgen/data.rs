use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmath::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    /// Scalar labels in {-1, +1}.
    BinaryPm1,
    /// One indicator column per class.
    BinaryOneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    /// Held-out draws from the training distribution.
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Latent causal (`zc`) and environment (`ze`) variables behind SEM samples,
/// one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Latents {
    pub zc: Matrix,
    pub ze: Matrix,
}

/// Samples of one environment: `x` is `n x d_x`, `y` is `n x d_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentData {
    pub x: Matrix,
    pub y: Matrix,
    pub task: Task,
    /// Columns of `x` holding spurious features. Cleared by scrambling.
    pub spurious: Option<Vec<usize>>,
    pub latents: Option<Latents>,
}

impl EnvironmentData {
    pub fn new(x: Matrix, y: Matrix, task: Task) -> Result<Self> {
        let d = Self {
            x,
            y,
            task,
            spurious: None,
            latents: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_spurious(mut self, cols: Vec<usize>) -> Result<Self> {
        if let Some(bad) = cols.iter().find(|&&c| c >= self.x.ncols()) {
            return Err(Error::Spec(format!("spurious column {bad} out of range")));
        }
        self.spurious = Some(cols);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn d_y(&self) -> usize {
        self.y.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() == 0 {
            return Err(Error::EmptyEnvironment);
        }
        if self.y.nrows() != self.x.nrows() {
            return Err(Error::Shape(format!(
                "x has {} rows, y has {}",
                self.x.nrows(),
                self.y.nrows()
            )));
        }
        match self.task {
            Task::Regression => {}
            Task::BinaryPm1 => {
                if self.y.ncols() != 1 || self.y.iter().any(|&v| v != 1.0 && v != -1.0) {
                    return Err(Error::Spec("binary_pm1 labels must be a single +-1 column".into()));
                }
            }
            Task::BinaryOneHot => {
                let ok = self
                    .y
                    .row_iter()
                    .all(|r| r.iter().all(|&v| v == 0.0 || v == 1.0) && r.sum() == 1.0);
                if !ok {
                    return Err(Error::Spec("binary_onehot rows must be one-hot".into()));
                }
            }
        }
        Ok(())
    }

    /// `+-1` labels to indicator columns `[1{y=+1}, 1{y=-1}]`.
    pub fn to_onehot(&self) -> Result<Self> {
        if self.task != Task::BinaryPm1 {
            return Err(Error::Spec("one-hot conversion needs binary_pm1 labels".into()));
        }
        let y = Matrix::from_fn(self.n(), 2, |i, j| {
            let pos = self.y[(i, 0)] > 0.0;
            if (j == 0) == pos {
                1.0
            } else {
                0.0
            }
        });
        Ok(Self {
            y,
            task: Task::BinaryOneHot,
            ..self.clone()
        })
    }

    /// Stacks several environments into one (used for pooled fits).
    pub fn concat(parts: &[&EnvironmentData]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Precondition("nothing to concatenate".into()))?;
        let n: usize = parts.iter().map(|p| p.n()).sum();
        let (dx, dy) = (first.d_x(), first.d_y());
        if parts.iter().any(|p| p.d_x() != dx || p.d_y() != dy) {
            return Err(Error::Shape("environments disagree on dimensions".into()));
        }
        let mut x = Matrix::zeros(n, dx);
        let mut y = Matrix::zeros(n, dy);
        let mut row = 0;
        for p in parts {
            x.rows_mut(row, p.n()).copy_from(&p.x);
            y.rows_mut(row, p.n()).copy_from(&p.y);
            row += p.n();
        }
        Ok(Self {
            x,
            y,
            task: first.task,
            spurious: first.spurious.clone(),
            latents: None,
        })
    }
}
