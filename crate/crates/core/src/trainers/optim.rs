use serde::{Deserialize, Serialize};

use crate::linmath::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Gd,
    /// Heavy-ball momentum.
    Momentum,
    /// Adam-style first/second moment scaling.
    Adamlike,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(Self::Gd),
            "momentum" => Ok(Self::Momentum),
            "adamlike" | "adam" => Ok(Self::Adamlike),
            _ => Err(format!("unknown optimizer '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// `eta / sqrt(t)`
    InverseSqrt,
    /// Half-cosine decay from `eta` to 0 over the horizon.
    Cosine,
}

impl std::str::FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "constant" => Ok(Self::Constant),
            "inverse_sqrt" | "inverse-sqrt" => Ok(Self::InverseSqrt),
            "cosine" => Ok(Self::Cosine),
            _ => Err(format!("unknown schedule '{s}'")),
        }
    }
}

impl Schedule {
    /// Rate at step `t` (1-based) of `horizon`.
    pub fn rate(self, base: f64, t: usize, horizon: usize) -> f64 {
        match self {
            Schedule::Constant => base,
            Schedule::InverseSqrt => base / (t as f64).sqrt(),
            Schedule::Cosine => {
                let frac = (t - 1) as f64 / horizon.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

pub const MOMENTUM: f64 = 0.9;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Matrix,
    v: Matrix,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, rows: usize, cols: usize) -> Self {
        Self {
            kind,
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
        }
    }

    /// Parameter increment for direction `g` at rate `lr`.
    pub fn step(&mut self, g: &Matrix, lr: f64) -> Matrix {
        self.t += 1;
        match self.kind {
            OptimizerKind::Gd => g * -lr,
            OptimizerKind::Momentum => {
                self.m = &self.m * MOMENTUM + g;
                &self.m * -lr
            }
            OptimizerKind::Adamlike => {
                self.m = &self.m * ADAM_BETA1 + g * (1.0 - ADAM_BETA1);
                self.v = &self.v * ADAM_BETA2 + g.component_mul(g) * (1.0 - ADAM_BETA2);
                let mc = 1.0 - ADAM_BETA1.powi(self.t);
                let vc = 1.0 - ADAM_BETA2.powi(self.t);
                Matrix::from_fn(g.nrows(), g.ncols(), |i, j| {
                    -lr * (self.m[(i, j)] / mc) / ((self.v[(i, j)] / vc).sqrt() + ADAM_EPS)
                })
            }
        }
    }
}
