//! Named C^2 test functions with closed-form derivatives, used by the
//! martingale diagnostics and the scaling experiments.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TestFunction {
    /// Constant 1.
    One,
    /// sin x.
    SinX,
    /// exp(-x^2).
    GaussExp,
    /// Smoothly clipped square: `s^2 (1 - exp(-x^2/s^2))`; behaves like
    /// x^2 near the origin and saturates at s^2.
    ClippedSquare { scale: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::One => 1.0,
            TestFunction::SinX => x.sin(),
            TestFunction::GaussExp => (-x * x).exp(),
            TestFunction::ClippedSquare { scale } => {
                scale * scale * (1.0 - (-x * x / (scale * scale)).exp())
            }
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            TestFunction::One => 0.0,
            TestFunction::SinX => x.cos(),
            TestFunction::GaussExp => -2.0 * x * (-x * x).exp(),
            TestFunction::ClippedSquare { scale } => 2.0 * x * (-x * x / (scale * scale)).exp(),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            TestFunction::One => 0.0,
            TestFunction::SinX => -x.sin(),
            TestFunction::GaussExp => (4.0 * x * x - 2.0) * (-x * x).exp(),
            TestFunction::ClippedSquare { scale } => {
                let s2 = scale * scale;
                (2.0 - 4.0 * x * x / s2) * (-x * x / s2).exp()
            }
        }
    }

    /// Short identifier for table columns.
    pub fn id(&self) -> String {
        match self {
            TestFunction::One => "one".into(),
            TestFunction::SinX => "sin".into(),
            TestFunction::GaussExp => "gauss".into(),
            TestFunction::ClippedSquare { scale } => format!("sq{scale}"),
        }
    }
}
