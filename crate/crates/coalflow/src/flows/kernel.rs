//! Interaction kernels `h` and their autocorrelations
//! `rho(x) = integral of h(y - x) h(y) dy`, which drive the covariance of
//! interacting Brownian systems. The Gaussian kernel has a closed-form
//! `rho`; compactly supported and user-tabulated kernels get `rho` by
//! quadrature, cached on a fine grid with cubic interpolation.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};

/// Anything usable as an interaction autocorrelation.
pub trait RhoEval: Sync {
    fn rho(&self, x: f64) -> f64;

    /// `rho(0)`, the marginal speed of each particle.
    fn rho0(&self) -> f64;

    /// Smallest `x > 0` with `rho(x) <= rho(0)/2`; `None` when `rho` never
    /// decays (perfectly correlated motion). Euler steps must resolve this
    /// length for the near-contact dynamics to be meaningful.
    fn correlation_halfwidth(&self) -> Option<f64>;

    fn vanishes_at_infinity(&self) -> bool;
}

/// Cached `rho` values on a uniform grid over `[0, max_x]`, evaluated by
/// Catmull-Rom interpolation and even reflection.
#[derive(Debug, Clone)]
pub struct RhoTable {
    pitch: f64,
    max_x: f64,
    values: Vec<f64>,
}

impl RhoTable {
    fn eval(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax >= self.max_x {
            return 0.0;
        }
        let t = ax / self.pitch;
        let i = t.floor() as usize;
        let u = t - i as f64;
        let n = self.values.len();
        let grab = |k: isize| -> f64 {
            if k < 0 {
                // even function: reflect through 0
                self.values[(-k) as usize % n]
            } else if (k as usize) >= n {
                0.0
            } else {
                self.values[k as usize]
            }
        };
        let p0 = grab(i as isize - 1);
        let p1 = grab(i as isize);
        let p2 = grab(i as isize + 1);
        let p3 = grab(i as isize + 2);
        0.5 * (2.0 * p1
            + (p2 - p0) * u
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u * u
            + (3.0 * p1 - p0 - 3.0 * p2 + p3) * u * u * u)
    }
}

#[derive(Debug)]
enum KernelShape {
    /// `h(x) = exp(-x^2 / (2 w^2))`; `rho(x) = w sqrt(pi) exp(-x^2/(4 w^2))`.
    Gaussian { width: f64 },
    /// `h(x) = max(0, 1 - |x|/w)`; `rho` tabulated by quadrature.
    Triangular { halfwidth: f64 },
    /// `h` given on a uniform grid; `rho` tabulated by quadrature.
    Tabulated,
}

/// An interaction kernel together with its (closed-form or cached)
/// autocorrelation.
#[derive(Debug)]
pub struct InteractionKernel {
    shape: KernelShape,
    rho0: f64,
    halfwidth: f64,
    table: Option<RhoTable>,
    out_of_support: AtomicBool,
}

impl Clone for InteractionKernel {
    fn clone(&self) -> Self {
        InteractionKernel {
            shape: match self.shape {
                KernelShape::Gaussian { width } => KernelShape::Gaussian { width },
                KernelShape::Triangular { halfwidth } => KernelShape::Triangular { halfwidth },
                KernelShape::Tabulated => KernelShape::Tabulated,
            },
            rho0: self.rho0,
            halfwidth: self.halfwidth,
            table: self.table.clone(),
            out_of_support: AtomicBool::new(self.out_of_support.load(Ordering::Relaxed)),
        }
    }
}

/// Tabulate `rho(x) = integral h(y - x) h(y) dy` for `h` supported on
/// `[-support, support]`, on a grid over `[0, 2 support]`.
fn tabulate_rho(h: &dyn Fn(f64) -> f64, support: f64, pitch: f64) -> RhoTable {
    let max_x = 2.0 * support;
    let n = (max_x / pitch).ceil() as usize + 1;
    // Simpson quadrature in y over [-support, support + x] intersected
    // with where both factors can be nonzero.
    let quad = |x: f64| -> f64 {
        let lo = -support + x.min(0.0) * 0.0 + (x - support).max(-support);
        let hi = support.min(x + support);
        if hi <= lo {
            return 0.0;
        }
        let m = 2048usize;
        let dy = (hi - lo) / m as f64;
        let mut acc = 0.0;
        for k in 0..=m {
            let y = lo + k as f64 * dy;
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * h(y - x) * h(y);
        }
        acc * dy / 3.0
    };
    let values: Vec<f64> = (0..n).map(|i| quad(i as f64 * pitch)).collect();
    RhoTable {
        pitch,
        max_x,
        values,
    }
}

fn halfwidth_from_table(table: &RhoTable, rho0: f64) -> f64 {
    for (i, &v) in table.values.iter().enumerate() {
        if v <= 0.5 * rho0 {
            return (i as f64 * table.pitch).max(table.pitch);
        }
    }
    table.max_x
}

impl InteractionKernel {
    /// Gaussian bump `h(x) = exp(-x^2/(2 w^2))` with closed-form
    /// autocorrelation `rho(x) = w sqrt(pi) exp(-x^2/(4 w^2))`.
    pub fn gaussian(width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::parameter(format!(
                "gaussian kernel width must be positive, got {width}"
            )));
        }
        Ok(InteractionKernel {
            shape: KernelShape::Gaussian { width },
            rho0: width * PI.sqrt(),
            halfwidth: 2.0 * width * (2.0f64.ln()).sqrt(),
            table: None,
            out_of_support: AtomicBool::new(false),
        })
    }

    /// Standard Gaussian kernel `h(x) = exp(-x^2/2)`, `rho(0) = sqrt(pi)`.
    pub fn standard_gaussian() -> Self {
        InteractionKernel::gaussian(1.0).expect("unit width is valid")
    }

    /// Triangular bump `h(x) = max(0, 1 - |x|/w)`; `rho` is tabulated by
    /// quadrature on a grid with pitch 1e-3 of the support width of `rho`.
    pub fn triangular(halfwidth: f64) -> Result<Self> {
        if !(halfwidth > 0.0) || !halfwidth.is_finite() {
            return Err(Error::parameter(format!(
                "triangular kernel halfwidth must be positive, got {halfwidth}"
            )));
        }
        let w = halfwidth;
        let h = move |x: f64| (1.0 - x.abs() / w).max(0.0);
        let pitch = 4.0 * w * 1e-3;
        let table = tabulate_rho(&h, w, pitch);
        let rho0 = table.values[0];
        let halfwidth = halfwidth_from_table(&table, rho0);
        Ok(InteractionKernel {
            shape: KernelShape::Triangular { halfwidth: w },
            rho0,
            halfwidth,
            table: Some(table),
            out_of_support: AtomicBool::new(false),
        })
    }

    /// User-supplied `h` sampled on a uniform grid over
    /// `[-support, support]`; values outside are treated as zero.
    pub fn tabulated(h_values: &[f64], support: f64) -> Result<Self> {
        if h_values.len() < 4 || !(support > 0.0) {
            return Err(Error::parameter(
                "tabulated kernel needs >= 4 samples and positive support",
            ));
        }
        if h_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("tabulated kernel has non-finite values"));
        }
        let vals = h_values.to_vec();
        let n = vals.len();
        let dx = 2.0 * support / (n - 1) as f64;
        let h = move |x: f64| -> f64 {
            if x < -support || x > support {
                return 0.0;
            }
            let t = (x + support) / dx;
            let i = (t.floor() as usize).min(n - 2);
            let u = t - i as f64;
            vals[i] * (1.0 - u) + vals[i + 1] * u
        };
        let pitch = 4.0 * support * 1e-3;
        let table = tabulate_rho(&h, support, pitch);
        let rho0 = table.values[0];
        if !(rho0 > 0.0) {
            return Err(Error::parameter("tabulated kernel has rho(0) <= 0"));
        }
        let halfwidth = halfwidth_from_table(&table, rho0);
        Ok(InteractionKernel {
            shape: KernelShape::Tabulated,
            rho0,
            halfwidth,
            table: Some(table),
            out_of_support: AtomicBool::new(false),
        })
    }

    /// True if a tabulated kernel was ever queried outside its support
    /// extension (such queries evaluate to 0).
    pub fn out_of_support_queried(&self) -> bool {
        self.out_of_support.load(Ordering::Relaxed)
    }
}

impl RhoEval for InteractionKernel {
    fn rho(&self, x: f64) -> f64 {
        match self.shape {
            KernelShape::Gaussian { width } => {
                width * PI.sqrt() * (-x * x / (4.0 * width * width)).exp()
            }
            KernelShape::Triangular { .. } => {
                let table = self.table.as_ref().expect("triangular kernel has table");
                table.eval(x)
            }
            KernelShape::Tabulated => {
                let table = self.table.as_ref().expect("tabulated kernel has table");
                if x.abs() >= table.max_x {
                    self.out_of_support.store(true, Ordering::Relaxed);
                    return 0.0;
                }
                table.eval(x)
            }
        }
    }

    fn rho0(&self) -> f64 {
        self.rho0
    }

    fn correlation_halfwidth(&self) -> Option<f64> {
        Some(self.halfwidth)
    }

    fn vanishes_at_infinity(&self) -> bool {
        true
    }
}

/// `rho` evaluated at the origin, i.e. the particle speed `integral h^2`.
pub fn rho_eval(kernel: &InteractionKernel, x: f64) -> f64 {
    kernel.rho(x)
}

/// The theta-scaled interaction `rho_theta(x) = rho(theta x)`, the
/// autocorrelation obtained by replacing `h` with
/// `sqrt(theta) h(theta .)`. `rho_theta(0) = rho(0)` for every theta.
#[derive(Debug, Clone)]
pub struct ScaledRho<'a> {
    kernel: &'a InteractionKernel,
    theta: f64,
}

impl<'a> ScaledRho<'a> {
    pub fn theta(&self) -> f64 {
        self.theta
    }
}

pub fn scale_rho(kernel: &InteractionKernel, theta: f64) -> Result<ScaledRho<'_>> {
    if !(theta >= 1.0) || !theta.is_finite() {
        return Err(Error::parameter(format!(
            "scaling parameter must satisfy theta >= 1, got {theta}"
        )));
    }
    Ok(ScaledRho { kernel, theta })
}

impl RhoEval for ScaledRho<'_> {
    fn rho(&self, x: f64) -> f64 {
        self.kernel.rho(self.theta * x)
    }

    fn rho0(&self) -> f64 {
        self.kernel.rho0()
    }

    fn correlation_halfwidth(&self) -> Option<f64> {
        self.kernel.correlation_halfwidth().map(|w| w / self.theta)
    }

    fn vanishes_at_infinity(&self) -> bool {
        self.kernel.vanishes_at_infinity()
    }
}

/// A constant autocorrelation: perfectly correlated motion. Useful as the
/// degenerate rank-1 case in tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstantRho(pub f64);

impl RhoEval for ConstantRho {
    fn rho(&self, _x: f64) -> f64 {
        self.0
    }

    fn rho0(&self) -> f64 {
        self.0
    }

    fn correlation_halfwidth(&self) -> Option<f64> {
        None
    }

    fn vanishes_at_infinity(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen;
    use crate::rng::RngStream;

    /// Simpson quadrature of `integral h(y-x) h(y) dy` for arbitrary `h`:
    /// the independent oracle for closed-form values.
    fn quadrature_rho(h: impl Fn(f64) -> f64, lo: f64, hi: f64, x: f64) -> f64 {
        let m = 20_000usize;
        let dy = (hi - lo) / m as f64;
        let mut acc = 0.0;
        for k in 0..=m {
            let y = lo + k as f64 * dy;
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * h(y - x) * h(y);
        }
        acc * dy / 3.0
    }

    #[test]
    fn gaussian_rho_matches_quadrature_oracle() {
        let kernel = InteractionKernel::standard_gaussian();
        let h = |x: f64| (-x * x / 2.0).exp();
        for x in [0.0, 0.5, 1.0, 2.0, 3.5] {
            let oracle = quadrature_rho(h, -12.0, 12.0, x);
            assert!(
                (kernel.rho(x) - oracle).abs() < 1e-8,
                "x={x}: {} vs {oracle}",
                kernel.rho(x)
            );
        }
        assert!((kernel.rho(0.0) - PI.sqrt()).abs() < 1e-12);
        assert!((kernel.rho(2.0) - PI.sqrt() * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_rho_vanishes_far_out() {
        let kernel = InteractionKernel::standard_gaussian();
        assert!(kernel.rho(50.0).abs() < 1e-9);
        assert!(kernel.rho(-50.0).abs() < 1e-9);
    }

    #[test]
    fn triangular_rho_matches_closed_form() {
        // unit triangle: rho(x) = 2/3 - x^2 + |x|^3/2 on [0,1],
        // (2-|x|)^3/6 on [1,2], 0 beyond.
        let kernel = InteractionKernel::triangular(1.0).unwrap();
        let closed = |x: f64| -> f64 {
            let a = x.abs();
            if a <= 1.0 {
                2.0 / 3.0 - a * a + a * a * a / 2.0
            } else if a <= 2.0 {
                (2.0 - a).powi(3) / 6.0
            } else {
                0.0
            }
        };
        for x in [0.0, 0.2, 0.5, 0.9, 1.0, 1.3, 1.9, 2.5] {
            assert!(
                (kernel.rho(x) - closed(x)).abs() < 1e-5,
                "x={x}: {} vs {}",
                kernel.rho(x),
                closed(x)
            );
        }
        assert!((kernel.rho0() - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn tabulated_kernel_flags_out_of_support() {
        let n = 257;
        let hs: Vec<f64> = (0..n)
            .map(|i| {
                let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                (1.0 - x.abs()).max(0.0)
            })
            .collect();
        let kernel = InteractionKernel::tabulated(&hs, 1.0).unwrap();
        assert!(!kernel.out_of_support_queried());
        assert!((kernel.rho(0.5) - (2.0 / 3.0 - 0.25 + 0.0625)).abs() < 1e-3);
        assert_eq!(kernel.rho(5.0), 0.0);
        assert!(kernel.out_of_support_queried());
    }

    #[test]
    fn rho_is_symmetric_and_dominated_by_rho0() {
        let kernel = InteractionKernel::standard_gaussian();
        let tri = InteractionKernel::triangular(0.7).unwrap();
        for x in [-3.0, -1.1, 0.3, 0.9, 2.4] {
            for k in [&kernel, &tri] {
                assert!((k.rho(x) - k.rho(-x)).abs() < 1e-12);
                assert!(k.rho(x).abs() <= k.rho0() + 1e-12);
            }
        }
    }

    #[test]
    fn rho_matrices_are_psd() {
        let kernel = InteractionKernel::standard_gaussian();
        let tri = InteractionKernel::triangular(1.0).unwrap();
        let mut stream = RngStream::new(17, 0);
        for trial in 0..20 {
            let n = 2 + trial % 5;
            let pts: Vec<f64> = (0..n).map(|_| 4.0 * stream.standard_normal()).collect();
            for k in [&kernel, &tri] {
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        m[i * n + j] = k.rho(pts[i] - pts[j]);
                    }
                }
                let eig = symmetric_eigen(&m, n).unwrap();
                let min = eig.values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                assert!(min > -1e-9 * k.rho0(), "min eigenvalue {min}");
            }
        }
    }

    #[test]
    fn scaling_identities() {
        let kernel = InteractionKernel::standard_gaussian();
        let s1 = scale_rho(&kernel, 1.0).unwrap();
        let s4 = scale_rho(&kernel, 4.0).unwrap();
        for x in [-2.0, -0.5, 0.0, 0.7, 1.0, 3.0] {
            assert_eq!(s1.rho(x), kernel.rho(x));
            assert_eq!(s4.rho(x), kernel.rho(4.0 * x));
        }
        assert_eq!(s4.rho(0.0), kernel.rho0());
        assert!((s4.rho(1.0) - PI.sqrt() * (-4.0f64).exp()).abs() < 1e-12);
        assert!(scale_rho(&kernel, 0.5).is_err());
    }
}
