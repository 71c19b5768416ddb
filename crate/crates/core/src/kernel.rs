//! The polyharmonic (thin-plate) generalized covariance
//!
//! ```text
//! k(tau) = ||tau||^2 (ln ||tau|| - b) + c = 1/2 m (ln m - 2b) + c,   m = ||tau||^2
//! ```
//!
//! together with the spectral estimates of its constants `b` and `c` and the
//! elementwise matrix transforms used for Gram assembly and backpropagation.
//! Everything here works on squared distances; points never enter directly.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Squared distances below this are treated as zero separation.
pub const DEFAULT_EPS_SQ_DIST: f64 = 1e-20;

/// Constants of the kernel plus the noise variance of the Gram system.
///
/// `scale` multiplies every kernel value (and therefore every kernel
/// derivative). It is 1 for the standard kernel; predictions are invariant
/// under scaling both the kernel and `sigma2` by the same positive factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    omega0: f64,
    b: f64,
    c: f64,
    sigma2: f64,
    eps_sq_dist: f64,
    scale: f64,
}

impl KernelParams {
    /// Builds parameters from explicit constants.
    pub fn new(omega0: f64, b: f64, c: f64, sigma2: f64) -> Result<Self> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::Domain {
                what: "omega0 must be positive and finite",
                value: omega0,
            });
        }
        if !b.is_finite() {
            return Err(Error::Domain {
                what: "b must be finite",
                value: b,
            });
        }
        if !c.is_finite() {
            return Err(Error::Domain {
                what: "c must be finite",
                value: c,
            });
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain {
                what: "sigma2 must be non-negative and finite",
                value: sigma2,
            });
        }
        Ok(KernelParams {
            omega0,
            b,
            c,
            sigma2,
            eps_sq_dist: DEFAULT_EPS_SQ_DIST,
            scale: 1.0,
        })
    }

    /// Overrides the squared-distance guard.
    pub fn with_eps_sq_dist(mut self, eps_sq_dist: f64) -> Result<Self> {
        if !(eps_sq_dist > 0.0 && eps_sq_dist.is_finite()) {
            return Err(Error::Domain {
                what: "eps_sq_dist must be positive and finite",
                value: eps_sq_dist,
            });
        }
        self.eps_sq_dist = eps_sq_dist;
        Ok(self)
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain {
                what: "sigma2 must be non-negative and finite",
                value: sigma2,
            });
        }
        self.sigma2 = sigma2;
        Ok(self)
    }

    /// Multiplies the kernel by `scale`.
    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain {
                what: "kernel scale must be positive and finite",
                value: scale,
            });
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn eps_sq_dist(&self) -> f64 {
        self.eps_sq_dist
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Period `2 pi / omega0` of the cutoff harmonic.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega0
    }

    /// Kernel value for a squared distance already known to be non-negative.
    #[inline]
    pub(crate) fn eval(&self, sq_dist: f64) -> f64 {
        let raw = if sq_dist < self.eps_sq_dist {
            self.c
        } else {
            0.5 * sq_dist * (sq_dist.ln() - 2.0 * self.b) + self.c
        };
        self.scale * raw
    }

    /// Kernel value minus its constant part `scale * c`.
    #[inline]
    pub(crate) fn eval_centered(&self, sq_dist: f64) -> f64 {
        if sq_dist < self.eps_sq_dist {
            0.0
        } else {
            self.scale * 0.5 * sq_dist * (sq_dist.ln() - 2.0 * self.b)
        }
    }

    #[inline]
    pub(crate) fn theta(&self, sq_dist: f64) -> f64 {
        sq_dist.max(self.eps_sq_dist).ln() - 2.0 * self.b + 1.0
    }
}

fn check_positive(what: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what, value })
    }
}

/// `b(tau) = sin(w0 tau)/(w0 tau) - ln w0 - gamma - int_0^{w0 tau} (cos w - 1)/w dw`.
pub fn estimate_b(omega0: f64, tau: f64) -> Result<f64> {
    check_positive("omega0 must be positive", omega0)?;
    check_positive("tau must be positive", tau)?;
    let x = omega0 * tau;
    Ok(x.sin() / x - omega0.ln() - EULER_GAMMA - cos_minus_one_integral(x))
}

/// `c(tau) = cos(w0 tau) / w0^2`.
pub fn estimate_c(omega0: f64, tau: f64) -> Result<f64> {
    check_positive("omega0 must be positive", omega0)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain {
            what: "tau must be non-negative",
            value: tau,
        });
    }
    Ok((omega0 * tau).cos() / (omega0 * omega0))
}

/// Constants at the `tau -> 0` limit: `b = 1 - ln w0 - gamma`, `c = 1 / w0^2`.
pub fn default_constants(omega0: f64, sigma2: f64) -> Result<KernelParams> {
    check_positive("omega0 must be positive", omega0)?;
    KernelParams::new(
        omega0,
        1.0 - omega0.ln() - EULER_GAMMA,
        1.0 / (omega0 * omega0),
        sigma2,
    )
}

/// `int_0^x (cos w - 1)/w dw` for `x >= 0`.
///
/// Power series up to `x = 4`, adaptive Simpson on the remainder.
pub(crate) fn cos_minus_one_integral(x: f64) -> f64 {
    const SERIES_LIMIT: f64 = 4.0;
    if x <= SERIES_LIMIT {
        return cos_series(x);
    }
    let f = |w: f64| (w.cos() - 1.0) / w;
    // panels of width <= 1.5, shorter than half a period of the integrand
    let panels = ((x - SERIES_LIMIT) / 1.5).ceil().max(1.0) as usize;
    let width = (x - SERIES_LIMIT) / panels as f64;
    let mut total = cos_series(SERIES_LIMIT);
    for i in 0..panels {
        let a = SERIES_LIMIT + i as f64 * width;
        let b = if i + 1 == panels { x } else { a + width };
        total += adaptive_simpson(&f, a, b, 1e-14 * (b - a) / x.max(1.0));
    }
    total
}

fn cos_series(x: f64) -> f64 {
    // sum_{j>=1} (-1)^j x^{2j} / (2j (2j)!)
    let x2 = x * x;
    let mut power_over_fact = 1.0; // x^{2j} / (2j)!
    let mut sum = 0.0;
    for j in 1..=80 {
        let two_j = 2.0 * j as f64;
        power_over_fact *= x2 / ((two_j - 1.0) * two_j);
        let term = power_over_fact / two_j;
        if term < 1e-15 && j > 1 {
            break;
        }
        if j % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
    }
    sum
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }

    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Kernel value for one squared distance; separations under the guard map to `c`.
pub fn kernel_value(sq_dist: f64, params: &KernelParams) -> Result<f64> {
    if !(sq_dist >= 0.0) {
        return Err(Error::Domain {
            what: "squared distance must be non-negative",
            value: sq_dist,
        });
    }
    Ok(params.eval(sq_dist))
}

fn check_sq_dists(sq_dists: &DMatrix<f64>) -> Result<()> {
    match sq_dists.iter().find(|v| !(**v >= 0.0)) {
        Some(&value) => Err(Error::Domain {
            what: "squared distance must be non-negative",
            value,
        }),
        None => Ok(()),
    }
}

/// Elementwise kernel of a squared-distance matrix.
pub fn kernel_matrix(sq_dists: &DMatrix<f64>, params: &KernelParams) -> Result<DMatrix<f64>> {
    check_sq_dists(sq_dists)?;
    Ok(sq_dists.map(|m| params.eval(m)))
}

/// `theta = ln(max(m, eps)) - 2b + 1`, the factor shared by the kernel
/// derivative (`dk/dm = theta / 2`) and the alternative kernel assembly.
pub fn theta_matrix(sq_dists: &DMatrix<f64>, params: &KernelParams) -> Result<DMatrix<f64>> {
    check_sq_dists(sq_dists)?;
    Ok(sq_dists.map(|m| params.theta(m)))
}

/// Rebuilds the kernel block from `theta`: `1/2 M o (theta - 1) + c`.
pub fn kernel_from_theta(
    sq_dists: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    params: &KernelParams,
) -> Result<DMatrix<f64>> {
    if sq_dists.shape() != theta.shape() {
        return Err(Error::dims(
            "kernel_from_theta",
            format!("{:?}", sq_dists.shape()),
            format!("{:?}", theta.shape()),
        ));
    }
    Ok(sq_dists.zip_map(theta, |m, t| {
        params.scale * (0.5 * m * (t - 1.0) + params.c)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_params() -> KernelParams {
        KernelParams::new(0.001, 7.33054, 1e6, 0.0).unwrap()
    }

    /// Composite Romberg integration, independent of the series/Simpson path.
    fn romberg(f: impl Fn(f64) -> f64, a: f64, b: f64, levels: usize) -> f64 {
        let mut r = vec![vec![0.0; levels]; levels];
        let mut h = b - a;
        r[0][0] = 0.5 * h * (f(a) + f(b));
        for i in 1..levels {
            h *= 0.5;
            let n = 1usize << (i - 1);
            let s: f64 = (0..n).map(|k| f(a + (2 * k + 1) as f64 * h)).sum();
            r[i][0] = 0.5 * r[i - 1][0] + h * s;
            let mut p = 4.0;
            for j in 1..=i {
                r[i][j] = r[i][j - 1] + (r[i][j - 1] - r[i - 1][j - 1]) / (p - 1.0);
                p *= 4.0;
            }
        }
        r[levels - 1][levels - 1]
    }

    fn integrand(w: f64) -> f64 {
        if w == 0.0 {
            0.0
        } else {
            (w.cos() - 1.0) / w
        }
    }

    #[test]
    fn b_limit_matches_published_value() {
        let p = default_constants(0.001, 0.0).unwrap();
        assert!((p.b() - 7.33054).abs() < 1e-4);
        assert_eq!(p.c(), 1_000_000.0);
        assert!((p.period() - 6283.185307).abs() < 1e-5);
    }

    #[test]
    fn b_at_small_tau_matches_limit() {
        let b = estimate_b(0.001, 1e-6).unwrap();
        let limit = 1.0 - 0.001f64.ln() - EULER_GAMMA;
        assert!((b - limit).abs() < 1e-9);
        assert!((limit - 7.330_539_6).abs() < 1e-7);
    }

    #[test]
    fn b_at_tau_ten_matches_quadrature() {
        let x: f64 = 0.001 * 10.0;
        let oracle = x.sin() / x - 0.001f64.ln() - EULER_GAMMA - romberg(integrand, 0.0, x, 12);
        let b = estimate_b(0.001, 10.0).unwrap();
        assert!((b - oracle).abs() < 1e-10, "{b} vs {oracle}");
    }

    #[test]
    fn integral_matches_romberg_across_branches() {
        for &x in &[0.5, 3.9, 4.0, 4.1, 7.5, 10.0, 31.0] {
            let panels = (x / 0.5f64).ceil() as usize;
            let w = x / panels as f64;
            let oracle: f64 = (0..panels)
                .map(|i| romberg(integrand, i as f64 * w, (i + 1) as f64 * w, 14))
                .sum();
            let got = cos_minus_one_integral(x);
            assert!((got - oracle).abs() < 1e-12, "x={x}: {got} vs {oracle}");
        }
    }

    #[test]
    fn integral_against_cosine_integral() {
        // int_0^x (cos w - 1)/w dw = Ci(x) - gamma - ln x; Ci(10) from tables
        let ci10 = -0.045_456_433_004_455_37;
        let expected = ci10 - EULER_GAMMA - 10f64.ln();
        assert!((cos_minus_one_integral(10.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn b_converges_monotonically_to_limit() {
        let limit = 1.0 - 0.001f64.ln() - EULER_GAMMA;
        let mut prev = f64::INFINITY;
        for e in 2..=8 {
            let x = 10f64.powi(-e);
            let gap = (estimate_b(0.001, x / 0.001).unwrap() - limit).abs();
            assert!(gap <= prev, "gap grew at x=1e-{e}");
            prev = gap;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn b_rejects_bad_arguments() {
        assert!(estimate_b(0.0, 1.0).is_err());
        assert!(estimate_b(-1.0, 1.0).is_err());
        assert!(estimate_b(1.0, 0.0).is_err());
        assert!(estimate_c(0.0, 1.0).is_err());
        assert!(default_constants(0.0, 0.0).is_err());
    }

    #[test]
    fn c_values() {
        assert_eq!(estimate_c(0.001, 0.0).unwrap(), 1e6);
        assert_relative_eq!(
            estimate_c(0.001, 10.0).unwrap(),
            0.01f64.cos() / 1e-6,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            estimate_c(2.0 * PI, 1.0).unwrap(),
            1.0 / (4.0 * PI * PI),
            max_relative = 1e-14
        );
    }

    #[test]
    fn unit_omega_constants() {
        let p = default_constants(1.0, 0.0).unwrap();
        assert_relative_eq!(p.b(), 1.0 - EULER_GAMMA, max_relative = 1e-15);
        assert!((p.b() - 0.4227843).abs() < 1e-7);
        assert_eq!(p.c(), 1.0);
    }

    #[test]
    fn kernel_value_cases() {
        let p = reference_params();
        assert_eq!(kernel_value(0.0, &p).unwrap(), 1e6);
        assert_relative_eq!(kernel_value(1.0, &p).unwrap(), 999_992.669_46, epsilon = 1e-8);
        let m = (2.0 * p.b()).exp();
        assert_relative_eq!(kernel_value(m, &p).unwrap(), 1e6, max_relative = 1e-12);
        assert!(kernel_value(-1e-3, &p).is_err());
        assert!(kernel_value(f64::NAN, &p).is_err());
    }

    #[test]
    fn kernel_continuous_at_guard() {
        let p = reference_params();
        let eps = p.eps_sq_dist();
        let below = kernel_value(eps * 0.999, &p).unwrap();
        let above = kernel_value(eps, &p).unwrap();
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn kernel_matrix_matches_scalar_loop() {
        let p = reference_params();
        assert_eq!(
            kernel_matrix(&DMatrix::zeros(2, 3), &p).unwrap(),
            DMatrix::from_element(2, 3, 1e6)
        );
        let one = kernel_matrix(&DMatrix::from_element(1, 1, 1.0), &p).unwrap();
        assert_relative_eq!(one[(0, 0)], 1e6 - 7.33054, max_relative = 1e-15);

        let m = DMatrix::from_row_slice(3, 4, &[
            0.3, 1.7, 4.2, 0.0, 9.1, 2.5, 0.01, 13.0, 5.5, 0.6, 7.7, 1e-3,
        ]);
        let k = kernel_matrix(&m, &p).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let expected = kernel_value(m[(i, j)], &p).unwrap();
                assert_relative_eq!(k[(i, j)], expected, max_relative = 1e-15);
            }
        }
        let mut bad = m.clone();
        bad[(1, 1)] = -0.5;
        assert!(kernel_matrix(&bad, &p).is_err());
    }

    #[test]
    fn symmetric_input_gives_symmetric_kernel() {
        let p = reference_params();
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 5.0, 2.0, 0.0, 1.5, 5.0, 1.5, 0.0]);
        let k = kernel_matrix(&m, &p).unwrap();
        assert_eq!(k, k.transpose());
    }

    #[test]
    fn theta_cases() {
        let p = reference_params();
        let t = theta_matrix(&DMatrix::from_row_slice(1, 3, &[1.0, 0.0, (2.0 * p.b()).exp()]), &p)
            .unwrap();
        assert_relative_eq!(t[(0, 0)], 1.0 - 2.0 * p.b(), max_relative = 1e-15);
        assert!(t[(0, 1)].is_finite());
        assert_relative_eq!(t[(0, 1)], (1e-20f64).ln() - 2.0 * p.b() + 1.0);
        assert_relative_eq!(t[(0, 2)], 1.0, epsilon = 1e-12);
        assert!(theta_matrix(&DMatrix::from_element(1, 1, -1.0), &p).is_err());
    }

    #[test]
    fn kernel_from_theta_cases() {
        let p = reference_params();
        let zeros = DMatrix::zeros(2, 2);
        let theta = DMatrix::from_row_slice(2, 2, &[3.0, -7.0, 0.5, 11.0]);
        assert_eq!(
            kernel_from_theta(&zeros, &theta, &p).unwrap(),
            DMatrix::from_element(2, 2, 1e6)
        );
        let one = DMatrix::from_element(1, 1, 1.0);
        let k = kernel_from_theta(&one, &DMatrix::from_element(1, 1, 1.0 - 2.0 * p.b()), &p)
            .unwrap();
        assert_relative_eq!(k[(0, 0)], 1e6 - p.b(), max_relative = 1e-15);
        assert!(kernel_from_theta(&one, &zeros, &p).is_err());
    }

    #[test]
    fn guard_override() {
        let p = reference_params().with_eps_sq_dist(1e-4).unwrap();
        assert_eq!(kernel_value(5e-5, &p).unwrap(), p.c());
        assert!(reference_params().with_eps_sq_dist(0.0).is_err());
    }
}
