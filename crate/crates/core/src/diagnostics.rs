//! Norms and checks for the discrete estimates the scheme is supposed to
//! satisfy, plus entropy dissipation and convergence-rate fitting.

use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::exec::ExecPolicy;
use crate::kernels::{Kernel, WeightRow};
use crate::quad::integrate;
use crate::scheme::filter_into;
use crate::velocity::VelocityModel;

/// Tolerance used by the per-step checks.
pub const CHECK_TOL: f64 = 1e-12;

/// `Σ |v_{i+1} - v_i|`.
pub fn bv_seminorm(v: &[f64]) -> f64 {
    v.windows(2).map(|p| (p[1] - p[0]).abs()).sum()
}

/// `Δz Σ |a_i - b_i|`.
pub fn l1_distance(a: &[f64], b: &[f64], dz: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(dz * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Distance by which `v` leaves `[lo, hi]` (zero if it stays inside).
pub fn range_excess(v: &[f64], lo: f64, hi: f64) -> f64 {
    v.iter().map(|x| (lo - x).max(x - hi).max(0.0)).fold(0.0, f64::max)
}

/// Largest `b_i - a_i` over positions where `a` should dominate `b`.
pub fn order_excess(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (y - x).max(0.0)).fold(0.0, f64::max)
}

/// Outcome of a pointwise inequality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOutcome {
    pub holds: bool,
    /// Largest `lhs - rhs` observed (negative when every inequality is strict).
    pub worst: f64,
}

/// Kruzkov entropy flux `Q_c(w) = sgn(w - c) (W(w) - W(c))`.
pub fn kruzkov_flux(model: &VelocityModel, c: f64, w: f64) -> f64 {
    let d = model.w_of(w) - model.w_of(c);
    if w > c {
        d
    } else if w < c {
        -d
    } else {
        0.0
    }
}

/// Check the cell entropy inequality
/// `|w_i' - c| <= |w_i - c| + λ Σ_{j>=i} Φ_ij (Q_c(w_{j+1}) - Q_c(w_j))`
/// for a step `before → after` of the filtered scheme. Cells past the window
/// read `far`.
#[allow(clippy::too_many_arguments)]
pub fn check_entropy_step(
    before: &[f64],
    after: &[f64],
    c: f64,
    row: &WeightRow,
    model: &VelocityModel,
    lambda: f64,
    far: f64,
) -> Result<CheckOutcome> {
    if before.len() != after.len() {
        return Err(Error::LengthMismatch {
            left: before.len(),
            right: after.len(),
        });
    }
    if before.is_empty() {
        return Err(Error::Empty("state"));
    }
    let n = before.len();
    let q: Vec<f64> = before.iter().map(|&w| kruzkov_flux(model, c, w)).collect();
    let q_far = kruzkov_flux(model, c, far);
    let mut averaged = vec![0.0; n];
    filter_into(ExecPolicy::Sequential, &q, row, q_far, &mut averaged);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let ahead = if i + 1 < n { averaged[i + 1] } else { q_far };
        let rhs = (before[i] - c).abs() + lambda * (ahead - averaged[i]);
        worst = worst.max((after[i] - c).abs() - rhs);
    }
    Ok(CheckOutcome {
        holds: worst <= CHECK_TOL,
        worst,
    })
}

/// Entropy used in the dissipation functional.
#[derive(Clone, Copy)]
pub enum Entropy<'a> {
    /// `η(w) = w²/2`; inner integrals in closed form.
    Quadratic,
    /// Any convex entropy given by its second derivative `η'' >= 0`.
    General(&'a (dyn Fn(f64) -> f64 + Sync)),
}

impl std::fmt::Debug for Entropy<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Entropy::Quadratic => f.write_str("Quadratic"),
            Entropy::General(_) => f.write_str("General"),
        }
    }
}

/// `H(a, b) = ∫_a^b ∫_a^σ η''(μ) W'(σ) dμ dσ`, rewritten by parts as
/// `∫_a^b η''(σ) (W(b) - W(σ)) dσ`.
pub fn entropy_kernel(a: f64, b: f64, model: &VelocityModel, entropy: Entropy<'_>) -> f64 {
    if a == b {
        return 0.0;
    }
    match (entropy, model.name()) {
        (Entropy::Quadratic, "linear") => {
            let x = (b - a) / a;
            x.ln_1p() - x / (1.0 + x)
        }
        (Entropy::Quadratic, "quadratic") => (b - a) * (b - a) / (a * b * b),
        (Entropy::Quadratic, _) => {
            let wb = model.w_of(b);
            integrate(|s| wb - model.w_of(s), a, b, 1e-14)
        }
        (Entropy::General(eta2), _) => {
            let wb = model.w_of(b);
            integrate(|s| eta2(s) * (wb - model.w_of(s)), a, b, 1e-14)
        }
    }
}

/// Per-cell dissipation
/// `D_i = ∫_0^∞ (-Φ_α')(ζ) H(w_i, w(z_i + ζ)) dζ`
/// with `w` piecewise constant on the cells and equal to `far` past the
/// window. The ζ-integral uses the midpoint rule with four samples per
/// cell; the far-field part is integrated exactly.
#[allow(clippy::too_many_arguments)]
pub fn entropy_dissipation(
    w: &[f64],
    far: f64,
    kernel: Kernel,
    alpha: f64,
    dz: f64,
    model: &VelocityModel,
    entropy: Entropy<'_>,
) -> Result<Vec<f64>> {
    if kernel.derivative(0.5).is_err() {
        return Err(Error::NonDifferentiableKernel(kernel.name()));
    }
    if w.is_empty() {
        return Err(Error::Empty("state"));
    }
    if !(alpha > 0.0 && dz > 0.0) {
        return Err(invalid("alpha", "alpha and dz must be positive"));
    }
    const SUB: usize = 4;
    let h = dz / alpha;
    // mass of -Φ_α' on each cell, by the midpoint rule
    let n = w.len();
    let mut cell_mass = Vec::with_capacity(n);
    for k in 0..n {
        if kernel.survival(k as f64 * h) < 1e-18 {
            break;
        }
        let m: f64 = (0..SUB)
            .map(|s| {
                let zeta = (k as f64 + (s as f64 + 0.5) / SUB as f64) * h;
                -kernel.derivative(zeta).expect("differentiable kernel")
            })
            .sum::<f64>()
            * h
            / SUB as f64;
        cell_mass.push(m);
    }
    let mut out = vec![0.0; n];
    ExecPolicy::default().fill(&mut out, |i| {
        let reach = (n - i).min(cell_mass.len());
        let mut d = 0.0;
        for k in 1..reach {
            d += cell_mass[k] * entropy_kernel(w[i], w[i + k], model, entropy);
        }
        let tail = kernel.survival((n - i) as f64 * h);
        if tail > 0.0 {
            d += tail * entropy_kernel(w[i], far, model, entropy);
        }
        d
    });
    Ok(out)
}

/// Least-squares fit of `log(error) = slope · log(α) + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub samples: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
}

pub fn rate_fit(samples: &[(f64, f64)]) -> Result<RateFit> {
    if samples.len() < 2 {
        return Err(invalid("samples", "need at least two (alpha, error) pairs"));
    }
    if let Some((a, e)) = samples.iter().find(|(a, e)| !(*a > 0.0 && *e > 0.0)) {
        return Err(invalid(
            "samples",
            format!("alpha and error must be positive, got ({a}, {e})"),
        ));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|(a, _)| a.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("samples", "need at least two distinct alpha values"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(RateFit {
        samples: samples.to_vec(),
        slope,
        intercept: my - slope * mx,
    })
}

/// Error bound for the zero-filter limit: `2 sqrt(2 T sup W' BV(y0) α)`.
pub fn zero_filter_bound(t: f64, sup_w_prime: f64, bv_y0: f64, alpha: f64) -> f64 {
    2.0 * (2.0 * t * sup_w_prime * bv_y0 * alpha).sqrt()
}

/// `max_i |-α (w_{i+1} - w_i)/dz + w_i - y_i|` over cells with a right
/// neighbour. For the exponential kernel the continuous identity
/// `-α w' + w = y` makes this first order in `dz`.
pub fn exp_identity_residual(w: &[f64], y: &[f64], alpha: f64, dz: f64) -> Result<f64> {
    if w.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: w.len(),
            right: y.len(),
        });
    }
    Ok(w.windows(2)
        .zip(y)
        .map(|(p, yi)| (-alpha * (p[1] - p[0]) / dz + p[0] - yi).abs())
        .fold(0.0, f64::max))
}

/// `Δz Σ |y_i - w_i|`.
pub fn filtered_gap(y: &[f64], w: &[f64], dz: f64) -> Result<f64> {
    l1_distance(y, w, dz)
}

/// One line of a property campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSummary {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest excess over the check's bound (negative if never reached).
    pub worst_margin: f64,
}

impl CheckSummary {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            trials: 0,
            violations: 0,
            worst_margin: f64::NEG_INFINITY,
        }
    }

    /// Record one trial whose largest excess over the bound is `margin`.
    pub fn record(&mut self, margin: f64, tol: f64) {
        self.trials += 1;
        if margin > tol {
            self.violations += 1;
        }
        self.worst_margin = self.worst_margin.max(margin);
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// CSV with columns `check,trials,violations,worst_margin`.
pub fn write_campaign_csv<W: Write>(mut out: W, rows: &[CheckSummary]) -> io::Result<()> {
    writeln!(out, "check,trials,violations,worst_margin")?;
    for r in rows {
        writeln!(out, "{},{},{},{:.6e}", r.name, r.trials, r.violations, r.worst_margin)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::lagrangian_weights;
    use crate::scheme::{LagrangianGrid, PairScheme};
    use approx::assert_abs_diff_eq;

    #[test]
    fn bv_examples() {
        assert_eq!(bv_seminorm(&[2.0, 2.0, 2.0]), 0.0);
        assert_eq!(bv_seminorm(&[1.0, 3.0, 2.0]), 3.0);
        let y0: Vec<f64> = (0..30)
            .map(|i| if (10..20).contains(&i) { 1.0 } else { 20.0 })
            .collect();
        assert_eq!(bv_seminorm(&y0), 38.0);
    }

    fn setup(alpha: f64) -> (WeightRow, VelocityModel, LagrangianGrid) {
        let dz = 0.05;
        let row = lagrangian_weights(Kernel::Exponential, alpha, dz, 1e-12).unwrap();
        (
            row,
            VelocityModel::linear(),
            LagrangianGrid::new(dz, 40, 1.0, 20.0).unwrap(),
        )
    }

    #[test]
    fn entropy_check_cases() {
        let (row, m, grid) = setup(0.2);
        let scheme = PairScheme::new(&row, &m, &grid);
        let flat = vec![20.0; 40];
        let after = scheme.step_w(&flat, 0.9).unwrap();
        let out = check_entropy_step(&flat, &after, 7.0, &row, &m, 0.9, 20.0).unwrap();
        assert!(out.holds && out.worst.abs() <= 1e-12);

        let w: Vec<f64> = (0..40).map(|i| 1.0 + 19.0 * (i as f64 / 39.0).powi(2)).collect();
        let after = scheme.step_w(&w, 0.9).unwrap();
        // below the range the inequality is the conservative update itself
        let out = check_entropy_step(&w, &after, 0.5, &row, &m, 0.9, 20.0).unwrap();
        assert!(out.holds && out.worst.abs() <= 1e-12, "{out:?}");
        for c in [1.5, 5.0, 12.0, 19.0] {
            assert!(check_entropy_step(&w, &after, c, &row, &m, 0.9, 20.0).unwrap().holds);
        }
        assert!(check_entropy_step(&w, &after[1..], 1.0, &row, &m, 0.9, 20.0).is_err());
    }

    #[test]
    fn entropy_kernel_against_double_quadrature() {
        let m = VelocityModel::linear();
        for (a, b) in [(1.0, 3.0), (5.0, 2.0), (1.5, 1.5000001), (19.0, 1.0)] {
            let closed = entropy_kernel(a, b, &m, Entropy::Quadratic);
            let oracle = integrate(|s| integrate(|_| 1.0, a, s, 1e-15) * m.w_prime(s), a, b, 1e-15);
            assert_abs_diff_eq!(closed, oracle, epsilon = 1e-12);
            assert!(closed >= 0.0);
            let eta2 = |_: f64| 1.0;
            let general = entropy_kernel(a, b, &m, Entropy::General(&eta2));
            assert_abs_diff_eq!(general, oracle, epsilon = 1e-12);
        }
        let q = VelocityModel::quadratic();
        let oracle = integrate(|s| (s - 2.0) * q.w_prime(s), 2.0, 7.0, 1e-15);
        assert_abs_diff_eq!(
            entropy_kernel(2.0, 7.0, &q, Entropy::Quadratic),
            oracle,
            epsilon = 1e-12
        );
    }

    #[test]
    fn dissipation_cases() {
        let m = VelocityModel::linear();
        let flat =
            entropy_dissipation(&[4.0; 20], 4.0, Kernel::Exponential, 0.1, 0.05, &m, Entropy::Quadratic).unwrap();
        assert!(flat.iter().all(|d| *d == 0.0));

        // two-point profile: bounded below by the quadratic estimate with
        // c = inf W'/2
        let w: Vec<f64> = (0..20).map(|i| if i < 10 { 2.0 } else { 5.0 }).collect();
        let (alpha, dz) = (0.1, 0.05);
        let d = entropy_dissipation(&w, 5.0, Kernel::Exponential, alpha, dz, &m, Entropy::Quadratic).unwrap();
        let c = 0.5 * m.w_prime(5.0);
        for (i, di) in d.iter().enumerate().take(10) {
            let lower = c * 9.0 * Kernel::Exponential.survival((10 - i) as f64 * dz / alpha);
            assert!(*di >= lower * (1.0 - 1e-3), "cell {i}: {di} < {lower}");
        }
        assert!(d[10..].iter().all(|v| *v == 0.0));

        assert!(matches!(
            entropy_dissipation(&w, 5.0, Kernel::Box, alpha, dz, &m, Entropy::Quadratic),
            Err(Error::NonDifferentiableKernel(_))
        ));
    }

    #[test]
    fn rate_fits() {
        let f = rate_fit(&[(1.0, 1.0), (0.25, 0.5)]).unwrap();
        assert_abs_diff_eq!(f.slope, 0.5, epsilon = 1e-14);
        let lin: Vec<(f64, f64)> = [0.5, 0.1, 0.01].iter().map(|a| (*a, 3.0 * a)).collect();
        assert_abs_diff_eq!(rate_fit(&lin).unwrap().slope, 1.0, epsilon = 1e-12);
        let flat: Vec<(f64, f64)> = [0.5, 0.1, 0.01].iter().map(|a| (*a, 0.2)).collect();
        assert_abs_diff_eq!(rate_fit(&flat).unwrap().slope, 0.0, epsilon = 1e-12);
        let planted: Vec<(f64, f64)> = [1.0, 0.3, 0.07, 0.002]
            .iter()
            .map(|a: &f64| (*a, 1.7 * a.powf(0.73)))
            .collect();
        let fit = rate_fit(&planted).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.73, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.intercept, 1.7f64.ln(), epsilon = 1e-10);
        assert!(rate_fit(&[(1.0, 1.0)]).is_err());
        assert!(rate_fit(&[(1.0, 1.0), (0.5, 0.0)]).is_err());
    }

    #[test]
    fn identity_residual_and_gap() {
        assert_eq!(exp_identity_residual(&[3.0; 5], &[3.0; 5], 0.1, 0.01).unwrap(), 0.0);
        assert_eq!(filtered_gap(&[2.0; 4], &[2.0; 4], 0.1).unwrap(), 0.0);
        assert_abs_diff_eq!(filtered_gap(&[2.0; 4], &[1.0; 4], 0.1).unwrap(), 0.4, epsilon = 1e-15);
        assert!(filtered_gap(&[2.0; 4], &[1.0; 3], 0.1).is_err());
    }

    #[test]
    fn campaign_csv() {
        let mut s = CheckSummary::new("monotone");
        s.record(-1.0, 1e-12);
        s.record(1e-3, 1e-12);
        assert_eq!((s.trials, s.violations), (2, 1));
        let mut buf = Vec::new();
        write_campaign_csv(&mut buf, &[s]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "check,trials,violations,worst_margin\nmonotone,2,1,1.000000e-3\n"
        );
    }
}
