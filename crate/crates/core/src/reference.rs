//! Reference solvers for the local limit: Engquist–Osher for the Eulerian
//! density and first-order upwind for the Lagrangian spacing.

use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::exec::ExecPolicy;
use crate::ftl::DensityProfile;
use crate::velocity::VelocityModel;

const CFL_SLACK: f64 = 1e-12;

/// Engquist–Osher flux for a unimodal `f(ρ) = ρ V(ρ)` on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct EoFlux {
    model: VelocityModel,
    rho_star: f64,
    f_star: f64,
}

impl EoFlux {
    /// Locates the maximiser of the flux. Fluxes whose slope changes sign
    /// more than once are rejected.
    pub fn new(model: VelocityModel) -> Result<Self> {
        let n = 1000;
        let h = 1.0 / n as f64;
        let mut sign_changes = 0;
        let mut prev = 0i8;
        for k in 0..n {
            let s = model.flux((k + 1) as f64 * h) - model.flux(k as f64 * h);
            let sign = if s > 1e-15 {
                1
            } else if s < -1e-15 {
                -1
            } else {
                0
            };
            if sign != 0 {
                if prev != 0 && sign != prev {
                    sign_changes += 1;
                }
                prev = sign;
            }
        }
        if sign_changes > 1 {
            return Err(Error::NonUnimodalFlux);
        }
        let coarse = golden_max(|r| model.flux(r), 0.0, 1.0, 1e-12);
        let rho_star = sharpen_max(|r| model.flux(r), coarse);
        let f_star = model.flux(rho_star);
        Ok(Self {
            model,
            rho_star,
            f_star,
        })
    }

    pub fn model(&self) -> &VelocityModel {
        &self.model
    }

    pub fn rho_star(&self) -> f64 {
        self.rho_star
    }

    /// `F(a, b) = f(min(a, ρ*)) + f(max(b, ρ*)) - f(ρ*)`.
    #[inline]
    pub fn flux(&self, a: f64, b: f64) -> f64 {
        self.model.flux(a.min(self.rho_star)) + self.model.flux(b.max(self.rho_star)) - self.f_star
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Golden section stalls near `sqrt(eps)` on a flat maximum; bisecting the
/// sign of a symmetric difference recovers the remaining digits.
fn sharpen_max<F: Fn(f64) -> f64>(f: F, guess: f64) -> f64 {
    let h = 1e-4;
    // fourth-order central difference, scaled
    let slope = |x: f64| 8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h));
    let (mut lo, mut hi) = ((guess - 1e-6).max(2.0 * h), (guess + 1e-6).min(1.0 - 2.0 * h));
    if !(slope(lo) > 0.0 && slope(hi) < 0.0) {
        return guess;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `F(a, b)` for the given law. Builds the flux each call; hold an
/// [`EoFlux`] for repeated use.
pub fn eo_flux(a: f64, b: f64, model: &VelocityModel) -> Result<f64> {
    for (name, v) in [("a", a), ("b", b)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(name, format!("density must lie in [0, 1], got {v}")));
        }
    }
    Ok(EoFlux::new(model.clone())?.flux(a, b))
}

/// One conservative step with constant-extension ghost cells.
pub fn eo_step(rho: &[f64], flux: &EoFlux, lambda: f64) -> Result<Vec<f64>> {
    eo_step_with(ExecPolicy::default(), rho, flux, lambda)
}

pub fn eo_step_with(policy: ExecPolicy, rho: &[f64], flux: &EoFlux, lambda: f64) -> Result<Vec<f64>> {
    if rho.is_empty() {
        return Err(Error::Empty("density sequence"));
    }
    let courant = lambda * flux.model.flux_speed_bound();
    if !(lambda >= 0.0) || courant > 1.0 + CFL_SLACK {
        return Err(Error::CflViolation { courant });
    }
    let n = rho.len();
    // interface k sits between cells k-1 and k
    let mut interfaces = vec![0.0; n + 1];
    policy.fill(&mut interfaces, |k| {
        let left = rho[k.saturating_sub(1)];
        let right = rho[k.min(n - 1)];
        flux.flux(left, right)
    });
    let mut out = vec![0.0; n];
    policy.fill(&mut out, |i| rho[i] - lambda * (interfaces[i + 1] - interfaces[i]));
    Ok(out)
}

/// Upwind step for `∂_t w = ∂_z W(w)`: `w_i += λ (W(w_{i+1}) - W(w_i))`,
/// with `far` standing in for `w_{N+1}`.
pub fn lagrangian_upwind_step(w: &[f64], far: f64, model: &VelocityModel, lambda: f64) -> Result<Vec<f64>> {
    if w.is_empty() {
        return Err(Error::Empty("spacing sequence"));
    }
    let (lo, hi) = w.iter().fold((far, far), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let courant = lambda * model.sup_w_prime(lo, hi);
    if !(lambda >= 0.0) || courant > 1.0 + CFL_SLACK {
        return Err(Error::CflViolation { courant });
    }
    let n = w.len();
    Ok((0..n)
        .map(|i| {
            let ahead = if i + 1 < n {
                model.w_of(w[i + 1])
            } else {
                model.w_of(far)
            };
            w[i] + lambda * (ahead - model.w_of(w[i]))
        })
        .collect())
}

/// Uniform cells on `[x_lo, x_lo + n dx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerianGrid {
    pub dx: f64,
    pub x_lo: f64,
    pub n_cells: usize,
}

impl EulerianGrid {
    /// Cells covering `[x_lo, x_hi]` (the upper end is rounded up to a
    /// whole cell).
    pub fn new(x_lo: f64, x_hi: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(invalid("dx", format!("must be positive, got {dx}")));
        }
        if !(x_hi > x_lo) {
            return Err(invalid("x_hi", format!("need x_lo < x_hi, got [{x_lo}, {x_hi}]")));
        }
        let n_cells = ((x_hi - x_lo) / dx).ceil() as usize;
        Ok(Self { dx, x_lo, n_cells })
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.x_lo + k as f64 * self.dx
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 0.5) * self.dx
    }

    /// Left cell edges.
    pub fn edges(&self) -> Vec<f64> {
        (0..self.n_cells).map(|k| self.edge(k)).collect()
    }

    /// Exact cell averages of a piecewise-constant profile.
    pub fn project(&self, rho0: &DensityProfile) -> Vec<f64> {
        let bps = rho0.breakpoints();
        (0..self.n_cells)
            .map(|i| {
                let (l, r) = (self.edge(i), self.edge(i + 1));
                let mut acc = 0.0;
                let mut from = l;
                for &b in bps.iter().filter(|&&b| b > l && b < r) {
                    acc += rho0.eval(from) * (b - from);
                    from = b;
                }
                acc += rho0.eval(from) * (r - from);
                acc / (r - l)
            })
            .collect()
    }
}

/// Final state of a reference run.
#[derive(Debug, Clone)]
pub struct EulerianSolution {
    pub t: f64,
    pub grid: EulerianGrid,
    pub rho: Vec<f64>,
    pub steps: usize,
}

/// Run Engquist–Osher from `rho0` to `t_end` with `Δt = safety · dx / max|f'|`.
pub fn run_eo(
    grid: &EulerianGrid,
    rho0: &[f64],
    flux: &EoFlux,
    t_end: f64,
    safety: f64,
    policy: ExecPolicy,
) -> Result<EulerianSolution> {
    if rho0.len() != grid.n_cells {
        return Err(Error::LengthMismatch {
            left: rho0.len(),
            right: grid.n_cells,
        });
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(invalid("safety", format!("must lie in (0, 1], got {safety}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid("t_end", format!("must be >= 0, got {t_end}")));
    }
    let dt_max = safety * grid.dx / flux.model.flux_speed_bound();
    let mut rho = rho0.to_vec();
    let mut t = 0.0;
    let mut steps = 0;
    while t < t_end {
        let dt = dt_max.min(t_end - t);
        rho = eo_step_with(policy, &rho, flux, dt / grid.dx)?;
        t = if t + dt >= t_end * (1.0 - 1e-14) { t_end } else { t + dt };
        steps += 1;
    }
    Ok(EulerianSolution {
        t,
        grid: grid.clone(),
        rho,
        steps,
    })
}

/// Default reference resolution relative to the vehicle length.
pub fn reference_dx(ell: f64) -> f64 {
    ell / 8.0
}

/// CSV with columns `t,x,rho` at cell centres.
pub fn write_solution_csv<W: Write>(mut out: W, sol: &EulerianSolution) -> io::Result<()> {
    writeln!(out, "t,x,rho")?;
    for (i, r) in sol.rho.iter().enumerate() {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", sol.t, sol.grid.center(i), r)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::WeightRow;
    use crate::scheme::{LagrangianGrid, PairScheme};
    use approx::assert_abs_diff_eq;

    fn eo() -> EoFlux {
        EoFlux::new(VelocityModel::linear()).unwrap()
    }

    #[test]
    fn flux_values() {
        let f = eo();
        assert_abs_diff_eq!(f.rho_star(), 0.5, epsilon = 1e-11);
        assert_abs_diff_eq!(f.flux(0.5, 0.5), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(f.flux(0.2, 0.8), 0.07, epsilon = 1e-15);
        let m = VelocityModel::linear();
        for c in [0.0, 0.1, 0.5, 0.77, 1.0] {
            assert_abs_diff_eq!(f.flux(c, c), m.flux(c), epsilon = 1e-15);
        }
        assert!(eo_flux(1.2, 0.0, &m).is_err());
    }

    #[test]
    fn quadratic_maximiser() {
        let f = EoFlux::new(VelocityModel::quadratic()).unwrap();
        assert_abs_diff_eq!(f.rho_star(), 1.0 / 3f64.sqrt(), epsilon = 1e-11);
    }

    #[test]
    fn bimodal_flux_rejected() {
        let m = VelocityModel::custom(
            "wavy",
            |u: f64| (1.0 - u) * (1.0 - 0.9 * (6.0 * u).sin().powi(2) * u),
            12.0,
        );
        if let Ok(m) = m {
            assert!(matches!(EoFlux::new(m), Err(Error::NonUnimodalFlux)));
        }
    }

    #[test]
    fn constant_state_and_mass() {
        let f = eo();
        let rho = vec![0.3; 50];
        assert_eq!(eo_step(&rho, &f, 0.9).unwrap(), rho);
        let bumpy: Vec<f64> = (0..50).map(|i| if (10..20).contains(&i) { 0.9 } else { 0.3 }).collect();
        let next = eo_step(&bumpy, &f, 0.9).unwrap();
        let before: f64 = bumpy.iter().sum();
        let after: f64 = next.iter().sum();
        assert_abs_diff_eq!(before, after, epsilon = 1e-12);
        assert!(eo_step(&bumpy, &f, 1.1).is_err());
    }

    #[test]
    fn riemann_fan_stays_in_range() {
        let f = eo();
        let grid = EulerianGrid::new(-2.0, 2.0, 0.01).unwrap();
        let rho0: Vec<f64> = (0..grid.n_cells)
            .map(|i| if grid.center(i) < 0.0 { 1.0 } else { 0.05 })
            .collect();
        let sol = run_eo(&grid, &rho0, &f, 1.0, 0.9, ExecPolicy::Sequential).unwrap();
        assert!(sol.rho.iter().all(|r| (0.05 - 1e-14..=1.0 + 1e-14).contains(r)));
        let exact = |x: f64| ((1.0 - x) / 2.0).clamp(0.05, 1.0);
        let err: f64 = (0..grid.n_cells)
            .map(|i| (sol.rho[i] - exact(grid.center(i))).abs() * grid.dx)
            .sum();
        assert!(err < 0.05, "L1 error {err}");
    }

    #[test]
    fn projection_is_exact() {
        let grid = EulerianGrid::new(-1.0, 1.0, 0.3).unwrap();
        let p = DensityProfile::boxed(1.0, 0.05, -0.75, 0.75).unwrap();
        let cells = grid.project(&p);
        let mass: f64 = cells.iter().map(|c| c * grid.dx).sum();
        let hi = grid.edge(grid.n_cells);
        let exact = 1.5 + 0.05 * (0.25 + (hi - 0.75));
        assert_abs_diff_eq!(mass, exact, epsilon = 1e-14);
    }

    #[test]
    fn upwind_matches_identity_filter_bitwise() {
        let m = VelocityModel::linear();
        let w: Vec<f64> = (0..40).map(|i| 1.0 + (i as f64 * 0.7).sin().abs() * 10.0).collect();
        let grid = LagrangianGrid::new(0.01, 40, 1.0, 20.0).unwrap();
        let row = WeightRow::identity(0.01);
        let a = PairScheme::new(&row, &m, &grid).step_w(&w, 0.9).unwrap();
        let b = lagrangian_upwind_step(&w, 20.0, &m, 0.9).unwrap();
        assert_eq!(a, b);
        assert_eq!(lagrangian_upwind_step(&[3.0; 5], 3.0, &m, 0.5).unwrap(), vec![3.0; 5]);
        assert!(lagrangian_upwind_step(&w, 20.0, &m, 1.5).is_err());
    }
}
