//! Microscopic Follow-the-Leaders models.
//!
//! Vehicles of length `ℓ` sit at increasing positions `x_1 < … < x_N`; the
//! road past `x_N` is free with a frozen density `u_last` that sets the
//! leader's speed. Three closures for the follower speeds are provided:
//! the local one, the usual nonlocal one that averages densities over a
//! physical stretch of road, and the Lagrangian one that averages spacings
//! over a fixed number of vehicles ahead (a weighted harmonic mean of the
//! densities).

use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::exec::{dot, ExecPolicy};
use crate::kernels::{eulerian_row, lagrangian_weights, Kernel, WeightRow};
use crate::velocity::VelocityModel;

/// Slack on the `gap >= ℓ` check to absorb rounding in jammed platoons.
const GAP_SLACK: f64 = 1e-9;

/// Piecewise-constant initial density on the whole line.
///
/// `values[k]` holds on `[breakpoints[k-1], breakpoints[k])`, with the first
/// and last values extending to `∓∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl DensityProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: breakpoints.len() + 1,
            });
        }
        if breakpoints.windows(2).any(|p| !(p[1] > p[0])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(invalid("breakpoints", "must be finite and strictly increasing"));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(invalid("values", format!("densities must lie in (0, 1], got {v}")));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(rho: f64) -> Result<Self> {
        Self::new(vec![], vec![rho])
    }

    /// `inside` on `[lo, hi)`, `outside` elsewhere.
    pub fn boxed(inside: f64, outside: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![outside, inside, outside])
    }

    /// The box data used throughout the experiments: a jam of density one on
    /// `|x| < 0.75` in light traffic of density `0.05`.
    pub fn jam_box() -> Self {
        Self::boxed(1.0, 0.05, -0.75, 0.75).expect("valid box profile")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn piece(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|b| *b <= x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.piece(x)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Total variation of the spacing `1/ρ`.
    pub fn spacing_variation(&self) -> f64 {
        self.values.windows(2).map(|p| (1.0 / p[1] - 1.0 / p[0]).abs()).sum()
    }

    /// Point `x'` with `∫_x^{x'} ρ = mass`, by walking the pieces.
    fn advance(&self, x: f64, mass: f64) -> f64 {
        let mut k = self.piece(x);
        let mut x = x;
        let mut m = mass;
        loop {
            let rho = self.values[k];
            match self.breakpoints.get(k) {
                Some(&end) if rho * (end - x) < m => {
                    m -= rho * (end - x);
                    x = end;
                    k += 1;
                }
                _ => return x + m / rho,
            }
        }
    }
}

/// Vehicle positions at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FtlState {
    pub t: f64,
    pub ell: f64,
    pub positions: Vec<f64>,
    /// Upstream density, used only for reconstruction left of `x_1`.
    pub u_left: f64,
    /// Density of the free road ahead of the leader; never updated.
    pub u_last: f64,
}

impl FtlState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Local density of vehicle `i` (zero-based); the leader carries `u_last`.
    pub fn density(&self, i: usize) -> f64 {
        if i + 1 < self.positions.len() {
            self.ell / (self.positions[i + 1] - self.positions[i])
        } else {
            self.u_last
        }
    }

    pub fn densities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.density(i)).collect()
    }

    /// Spacings in vehicle lengths, `1/u_i`.
    pub fn spacings(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                if i + 1 < self.len() {
                    (self.positions[i + 1] - self.positions[i]) / self.ell
                } else {
                    1.0 / self.u_last
                }
            })
            .collect()
    }

    /// Mean vehicle position.
    pub fn centroid(&self) -> f64 {
        self.positions.iter().sum::<f64>() / self.len() as f64
    }

    fn check_gaps(&self) -> Result<()> {
        for (i, p) in self.positions.windows(2).enumerate() {
            let gap = p[1] - p[0];
            if gap < self.ell * (1.0 - GAP_SLACK) {
                return Err(Error::OrderingViolation {
                    index: i,
                    gap,
                    ell: self.ell,
                });
            }
        }
        Ok(())
    }
}

/// Place vehicles so that each holds exactly `ℓ` of the initial mass,
/// starting at `x_1 = a` and stopping at the first vehicle past `b`.
pub fn discretize_density(rho0: &DensityProfile, ell: f64, a: f64, b: f64) -> Result<FtlState> {
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(invalid("ell", format!("vehicle length must be positive, got {ell}")));
    }
    if !(a < b) {
        return Err(invalid("b", format!("need a < b, got a = {a}, b = {b}")));
    }
    let mut positions = vec![a];
    let mut x = a;
    loop {
        let next = rho0.advance(x, ell);
        if next > b {
            return Ok(FtlState {
                t: 0.0,
                ell,
                positions,
                u_left: rho0.eval(a - 1.0),
                u_last: rho0.eval(next),
            });
        }
        positions.push(next);
        x = next;
    }
}

/// Follower speed closure.
#[derive(Debug, Clone)]
pub enum FtlModel {
    /// `V(u_i)`.
    Local,
    /// `V(Σ_j Φ̃_ij u_j)` with weights over physical distance, rebuilt from
    /// the positions at every evaluation.
    EulerianNonlocal { kernel: Kernel, alpha: f64 },
    /// `V(1 / Σ_j Φ̄_ij (1/u_j))` with weights over vehicle counts, built once.
    LagrangianNonlocal { row: WeightRow },
}

impl FtlModel {
    pub fn lagrangian(kernel: Kernel, alpha: f64, ell: f64, tail_mass_tol: f64) -> Result<Self> {
        Ok(FtlModel::LagrangianNonlocal {
            row: lagrangian_weights(kernel, alpha, ell, tail_mass_tol)?,
        })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            FtlModel::Local => "local",
            FtlModel::EulerianNonlocal { .. } => "eulerian",
            FtlModel::LagrangianNonlocal { .. } => "lagrangian",
        }
    }
}

/// `Σ_j w_j u_j`.
pub fn arithmetic_mean_density(weights: &[f64], densities: &[f64]) -> f64 {
    dot(weights, densities)
}

/// `1 / Σ_j (w_j / u_j)`.
pub fn harmonic_mean_density(weights: &[f64], densities: &[f64]) -> f64 {
    1.0 / weights.iter().zip(densities).map(|(w, u)| w / u).sum::<f64>()
}

fn check_index(state: &FtlState, i: usize) -> Result<()> {
    if i < state.len() {
        Ok(())
    } else {
        Err(invalid(
            "i",
            format!("vehicle index {i} out of range for {} vehicles", state.len()),
        ))
    }
}

pub fn speed_local(state: &FtlState, i: usize, model: &VelocityModel) -> Result<f64> {
    check_index(state, i)?;
    Ok(model.speed(state.density(i)))
}

pub fn speed_nonlocal_eulerian(
    state: &FtlState,
    i: usize,
    kernel: Kernel,
    alpha: f64,
    model: &VelocityModel,
) -> Result<f64> {
    check_index(state, i)?;
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("must be positive, got {alpha}")));
    }
    Ok(eulerian_speed(state, &state.densities(), i, kernel, alpha, model))
}

pub fn speed_nonlocal_lagrangian(state: &FtlState, i: usize, row: &WeightRow, model: &VelocityModel) -> Result<f64> {
    check_index(state, i)?;
    Ok(lagrangian_speed(state, &state.spacings(), i, row, model))
}

fn eulerian_speed(
    state: &FtlState,
    densities: &[f64],
    i: usize,
    kernel: Kernel,
    alpha: f64,
    model: &VelocityModel,
) -> f64 {
    if i + 1 == state.len() {
        return model.speed(state.u_last);
    }
    let weights = eulerian_row(kernel, alpha, &state.positions, i);
    model.speed(arithmetic_mean_density(&weights, &densities[i..]))
}

fn lagrangian_speed(state: &FtlState, spacings: &[f64], i: usize, row: &WeightRow, model: &VelocityModel) -> f64 {
    let n = state.len();
    if i + 1 == n {
        return model.speed(state.u_last);
    }
    // vehicles i..n-1; everything past the last one is folded onto it
    let m = n - i;
    let w = row.weights();
    let inner = (m - 1).min(w.len());
    let mut mean_spacing = dot(&w[..inner], &spacings[i..i + inner]);
    mean_spacing += row.tail_mass(m - 1) * spacings[n - 1];
    model.speed(1.0 / mean_spacing)
}

/// Speeds of all vehicles under `kind`.
pub fn speeds(state: &FtlState, kind: &FtlModel, model: &VelocityModel, policy: ExecPolicy) -> Vec<f64> {
    let mut out = vec![0.0; state.len()];
    match kind {
        FtlModel::Local => policy.fill(&mut out, |i| model.speed(state.density(i))),
        FtlModel::EulerianNonlocal { kernel, alpha } => {
            let densities = state.densities();
            policy.fill(&mut out, |i| {
                eulerian_speed(state, &densities, i, *kernel, *alpha, model)
            });
        }
        FtlModel::LagrangianNonlocal { row } => {
            let spacings = state.spacings();
            policy.fill(&mut out, |i| lagrangian_speed(state, &spacings, i, row, model));
        }
    }
    out
}

/// One explicit Euler step. Fails if any gap drops below the vehicle length.
pub fn euler_step(state: &FtlState, kind: &FtlModel, model: &VelocityModel, dt: f64) -> Result<FtlState> {
    euler_step_with(ExecPolicy::default(), state, kind, model, dt)
}

pub fn euler_step_with(
    policy: ExecPolicy,
    state: &FtlState,
    kind: &FtlModel,
    model: &VelocityModel,
    dt: f64,
) -> Result<FtlState> {
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let v = speeds(state, kind, model, policy);
    let positions = state.positions.iter().zip(&v).map(|(x, s)| x + dt * s).collect();
    let next = FtlState {
        t: state.t + dt,
        positions,
        ..state.clone()
    };
    next.check_gaps()?;
    Ok(next)
}

/// Integrate to `t_end` with step `dt` (the last step is shortened).
pub fn simulate(
    initial: &FtlState,
    kind: &FtlModel,
    model: &VelocityModel,
    dt: f64,
    t_end: f64,
    policy: ExecPolicy,
) -> Result<FtlState> {
    if !(t_end >= 0.0) {
        return Err(invalid("t_end", format!("must be >= 0, got {t_end}")));
    }
    initial.check_gaps()?;
    let mut state = initial.clone();
    while state.t < t_end {
        let remaining = t_end - state.t;
        let last = dt >= remaining * (1.0 - 1e-12);
        let h = if last { remaining } else { dt };
        state = euler_step_with(policy, &state, kind, model, h)?;
        if last {
            state.t = t_end;
        }
    }
    Ok(state)
}

/// Piecewise-constant density `u_ℓ(x)`: `u_left` up to `x_1`, `u_i` on
/// `(x_i, x_{i+1}]`, and `u_last` past the leader.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReconstruction {
    positions: Vec<f64>,
    densities: Vec<f64>,
    u_left: f64,
}

pub fn reconstruct_density(state: &FtlState) -> DensityReconstruction {
    DensityReconstruction {
        positions: state.positions.clone(),
        densities: state.densities(),
        u_left: state.u_left,
    }
}

impl DensityReconstruction {
    pub fn eval(&self, x: f64) -> f64 {
        // number of positions strictly below x
        let k = self.positions.partition_point(|p| *p < x);
        if k == 0 {
            self.u_left
        } else {
            self.densities[k - 1]
        }
    }

    /// `∫ u dx` over `[x_1, x_N]`.
    pub fn mass_between_ends(&self) -> f64 {
        self.positions
            .windows(2)
            .zip(&self.densities)
            .map(|(p, u)| u * (p[1] - p[0]))
            .sum()
    }

    /// Corner points `(x, u)` of the step function between `x_1` and `x_N`,
    /// suitable for line plots.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2 * self.positions.len());
        for (p, u) in self.positions.windows(2).zip(&self.densities) {
            out.push((p[0], *u));
            out.push((p[1], *u));
        }
        out
    }
}

/// CSV with columns `model,t,i,x,u`.
pub fn write_state_csv<W: Write>(mut out: W, tag: &str, state: &FtlState) -> io::Result<()> {
    writeln!(out, "model,t,i,x,u")?;
    for (i, x) in state.positions.iter().enumerate() {
        writeln!(out, "{tag},{:.16e},{i},{:.16e},{:.16e}", state.t, x, state.density(i))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn state(positions: Vec<f64>, ell: f64, u_last: f64) -> FtlState {
        FtlState {
            t: 0.0,
            ell,
            positions,
            u_left: u_last,
            u_last,
        }
    }

    #[test]
    fn constant_profile_gives_uniform_spacing() {
        let rho = DensityProfile::constant(0.5).unwrap();
        let s = discretize_density(&rho, 0.1, 0.0, 1.0).unwrap();
        for p in s.positions.windows(2) {
            assert_abs_diff_eq!(p[1] - p[0], 0.2, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(*s.positions.last().unwrap(), 1.0, epsilon = 1e-9);
        assert_eq!(s.u_last, 0.5);
    }

    #[test]
    fn box_profile_spacings() {
        let s = discretize_density(&DensityProfile::jam_box(), 0.06, -0.75, 1.0).unwrap();
        // 1.5 units of mass inside the box hold 25 vehicles, then one more
        // vehicle at the downstream edge before the next one passes b.
        assert_eq!(s.len(), 26);
        for i in 0..25 {
            assert_abs_diff_eq!(s.positions[i + 1] - s.positions[i], 0.06, epsilon = 1e-12);
        }
        let spaced = discretize_density(&DensityProfile::jam_box(), 0.06, -3.0, -1.0).unwrap();
        for p in spaced.positions.windows(2) {
            assert_abs_diff_eq!(p[1] - p[0], 1.2, epsilon = 1e-12);
        }
        assert!((0..s.len()).all(|i| s.density(i) <= 1.0 + 1e-12));
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(DensityProfile::new(vec![0.0], vec![0.0, 1.0]).is_err());
        assert!(DensityProfile::new(vec![0.0], vec![0.5, 1.5]).is_err());
        assert!(DensityProfile::new(vec![1.0, 0.0], vec![0.5, 0.5, 0.5]).is_err());
        assert!(discretize_density(&DensityProfile::jam_box(), 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn local_speeds() {
        let m = VelocityModel::linear();
        let jam = state(vec![0.0, 0.1, 0.2], 0.1, 0.05);
        assert_eq!(speed_local(&jam, 0, &m).unwrap(), 0.0);
        let free = state(vec![0.0, 2.0], 0.1, 0.05);
        assert_abs_diff_eq!(speed_local(&free, 0, &m).unwrap(), 0.95, epsilon = 1e-15);
        assert_abs_diff_eq!(speed_local(&free, 1, &m).unwrap(), 0.95, epsilon = 1e-15);
        assert!(speed_local(&free, 2, &m).is_err());
    }

    #[test]
    fn models_coincide_on_constant_density() {
        let m = VelocityModel::linear();
        let ell = 0.1;
        let s = state((0..30).map(|i| i as f64 * 0.25).collect(), ell, 0.4);
        let row = lagrangian_weights(Kernel::Exponential, 0.5, ell, 1e-12).unwrap();
        for i in 0..30 {
            let l = speed_local(&s, i, &m).unwrap();
            let e = speed_nonlocal_eulerian(&s, i, Kernel::Exponential, 0.5, &m).unwrap();
            let g = speed_nonlocal_lagrangian(&s, i, &row, &m).unwrap();
            assert_abs_diff_eq!(l, 0.6, epsilon = 1e-12);
            assert_abs_diff_eq!(e, 0.6, epsilon = 1e-12);
            assert_abs_diff_eq!(g, 0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_vehicle_means() {
        let m = VelocityModel::linear();
        // spacings ℓ and 2ℓ with equal weights: harmonic-mean density 2/3
        let u = [1.0, 0.5];
        assert_abs_diff_eq!(harmonic_mean_density(&[0.5, 0.5], &u), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(arithmetic_mean_density(&[0.5, 0.5], &u), 0.75, epsilon = 1e-15);

        let ell = 0.1;
        let s = state(vec![0.0, 0.1], ell, 0.5);
        let row = WeightRow::from_weights(0.1, ell, vec![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(
            speed_nonlocal_lagrangian(&s, 0, &row, &m).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );

        // box kernel reaching past both gaps: weights are the gap fractions
        let s = state(vec![0.0, 0.1, 0.3], ell, 0.5);
        let e = speed_nonlocal_eulerian(&s, 0, Kernel::Box, 0.4, &m).unwrap();
        let expected = 0.25 * 1.0 + 0.5 * 0.5 + 0.25 * 0.5;
        assert_abs_diff_eq!(e, 1.0 - expected, epsilon = 1e-15);
    }

    #[test]
    fn leader_uses_u_last() {
        let m = VelocityModel::linear();
        let s = state(vec![0.0, 0.3, 0.5], 0.1, 0.05);
        let row = lagrangian_weights(Kernel::Exponential, 0.5, 0.1, 1e-12).unwrap();
        assert_eq!(
            speed_nonlocal_eulerian(&s, 2, Kernel::Exponential, 0.5, &m).unwrap(),
            0.95
        );
        assert_eq!(speed_nonlocal_lagrangian(&s, 2, &row, &m).unwrap(), 0.95);
    }

    #[test]
    fn euler_step_cases() {
        let m = VelocityModel::linear();
        let jam = FtlState {
            u_last: 1.0,
            ..state(vec![0.0, 0.1, 0.2], 0.1, 1.0)
        };
        let next = euler_step(&jam, &FtlModel::Local, &m, 0.1).unwrap();
        assert_eq!(next.positions, jam.positions);

        let single = state(vec![3.0], 0.1, 0.05);
        let next = euler_step(&single, &FtlModel::Local, &m, 0.1).unwrap();
        assert_abs_diff_eq!(next.positions[0], 3.095, epsilon = 1e-15);

        // a follower faster than the gap allows trips the ordering check
        let fast = VelocityModel::custom("step", |u: f64| if u < 1.0 { 1.0 - u } else { 0.0 }, 1.0).unwrap();
        let bad = FtlState {
            u_last: 1.0,
            ..state(vec![0.0, 0.105, 0.205], 0.1, 1.0)
        };
        assert!(matches!(
            euler_step(&bad, &FtlModel::Local, &fast, 1.0),
            Err(Error::OrderingViolation { index: 0, .. })
        ));
        assert!(euler_step(&single, &FtlModel::Local, &m, 0.0).is_err());
    }

    #[test]
    fn reconstruction() {
        let s = state(vec![0.0, 0.2, 0.6, 1.0], 0.1, 0.05);
        let r = reconstruct_density(&s);
        assert_eq!(r.eval(-1.0), 0.05);
        assert_abs_diff_eq!(r.eval(0.1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.eval(0.2), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.eval(0.3), 0.25, epsilon = 1e-15);
        assert_eq!(r.eval(5.0), 0.05);
        // vehicle count between the ends
        assert_abs_diff_eq!(r.mass_between_ends() / s.ell, 3.0, epsilon = 1e-12);

        let c = state((0..5).map(|i| i as f64 * 0.2).collect(), 0.1, 0.5);
        let rc = reconstruct_density(&c);
        for x in [0.05, 0.3, 0.7] {
            assert_abs_diff_eq!(rc.eval(x), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn state_csv() {
        let s = state(vec![0.0, 0.5], 0.1, 0.05);
        let mut buf = Vec::new();
        write_state_csv(&mut buf, "local", &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("model,t,i,x,u\nlocal,0.0000000000000000e0,0,"));
        assert_eq!(text.lines().count(), 3);
    }
}
