//! The monotone scheme for the filtered spacing `w` and the coupled upwind
//! scheme for the spacing `y` itself.
//!
//! Cells are indexed in the driving direction; cell `i` only ever looks at
//! cells `j >= i` (the road ahead). The window is finite, so everything past
//! the last cell is represented by a single far-field spacing, selected by
//! [`BoundaryMode`]. No upstream boundary state is needed by the update.

use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::exec::{dot, ExecPolicy};
use crate::kernels::WeightRow;
use crate::velocity::VelocityModel;

/// Slack allowed on the Courant number before a step is refused.
const CFL_SLACK: f64 = 1e-12;

/// How the scheme sees the road past the end of the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// A fixed far-field spacing `y_right` continues forever.
    #[default]
    Ghost,
    /// All kernel mass past the window lands on the last cell, i.e. the
    /// last cell's current value is continued forever.
    FoldTail,
}

impl std::str::FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ghost" => Ok(BoundaryMode::Ghost),
            "fold" | "fold-tail" | "foldtail" => Ok(BoundaryMode::FoldTail),
            other => Err(invalid("boundary", format!("unknown boundary mode `{other}`"))),
        }
    }
}

/// Uniform Lagrangian grid: one cell per vehicle, all lengths in units of
/// the vehicle length so that a spacing `y = 1` is bumper-to-bumper.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianGrid {
    pub dz: f64,
    pub n_cells: usize,
    pub y_left: f64,
    pub y_right: f64,
    pub z_origin: f64,
    pub boundary: BoundaryMode,
}

impl LagrangianGrid {
    pub fn new(dz: f64, n_cells: usize, y_left: f64, y_right: f64) -> Result<Self> {
        if !(dz > 0.0 && dz.is_finite()) {
            return Err(invalid("dz", format!("must be positive, got {dz}")));
        }
        if n_cells == 0 {
            return Err(Error::Empty("grid"));
        }
        for (name, y) in [("y_left", y_left), ("y_right", y_right)] {
            if !(y >= 1.0 && y.is_finite()) {
                return Err(invalid(name, format!("boundary spacing must be >= 1, got {y}")));
            }
        }
        Ok(Self {
            dz,
            n_cells,
            y_left,
            y_right,
            z_origin: 0.0,
            boundary: BoundaryMode::Ghost,
        })
    }

    pub fn with_boundary(mut self, boundary: BoundaryMode) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_origin(mut self, z_origin: f64) -> Self {
        self.z_origin = z_origin;
        self
    }

    /// Lagrangian coordinate of cell `i`.
    pub fn z(&self, i: usize) -> f64 {
        self.z_origin + i as f64 * self.dz
    }

    /// Far-field value used past the window for the sequence `v`.
    fn far_field(&self, v: &[f64]) -> f64 {
        match self.boundary {
            BoundaryMode::Ghost => self.y_right,
            BoundaryMode::FoldTail => *v.last().expect("non-empty sequence"),
        }
    }
}

/// The coupled arrays at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub t: f64,
    /// Spacings `y_i >= 1` (road length per vehicle over vehicle length).
    pub y: Vec<f64>,
    /// Filtered spacings `w_i`, the downstream average of `y`.
    pub w: Vec<f64>,
    /// Distance travelled by the first vehicle since `t = 0`, accumulated
    /// one step at a time as `Σ Δt V(1/y_1)`.
    pub anchor: f64,
}

impl PairState {
    fn range(v: &[f64]) -> (f64, f64) {
        v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
    }

    /// `(min w, max w)`.
    pub fn w_range(&self) -> (f64, f64) {
        Self::range(&self.w)
    }

    pub fn y_range(&self) -> (f64, f64) {
        Self::range(&self.y)
    }
}

/// Largest stable time step: `safety · dz / sup W'` over `[w_min, w_max]`.
pub fn cfl_dt(model: &VelocityModel, w_min: f64, w_max: f64, dz: f64, safety: f64) -> Result<f64> {
    // filtered values can sit an ulp below one after averaging a jam
    if !(w_min >= 1.0 - 1e-12 && w_min <= w_max) {
        return Err(invalid(
            "w_min",
            format!("need 1 <= w_min <= w_max, got [{w_min}, {w_max}]"),
        ));
    }
    if !(dz > 0.0) {
        return Err(invalid("dz", format!("must be positive, got {dz}")));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(invalid("safety", format!("must lie in (0, 1], got {safety}")));
    }
    let sup = model.sup_w_prime(w_min, w_max);
    if sup <= 0.0 {
        // W is constant: any λ is admissible, cap at one cell per unit time.
        return Ok(dz);
    }
    Ok(safety * dz / sup)
}

/// `λ · sup W'` over the range of `w` together with its far-field value.
pub fn courant_number(model: &VelocityModel, w: &[f64], far: f64, lambda: f64) -> f64 {
    let (lo, hi) = PairState::range(w);
    lambda * model.sup_w_prime(lo.min(far), hi.max(far))
}

/// Averaging operator, executing on a given policy.
///
/// `out_i = Σ_k I_k v_{i+k}`, reading `far` for every index past the window.
pub fn filter_into(policy: ExecPolicy, v: &[f64], row: &WeightRow, far: f64, out: &mut [f64]) {
    let n = v.len();
    assert_eq!(out.len(), n);
    let weights = row.weights();
    let suffix = row.suffix();
    let span = weights.len();
    policy.fill(out, |i| {
        let remaining = n - i;
        let m = span.min(remaining);
        let mut s = dot(&weights[..m], &v[i..i + m]);
        if remaining < span {
            s += suffix[remaining] * far;
        }
        s
    });
}

/// Filtered sequence `w_i = Σ_{j >= i} Φ_{ij} y_j`; indices past the window
/// read `y_right`.
pub fn filter(y: &[f64], row: &WeightRow, y_right: f64) -> Result<Vec<f64>> {
    filter_with(ExecPolicy::default(), y, row, y_right)
}

pub fn filter_with(policy: ExecPolicy, y: &[f64], row: &WeightRow, y_right: f64) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::Empty("spacing sequence"));
    }
    let mut out = vec![0.0; y.len()];
    filter_into(policy, y, row, y_right, &mut out);
    Ok(out)
}

/// Bundles the ingredients every step needs.
#[derive(Debug, Clone)]
pub struct PairScheme<'a> {
    pub row: &'a WeightRow,
    pub model: &'a VelocityModel,
    pub grid: &'a LagrangianGrid,
    pub policy: ExecPolicy,
}

impl<'a> PairScheme<'a> {
    pub fn new(row: &'a WeightRow, model: &'a VelocityModel, grid: &'a LagrangianGrid) -> Self {
        Self {
            row,
            model,
            grid,
            policy: ExecPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: ExecPolicy) -> Self {
        self.policy = policy;
        self
    }

    fn check_cfl(&self, w: &[f64], far: f64, lambda: f64) -> Result<()> {
        let courant = courant_number(self.model, w, far, lambda);
        if !(lambda >= 0.0) || courant > 1.0 + CFL_SLACK {
            return Err(Error::CflViolation { courant });
        }
        Ok(())
    }

    /// Filtered spacing of `y` on this grid.
    pub fn filter(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        filter_into(self.policy, y, self.row, self.grid.far_field(y), &mut out);
        out
    }

    /// One step of the scheme for `w`:
    /// `w_i += λ (Ŵ_{i+1/2} - Ŵ_{i-1/2})`, `Ŵ_{i-1/2} = Σ_{j>=i} Φ_{ij} W(w_j)`.
    pub fn step_w(&self, w: &[f64], lambda: f64) -> Result<Vec<f64>> {
        if w.is_empty() {
            return Err(Error::Empty("filtered sequence"));
        }
        let far = self.grid.far_field(w);
        self.check_cfl(w, far, lambda)?;
        Ok(self.step_w_unchecked(w, lambda))
    }

    /// [`step_w`](Self::step_w) without the CFL guard. Used to demonstrate
    /// what goes wrong when the time step is too large.
    pub fn step_w_unchecked(&self, w: &[f64], lambda: f64) -> Vec<f64> {
        let n = w.len();
        let far = self.grid.far_field(w);
        let far_flux = self.model.w_of(far);
        let fluxes: Vec<f64> = w.iter().map(|&x| self.model.w_of(x)).collect();
        let mut averaged = vec![0.0; n];
        filter_into(self.policy, &fluxes, self.row, far_flux, &mut averaged);
        (0..n)
            .map(|i| {
                let ahead = if i + 1 < n { averaged[i + 1] } else { far_flux };
                w[i] + lambda * (ahead - averaged[i])
            })
            .collect()
    }

    /// One step of the coupled scheme: upwind update of `y` driven by the
    /// current filtered field, then refilter.
    pub fn step_pair(&self, state: &PairState, dt: f64) -> Result<PairState> {
        let lambda = dt / self.grid.dz;
        let far_w = self.grid.far_field(&state.w);
        self.check_cfl(&state.w, far_w, lambda)?;
        let n = state.y.len();
        let model = self.model;
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let ahead = if i + 1 < n { state.w[i + 1] } else { far_w };
                state.y[i] + lambda * (model.w_of(ahead) - model.w_of(state.w[i]))
            })
            .collect();
        let w = self.filter(&y);
        let anchor = state.anchor + dt * model.speed(1.0 / y[0]);
        Ok(PairState {
            t: state.t + dt,
            y,
            w,
            anchor,
        })
    }

    /// Initial state with `w = filter(y0)`. Spacings below one are rejected.
    pub fn initial_state(&self, y0: &[f64]) -> Result<PairState> {
        validate_spacings(y0)?;
        if y0.len() != self.grid.n_cells {
            return Err(Error::LengthMismatch {
                left: y0.len(),
                right: self.grid.n_cells,
            });
        }
        Ok(PairState {
            t: 0.0,
            y: y0.to_vec(),
            w: self.filter(y0),
            anchor: 0.0,
        })
    }

    /// Time step allowed by the CFL condition for the current filtered range.
    pub fn stable_dt(&self, state: &PairState, safety: f64) -> Result<f64> {
        let far = self.grid.far_field(&state.w);
        let (lo, hi) = state.w_range();
        cfl_dt(self.model, lo.min(far), hi.max(far), self.grid.dz, safety)
    }
}

fn validate_spacings(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("initial spacings"));
    }
    if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(**v >= 1.0 && v.is_finite())) {
        return Err(invalid("y0", format!("spacing must be >= 1, got {v} at cell {i}")));
    }
    Ok(())
}

/// Free-function form of [`PairScheme::step_w`].
pub fn step_w(
    w: &[f64],
    row: &WeightRow,
    model: &VelocityModel,
    lambda: f64,
    grid: &LagrangianGrid,
) -> Result<Vec<f64>> {
    PairScheme::new(row, model, grid).step_w(w, lambda)
}

/// Free-function form of [`PairScheme::step_pair`]; `lambda = dt / dz`.
pub fn step_pair(
    state: &PairState,
    row: &WeightRow,
    model: &VelocityModel,
    lambda: f64,
    grid: &LagrangianGrid,
) -> Result<PairState> {
    PairScheme::new(row, model, grid).step_pair(state, lambda * grid.dz)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub t_end: f64,
    /// Fraction of the CFL limit used for each step.
    pub safety: f64,
    /// Record every `record_every`-th step (the initial and final states are
    /// always recorded). Zero records only those two.
    pub record_every: usize,
    pub policy: ExecPolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            safety: 0.9,
            record_every: 0,
            policy: ExecPolicy::default(),
        }
    }
}

/// Recorded states of a run plus the step log needed to rebuild Eulerian
/// positions afterwards.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<PairState>,
    /// `(Δt, y_1)` after every step, in order.
    pub first_cell_log: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn last(&self) -> &PairState {
        self.states.last().expect("trajectory always holds the initial state")
    }

    pub fn steps(&self) -> usize {
        self.first_cell_log.len()
    }
}

/// Advance `y0` to `t_end` with CFL-limited steps; the last step is
/// shortened to land on `t_end` exactly.
pub fn run(
    y0: &[f64],
    grid: &LagrangianGrid,
    row: &WeightRow,
    model: &VelocityModel,
    opts: &RunOptions,
) -> Result<Trajectory> {
    run_observed(y0, grid, row, model, opts, |_, _| Ok(()))
}

/// As [`run`], calling `observe(previous, next)` after every step.
pub fn run_observed<F>(
    y0: &[f64],
    grid: &LagrangianGrid,
    row: &WeightRow,
    model: &VelocityModel,
    opts: &RunOptions,
    mut observe: F,
) -> Result<Trajectory>
where
    F: FnMut(&PairState, &PairState) -> Result<()>,
{
    if !(opts.t_end >= 0.0 && opts.t_end.is_finite()) {
        return Err(invalid("t_end", format!("must be >= 0, got {}", opts.t_end)));
    }
    let scheme = PairScheme::new(row, model, grid).with_policy(opts.policy);
    let mut state = scheme.initial_state(y0)?;
    let mut states = vec![state.clone()];
    let mut log = Vec::new();
    let mut step = 0usize;
    while state.t < opts.t_end {
        let mut dt = scheme.stable_dt(&state, opts.safety)?;
        let last = state.t + dt >= opts.t_end * (1.0 - 1e-14);
        if last {
            dt = opts.t_end - state.t;
        }
        let mut next = scheme.step_pair(&state, dt)?;
        if last {
            next.t = opts.t_end;
        }
        observe(&state, &next)?;
        step += 1;
        log.push((dt, next.y[0]));
        state = next;
        if last || (opts.record_every > 0 && step.is_multiple_of(opts.record_every)) {
            states.push(state.clone());
        }
    }
    Ok(Trajectory {
        states,
        first_cell_log: log,
    })
}

/// CSV with columns `t,i,z,y,w`, one row per recorded cell, 17 significant digits.
pub fn write_trajectory_csv<W: Write>(mut out: W, traj: &Trajectory, grid: &LagrangianGrid) -> io::Result<()> {
    writeln!(out, "t,i,z,y,w")?;
    for s in &traj.states {
        for (i, (y, w)) in s.y.iter().zip(&s.w).enumerate() {
            writeln!(out, "{:.16e},{},{:.16e},{:.16e},{:.16e}", s.t, i, grid.z(i), y, w)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{lagrangian_weights, Kernel};
    use approx::assert_abs_diff_eq;

    fn linear() -> VelocityModel {
        VelocityModel::linear()
    }

    #[test]
    fn cfl_examples() {
        let m = linear();
        assert_abs_diff_eq!(cfl_dt(&m, 1.0, 20.0, 0.01, 1.0).unwrap(), 0.01, epsilon = 1e-18);
        assert_abs_diff_eq!(cfl_dt(&m, 1.0, 20.0, 0.01, 0.5).unwrap(), 0.005, epsilon = 1e-18);
        assert_abs_diff_eq!(
            cfl_dt(&m, 2.0, 20.0, 0.01, 0.7).unwrap(),
            4.0 * 0.7 * 0.01,
            epsilon = 1e-15
        );
        assert!(cfl_dt(&m, 0.5, 2.0, 0.01, 1.0).is_err());
        assert!(cfl_dt(&m, 1.0, 2.0, 0.01, 1.5).is_err());
    }

    #[test]
    fn constant_w_law_caps_dt() {
        let flat = VelocityModel::custom("flat", |_| 0.0, 0.0).unwrap();
        assert_eq!(cfl_dt(&flat, 1.0, 2.0, 0.3, 0.5).unwrap(), 0.3);
    }

    #[test]
    fn filter_examples() {
        let row = WeightRow::from_weights(1.0, 1.0, vec![0.75, 0.25]).unwrap();
        assert_eq!(filter(&[1.0, 2.0], &row, 2.0).unwrap(), vec![1.25, 2.0]);
        let id = WeightRow::identity(0.1);
        assert_eq!(filter(&[1.0, 3.0, 2.0], &id, 9.0).unwrap(), vec![1.0, 3.0, 2.0]);
        let exp = lagrangian_weights(Kernel::Exponential, 0.3, 0.1, 1e-12).unwrap();
        for v in filter(&[4.0; 10], &exp, 4.0).unwrap() {
            assert_abs_diff_eq!(v, 4.0, epsilon = 1e-14);
        }
        assert!(filter(&[], &row, 1.0).is_err());
    }

    #[test]
    fn step_w_upwind_example() {
        let grid = LagrangianGrid::new(0.1, 2, 1.0, 2.0).unwrap();
        let id = WeightRow::identity(0.1);
        let next = step_w(&[1.0, 2.0], &id, &linear(), 0.5, &grid).unwrap();
        assert_abs_diff_eq!(next[0], 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(next[1], 2.0, epsilon = 1e-15);
        // two-cell oracle written out by hand
        let w_of = |w: f64| 1.0 - 1.0 / w;
        assert_eq!(next[0], 1.0 + 0.5 * (w_of(2.0) - w_of(1.0)));
    }

    #[test]
    fn constants_are_fixed_points() {
        let grid = LagrangianGrid::new(0.01, 50, 3.0, 3.0).unwrap();
        let row = lagrangian_weights(Kernel::Triangular, 0.1, 0.01, 1e-12).unwrap();
        let next = step_w(&vec![3.0; 50], &row, &linear(), 1.0, &grid).unwrap();
        for v in next {
            assert_abs_diff_eq!(v, 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn step_pair_two_cell_example() {
        let grid = LagrangianGrid::new(1.0, 2, 1.0, 2.0).unwrap();
        let row = WeightRow::from_weights(1.0, 1.0, vec![0.75, 0.25]).unwrap();
        let model = linear();
        let scheme = PairScheme::new(&row, &model, &grid);
        let s0 = scheme.initial_state(&[1.0, 2.0]).unwrap();
        assert_eq!(s0.w, vec![1.25, 2.0]);
        let s1 = step_pair(&s0, &row, &model, 0.5, &grid).unwrap();
        assert_abs_diff_eq!(s1.y[0], 1.15, epsilon = 1e-15);
        assert_abs_diff_eq!(s1.y[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn cfl_violation_is_refused() {
        let grid = LagrangianGrid::new(0.1, 3, 1.0, 1.0).unwrap();
        let id = WeightRow::identity(0.1);
        let err = step_w(&[1.0, 1.0, 1.0], &id, &linear(), 1.2, &grid).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
    }

    #[test]
    fn spacings_below_one_rejected() {
        let grid = LagrangianGrid::new(0.1, 2, 1.0, 1.0).unwrap();
        let id = WeightRow::identity(0.1);
        let m = linear();
        assert!(PairScheme::new(&id, &m, &grid).initial_state(&[1.0, 0.9]).is_err());
        assert!(LagrangianGrid::new(0.1, 2, 0.5, 1.0).is_err());
    }

    #[test]
    fn run_lands_on_t_end() {
        let grid = LagrangianGrid::new(0.05, 40, 1.0, 4.0).unwrap();
        let row = lagrangian_weights(Kernel::Exponential, 0.1, 0.05, 1e-12).unwrap();
        let y0: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 4.0 }).collect();
        let opts = RunOptions {
            t_end: 0.37,
            record_every: 3,
            ..Default::default()
        };
        let traj = run(&y0, &grid, &row, &linear(), &opts).unwrap();
        assert_eq!(traj.last().t, 0.37);
        assert_eq!(traj.states[0].t, 0.0);

        let zero = RunOptions {
            t_end: 0.0,
            ..Default::default()
        };
        let traj = run(&y0, &grid, &row, &linear(), &zero).unwrap();
        assert_eq!(traj.states.len(), 1);
    }

    #[test]
    fn constant_data_stay_constant() {
        let grid = LagrangianGrid::new(0.05, 30, 2.5, 2.5).unwrap();
        let row = lagrangian_weights(Kernel::Exponential, 0.2, 0.05, 1e-12).unwrap();
        let opts = RunOptions {
            t_end: 0.5,
            record_every: 1,
            ..Default::default()
        };
        let traj = run(&[2.5; 30], &grid, &row, &linear(), &opts).unwrap();
        for s in &traj.states {
            for (y, w) in s.y.iter().zip(&s.w) {
                assert_abs_diff_eq!(*y, 2.5, epsilon = 1e-13);
                assert_abs_diff_eq!(*w, 2.5, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn fold_tail_matches_ghost_when_right_edge_is_flat() {
        let n = 60;
        let y0: Vec<f64> = (0..n).map(|i| if (20..35).contains(&i) { 1.0 } else { 5.0 }).collect();
        let row = lagrangian_weights(Kernel::Exponential, 0.05, 0.01, 1e-12).unwrap();
        let ghost = LagrangianGrid::new(0.01, n, 5.0, 5.0).unwrap();
        let fold = ghost.clone().with_boundary(BoundaryMode::FoldTail);
        let opts = RunOptions {
            t_end: 0.1,
            ..Default::default()
        };
        let a = run(&y0, &ghost, &row, &linear(), &opts).unwrap();
        let b = run(&y0, &fold, &row, &linear(), &opts).unwrap();
        for (x, y) in a.last().w.iter().zip(&b.last().w) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let grid = LagrangianGrid::new(0.5, 2, 1.0, 1.0).unwrap();
        let id = WeightRow::identity(0.5);
        let opts = RunOptions {
            t_end: 0.0,
            ..Default::default()
        };
        let traj = run(&[1.0, 1.5], &grid, &id, &linear(), &opts).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj, &grid).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,i,z,y,w"));
        assert_eq!(
            lines.nth(1),
            Some("0.0000000000000000e0,1,5.0000000000000000e-1,1.5000000000000000e0,1.5000000000000000e0")
        );
    }
}
