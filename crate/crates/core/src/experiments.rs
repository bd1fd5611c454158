//! Drivers for the numerical experiments: FtL comparisons, the zero-filter
//! sweep against an Engquist–Osher reference, the filter study and the
//! scheme self-consistency check.

use crate::coordinates::{l1_between_traces, EulerianTrace, Field, StepFunction};
use crate::diagnostics::{bv_seminorm, exp_identity_residual, filtered_gap, rate_fit, zero_filter_bound, RateFit};
use crate::error::{invalid, Error, Result};
use crate::exec::ExecPolicy;
use crate::ftl::{discretize_density, simulate, DensityProfile, FtlModel, FtlState};
use crate::kernels::{lagrangian_weights, Kernel, WeightRow};
use crate::reference::{reference_dx, run_eo, EoFlux, EulerianGrid, EulerianSolution};
use crate::scheme::{run, BoundaryMode, LagrangianGrid, PairScheme, RunOptions, Trajectory};
use crate::velocity::VelocityModel;

/// Tail tolerance for weight rows; heavy-tailed kernels get a looser one so
/// that the row stays a manageable length.
pub fn default_tail_tol(kernel: Kernel) -> f64 {
    match kernel {
        Kernel::Cauchy => 1e-4,
        _ => 1e-12,
    }
}

/// Initial data for the Lagrangian schemes, built from the same vehicle
/// placement as the FtL models: one cell per vehicle, `dz = ℓ`.
#[derive(Debug, Clone)]
pub struct LagrangianSetup {
    pub vehicles: FtlState,
    pub y0: Vec<f64>,
    pub grid: LagrangianGrid,
    /// `x_1(0)`, the anchor of the Eulerian coordinates.
    pub x1_0: f64,
}

pub fn lagrangian_setup(
    profile: &DensityProfile,
    ell: f64,
    a: f64,
    b: f64,
    boundary: BoundaryMode,
) -> Result<LagrangianSetup> {
    let vehicles = discretize_density(profile, ell, a, b)?;
    // gaps recovered from positions can land an ulp below ℓ inside a jam
    let y0: Vec<f64> = vehicles.spacings().into_iter().map(|y| y.max(1.0)).collect();
    let grid = LagrangianGrid::new(ell, y0.len(), 1.0 / vehicles.u_left, 1.0 / vehicles.u_last)?
        .with_boundary(boundary)
        .with_origin(0.0);
    Ok(LagrangianSetup {
        x1_0: a,
        vehicles,
        y0,
        grid,
    })
}

/// Engquist–Osher solution on a window wide enough that nothing but the
/// far-field constants reaches its ends by `t_end`. Outside the window the
/// returned step function continues with the boundary states, which is
/// exact there.
pub fn eo_reference(
    profile: &DensityProfile,
    model: &VelocityModel,
    t_end: f64,
    dx: f64,
    policy: ExecPolicy,
) -> Result<(EulerianSolution, StepFunction)> {
    let flux = EoFlux::new(model.clone())?;
    let bps = profile.breakpoints();
    let reach = t_end * model.flux_speed_bound() + 0.1 + 4.0 * dx;
    let (lo, hi) = match (bps.first(), bps.last()) {
        (Some(l), Some(h)) => (l - reach, h + reach),
        _ => (-reach, reach),
    };
    let grid = EulerianGrid::new(lo, hi, dx)?;
    let rho0 = grid.project(profile);
    let sol = run_eo(&grid, &rho0, &flux, t_end, 0.9, policy)?;
    let step = StepFunction::new(grid.edges(), sol.rho.clone())?;
    Ok((sol, step))
}

/// Common parameters of the Lagrangian experiments.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub profile: DensityProfile,
    pub model: VelocityModel,
    pub ell: f64,
    pub a: f64,
    pub b: f64,
    pub t_end: f64,
    pub safety: f64,
    pub boundary: BoundaryMode,
    pub policy: ExecPolicy,
}

impl SweepConfig {
    /// The box data at vehicle length `ell`, observed at `t = 1.2` on a road
    /// long enough that free-flow vehicles remain upstream of the queue.
    pub fn jam_box(ell: f64) -> Self {
        Self {
            profile: DensityProfile::jam_box(),
            model: VelocityModel::linear(),
            ell,
            a: -2.5,
            b: 2.0,
            t_end: 1.2,
            safety: 0.9,
            boundary: BoundaryMode::Ghost,
            policy: ExecPolicy::default(),
        }
    }

    /// Move the first vehicle far enough upstream that, at `t_end`, at least
    /// six filter lengths of the upstream state remain behind every wave.
    /// The dynamics never look backwards, so this only widens the window on
    /// which gaps and errors are measured; without it the part of `y - w`
    /// behind the first vehicle would be cut off.
    pub fn with_upstream_reach(mut self, alpha: f64) -> Self {
        let first_break = self.profile.breakpoints().first().copied().unwrap_or(self.a);
        let rho_left = self.profile.values()[0];
        let reach = first_break - t_closing(&self.model, rho_left) * self.t_end - 6.0 * alpha / rho_left;
        self.a = self.a.min(reach);
        self
    }

    pub fn setup(&self) -> Result<LagrangianSetup> {
        lagrangian_setup(&self.profile, self.ell, self.a, self.b, self.boundary)
    }

    pub fn run_options(&self, record_every: usize) -> RunOptions {
        RunOptions {
            t_end: self.t_end,
            safety: self.safety,
            record_every,
            policy: self.policy,
        }
    }

    fn row(&self, kernel: Kernel, alpha: f64) -> Result<WeightRow> {
        lagrangian_weights(kernel, alpha, self.ell, default_tail_tol(kernel))
    }

    /// Run the coupled scheme for one kernel and filter size.
    pub fn run(&self, kernel: Kernel, alpha: f64, record_every: usize) -> Result<(LagrangianSetup, Trajectory)> {
        let setup = self.setup()?;
        let row = self.row(kernel, alpha)?;
        let traj = run(
            &setup.y0,
            &setup.grid,
            &row,
            &self.model,
            &self.run_options(record_every),
        )?;
        Ok((setup, traj))
    }
}

/// Rate at which the first vehicle can close on a wave travelling upstream.
fn t_closing(model: &VelocityModel, rho_left: f64) -> f64 {
    model.speed(rho_left) + model.flux_speed_bound()
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::Empty("alpha list"));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(invalid("alpha", format!("filter sizes must be positive, got {a}")));
    }
    Ok(())
}

/// One row of the zero-filter table.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroFilterRow {
    pub alpha: f64,
    /// `‖1/w - ρ‖_{L1}` on the Lagrangian partition.
    pub l1_w: f64,
    /// `‖1/y - ρ‖_{L1}`.
    pub l1_y: f64,
    /// `Δz Σ |y - w|`.
    pub gap: f64,
    /// Theoretical bound `2 sqrt(2 T sup W' BV(y0) α)`.
    pub bound: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct ZeroFilterReport {
    pub rows: Vec<ZeroFilterRow>,
    /// Fitted log-log slope of `l1_w`, when at least two sizes were run.
    pub fit: Option<RateFit>,
    pub reference_cells: usize,
    pub bv_y0: f64,
    /// Final traces `(α, 1/w, 1/y)` for plotting.
    pub traces: Vec<(f64, EulerianTrace, EulerianTrace)>,
    pub reference: EulerianSolution,
}

/// Compare the nonlocal scheme with the local entropy solution for each
/// filter size. Rows are sorted by decreasing `α`.
pub fn zero_filter(cfg: &SweepConfig, kernel: Kernel, alphas: &[f64], ref_dx: Option<f64>) -> Result<ZeroFilterReport> {
    check_alphas(alphas)?;
    let dx = ref_dx.unwrap_or_else(|| reference_dx(cfg.ell));
    let (reference, rho_ref) = eo_reference(&cfg.profile, &cfg.model, cfg.t_end, dx, cfg.policy)?;
    let setup = cfg.setup()?;
    let bv_y0 = bv_seminorm(&setup.y0);
    let (w_min, _) = setup
        .y0
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    let sup_w_prime = cfg.model.w_prime(w_min);

    let mut sorted = alphas.to_vec();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let results = cfg.policy.map(&sorted, |&alpha| -> Result<_> {
        let row = cfg.row(kernel, alpha)?;
        let traj = run(&setup.y0, &setup.grid, &row, &cfg.model, &cfg.run_options(0))?;
        let last = traj.last();
        let tw = EulerianTrace::from_state(last, setup.x1_0, cfg.ell, Field::Filtered);
        let ty = EulerianTrace::from_state(last, setup.x1_0, cfg.ell, Field::Raw);
        let row = ZeroFilterRow {
            alpha,
            l1_w: l1_between_traces(&tw, &rho_ref),
            l1_y: l1_between_traces(&ty, &rho_ref),
            gap: filtered_gap(&last.y, &last.w, cfg.ell)?,
            bound: zero_filter_bound(cfg.t_end, sup_w_prime, bv_y0, alpha),
            steps: traj.steps(),
        };
        Ok((row, tw, ty))
    });
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for r in results {
        let (row, tw, ty) = r?;
        traces.push((row.alpha, tw, ty));
        rows.push(row);
    }
    let fit = if rows.len() >= 2 {
        Some(rate_fit(&rows.iter().map(|r| (r.alpha, r.l1_w)).collect::<Vec<_>>())?)
    } else {
        None
    };
    Ok(ZeroFilterReport {
        rows,
        fit,
        reference_cells: reference.grid.n_cells,
        bv_y0,
        traces,
        reference,
    })
}

/// One kernel/filter-size entry of the filter study.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStudyRow {
    pub kernel: Kernel,
    pub alpha: f64,
    pub gap: f64,
    /// Only for the exponential kernel.
    pub identity_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FilterStudy {
    pub rows: Vec<FilterStudyRow>,
    /// Kernels whose gap at the smallest `α` is more than half the gap at
    /// the largest.
    pub plateaued: Vec<Kernel>,
}

/// `filtered_gap` at `t_end` for every kernel and filter size.
pub fn filter_study(cfg: &SweepConfig, kernels: &[Kernel], alphas: &[f64]) -> Result<FilterStudy> {
    check_alphas(alphas)?;
    if kernels.is_empty() {
        return Err(Error::Empty("kernel list"));
    }
    let setup = cfg.setup()?;
    let mut alphas = alphas.to_vec();
    alphas.sort_by(|x, y| y.total_cmp(x));
    let jobs: Vec<(Kernel, f64)> = kernels
        .iter()
        .flat_map(|k| alphas.iter().map(move |a| (*k, *a)))
        .collect();
    let results = cfg.policy.map(&jobs, |&(kernel, alpha)| -> Result<FilterStudyRow> {
        let row = cfg.row(kernel, alpha)?;
        let traj = run(&setup.y0, &setup.grid, &row, &cfg.model, &cfg.run_options(0))?;
        let last = traj.last();
        let identity_residual = match kernel {
            Kernel::Exponential => Some(exp_identity_residual(&last.w, &last.y, alpha, cfg.ell)?),
            _ => None,
        };
        Ok(FilterStudyRow {
            kernel,
            alpha,
            gap: filtered_gap(&last.y, &last.w, cfg.ell)?,
            identity_residual,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut plateaued = Vec::new();
    for k in kernels {
        let gaps: Vec<f64> = rows.iter().filter(|r| r.kernel == *k).map(|r| r.gap).collect();
        if gaps.len() >= 2 && gaps[gaps.len() - 1] > 0.5 * gaps[0] {
            plateaued.push(*k);
        }
    }
    Ok(FilterStudy { rows, plateaued })
}

/// Largest `|filter(y^n) - w^n|` over a run, where `w^n` is advanced by the
/// filtered scheme alone using the same time steps as the coupled run.
pub fn scheme_consistency(cfg: &SweepConfig, kernel: Kernel, alpha: f64) -> Result<f64> {
    let setup = cfg.setup()?;
    let row = cfg.row(kernel, alpha)?;
    let traj = run(&setup.y0, &setup.grid, &row, &cfg.model, &cfg.run_options(1))?;
    let scheme = PairScheme::new(&row, &cfg.model, &setup.grid).with_policy(cfg.policy);
    let mut w = scheme.filter(&setup.y0);
    let mut worst = 0.0f64;
    for (state, &(dt, _)) in traj.states[1..].iter().zip(&traj.first_cell_log) {
        w = scheme.step_w(&w, dt / cfg.ell)?;
        let refiltered = scheme.filter(&state.y);
        for (a, b) in refiltered.iter().zip(&w) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Final states and centroids of the three FtL models.
#[derive(Debug, Clone)]
pub struct FtlComparison {
    pub initial: FtlState,
    /// `(model tag, final state)` in the order local, eulerian, lagrangian.
    pub finals: Vec<(&'static str, FtlState)>,
}

impl FtlComparison {
    pub fn centroid(&self, tag: &str) -> Option<f64> {
        self.finals.iter().find(|(t, _)| *t == tag).map(|(_, s)| s.centroid())
    }
}

#[derive(Debug, Clone)]
pub struct FtlConfig {
    pub profile: DensityProfile,
    pub model: VelocityModel,
    pub kernel: Kernel,
    pub alpha: f64,
    pub ell: f64,
    pub a: f64,
    pub b: f64,
    pub t_end: f64,
    /// Defaults to `ℓ`.
    pub dt: Option<f64>,
    pub policy: ExecPolicy,
}

impl FtlConfig {
    /// The box data on `[-1, 3]`, observed at `t = 1.4` with `α = 1/2`.
    pub fn jam_box(ell: f64) -> Self {
        Self {
            profile: DensityProfile::jam_box(),
            model: VelocityModel::linear(),
            kernel: Kernel::Exponential,
            alpha: 0.5,
            ell,
            a: -1.0,
            b: 3.0,
            t_end: 1.4,
            dt: None,
            policy: ExecPolicy::default(),
        }
    }
}

pub fn compare_ftl(cfg: &FtlConfig) -> Result<FtlComparison> {
    let initial = discretize_density(&cfg.profile, cfg.ell, cfg.a, cfg.b)?;
    let dt = cfg.dt.unwrap_or(cfg.ell);
    let models = [
        FtlModel::Local,
        FtlModel::EulerianNonlocal {
            kernel: cfg.kernel,
            alpha: cfg.alpha,
        },
        FtlModel::lagrangian(cfg.kernel, cfg.alpha, cfg.ell, default_tail_tol(cfg.kernel))?,
    ];
    let finals = cfg.policy.map(&models, |m| {
        simulate(&initial, m, &cfg.model, dt, cfg.t_end, ExecPolicy::Sequential).map(|s| (m.tag(), s))
    });
    Ok(FtlComparison {
        initial,
        finals: finals.into_iter().collect::<Result<Vec<_>>>()?,
    })
}
