//! Eulerian positions for Lagrangian states, and step-function utilities to
//! compare them with Eulerian solutions.

use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::scheme::{PairState, Trajectory};
use crate::velocity::VelocityModel;

/// Which Lagrangian field a trace carries, as a density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    /// `1/w`
    Filtered,
    /// `1/y`
    Raw,
}

/// A piecewise-constant density on the Lagrangian partition: `values[i]`
/// holds on `[xi[i], xi[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerianTrace {
    pub t: f64,
    pub xi: Vec<f64>,
    pub values: Vec<f64>,
}

impl EulerianTrace {
    pub fn from_state(state: &PairState, x1_0: f64, dz: f64, field: Field) -> Self {
        let xi = node_positions(x1_0 + state.anchor, &state.y, dz);
        let source = match field {
            Field::Filtered => &state.w,
            Field::Raw => &state.y,
        };
        Self {
            t: state.t,
            xi,
            values: source.iter().map(|v| 1.0 / v).collect(),
        }
    }

    /// `(ξ_i, value_i)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xi.iter().copied().zip(self.values.iter().copied())
    }
}

fn node_positions(first: f64, y: &[f64], dz: f64) -> Vec<f64> {
    let mut xi = Vec::with_capacity(y.len() + 1);
    let mut x = first;
    xi.push(x);
    for v in y {
        x += v * dz;
        xi.push(x);
    }
    xi
}

/// Positions `ξ_1, …, ξ_{N+1}` of a state, with `ξ_1 = x1_0 + anchor`.
pub fn eulerian_positions(state: &PairState, x1_0: f64, dz: f64) -> Vec<f64> {
    node_positions(x1_0 + state.anchor, &state.y, dz)
}

/// Running anchor `Σ_m Δt_m V(1/y_1^m)` after each logged step.
pub fn anchors_from_log(log: &[(f64, f64)], model: &VelocityModel) -> Vec<f64> {
    let mut acc = 0.0;
    log.iter()
        .map(|&(dt, y1)| {
            acc += dt * model.speed(1.0 / y1);
            acc
        })
        .collect()
}

/// Eulerian positions at every recorded level of a trajectory, rebuilt from
/// the step log. Recorded states are matched to log entries by time.
pub fn eulerian_coordinates(traj: &Trajectory, model: &VelocityModel, x1_0: f64, dz: f64) -> Result<Vec<Vec<f64>>> {
    let anchors = anchors_from_log(&traj.first_cell_log, model);
    let mut t = 0.0;
    let times: Vec<f64> = traj
        .first_cell_log
        .iter()
        .map(|&(dt, _)| {
            t += dt;
            t
        })
        .collect();
    traj.states
        .iter()
        .map(|s| {
            let anchor = if s.t == 0.0 {
                0.0
            } else {
                let k = times
                    .iter()
                    .position(|&tk| (tk - s.t).abs() <= 1e-12 * s.t.max(1.0))
                    .ok_or_else(|| invalid("trajectory", format!("no logged step reaches t = {}", s.t)))?;
                anchors[k]
            };
            Ok(node_positions(x1_0 + anchor, &s.y, dz))
        })
        .collect()
}

/// Left-closed step function: `values[k]` on `[nodes[k], nodes[k+1])`, the
/// first value to the left of the grid and the last one to the right.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Empty("step-function grid"));
        }
        if nodes.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: nodes.len(),
                right: values.len(),
            });
        }
        if nodes.windows(2).any(|p| !(p[1] >= p[0])) {
            return Err(invalid("nodes", "must be sorted"));
        }
        Ok(Self { nodes, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.nodes.partition_point(|n| *n <= x);
        self.values[k.saturating_sub(1)]
    }
}

/// One-off evaluation of a left-closed step function.
pub fn sample_step_function(grid_x: &[f64], values: &[f64], query_x: f64) -> Result<f64> {
    if grid_x.is_empty() {
        return Err(Error::Empty("step-function grid"));
    }
    if grid_x.len() != values.len() {
        return Err(Error::LengthMismatch {
            left: grid_x.len(),
            right: values.len(),
        });
    }
    let k = grid_x.partition_point(|n| *n <= query_x);
    Ok(values[k.saturating_sub(1)])
}

/// `Σ_i |value_i - ρ(ξ_i)| (ξ_{i+1} - ξ_i)`.
pub fn l1_between_traces(trace: &EulerianTrace, reference: &StepFunction) -> f64 {
    trace
        .xi
        .windows(2)
        .zip(&trace.values)
        .map(|(p, v)| (v - reference.eval(p[0])).abs() * (p[1] - p[0]))
        .sum()
}

/// CSV with columns `t,xi,rho`; the last node carries no value and is skipped.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &EulerianTrace) -> io::Result<()> {
    writeln!(out, "t,xi,rho")?;
    for (x, v) in trace.points() {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", trace.t, x, v)?;
    }
    Ok(())
}
