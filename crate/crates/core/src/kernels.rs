//! Averaging kernels and the quadrature weights built from them.
//!
//! A kernel is a non-increasing density `Φ` on `[0, ∞)` with unit mass. The
//! scaled kernel `Φ_α(z) = Φ(z/α)/α` averages a quantity over the stretch of
//! road *ahead* of a point. Weights are always built from the exact
//! cumulative distribution of the family, never from numerical integration,
//! so that weight rows are bit-stable across platforms.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Default tail mass at which a weight row is truncated.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Hard cap on the length of a truncated weight row.
pub const DEFAULT_MAX_WEIGHTS: usize = 1 << 24;

/// The five kernel families used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    /// `e^{-z}`
    Exponential,
    /// `2 max(1 - z, 0)`
    Triangular,
    /// indicator of `(0, 1)`
    Box,
    /// `(4/π) (1 + z²)^{-2}`
    RationalSquared,
    /// `(2/π) (1 + z²)^{-1}`; infinite first moment
    Cauchy,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [
        Kernel::Exponential,
        Kernel::Triangular,
        Kernel::Box,
        Kernel::RationalSquared,
        Kernel::Cauchy,
    ];

    /// Short name used in configs and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Exponential => "exp",
            Kernel::Triangular => "tri",
            Kernel::Box => "box",
            Kernel::RationalSquared => "rat2",
            Kernel::Cauchy => "cauchy",
        }
    }

    /// Continuous with a finite first moment. Box (jump at 1) and Cauchy
    /// (heavy tail) fall outside the convergence theory but are still usable.
    pub fn theory_covered(self) -> bool {
        !matches!(self, Kernel::Box | Kernel::Cauchy)
    }

    pub fn value(self, z: f64) -> Result<f64> {
        check_nonnegative(z)?;
        Ok(self.density(z))
    }

    pub fn cdf(self, z: f64) -> Result<f64> {
        check_nonnegative(z)?;
        Ok(self.cumulative(z))
    }

    /// Classical derivative `Φ'(z)`; the box kernel has none.
    pub fn derivative(self, z: f64) -> Result<f64> {
        check_nonnegative(z)?;
        let d = match self {
            Kernel::Exponential => -(-z).exp(),
            Kernel::Triangular => {
                if z < 1.0 {
                    -2.0
                } else {
                    0.0
                }
            }
            Kernel::Box => return Err(Error::NonDifferentiableKernel("box")),
            Kernel::RationalSquared => {
                let q = 1.0 + z * z;
                -16.0 / PI * z / (q * q * q)
            }
            Kernel::Cauchy => {
                let q = 1.0 + z * z;
                -4.0 / PI * z / (q * q)
            }
        };
        Ok(d)
    }

    /// Scaled density `(1/α) Φ(z/α)`.
    pub fn scaled_value(self, alpha: f64, z: f64) -> Result<f64> {
        check_alpha(alpha)?;
        Ok(self.value(z / alpha)? / alpha)
    }

    /// Mass of the scaled kernel on `[0, z]`.
    pub fn scaled_cdf(self, alpha: f64, z: f64) -> Result<f64> {
        check_alpha(alpha)?;
        self.cdf(z / alpha)
    }

    pub(crate) fn density(self, z: f64) -> f64 {
        match self {
            Kernel::Exponential => (-z).exp(),
            Kernel::Triangular => 2.0 * (1.0 - z).max(0.0),
            // support is the open interval (0, 1); value(1) = 0
            Kernel::Box => {
                if z < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::RationalSquared => {
                let q = 1.0 + z * z;
                4.0 / PI / (q * q)
            }
            Kernel::Cauchy => FRAC_2_PI / (1.0 + z * z),
        }
    }

    pub(crate) fn cumulative(self, z: f64) -> f64 {
        match self {
            Kernel::Exponential => -(-z).exp_m1(),
            Kernel::Triangular => {
                if z >= 1.0 {
                    1.0
                } else {
                    z * (2.0 - z)
                }
            }
            Kernel::Box => z.min(1.0),
            Kernel::RationalSquared => FRAC_2_PI * (z.atan() + z / (1.0 + z * z)),
            Kernel::Cauchy => FRAC_2_PI * z.atan(),
        }
    }

    /// Tail mass `1 - cdf(z)`, evaluated without cancellation.
    pub fn survival(self, z: f64) -> f64 {
        if z <= 0.0 {
            return 1.0;
        }
        match self {
            Kernel::Exponential => (-z).exp(),
            Kernel::Triangular => {
                let r = (1.0 - z).max(0.0);
                r * r
            }
            Kernel::Box => (1.0 - z).max(0.0),
            Kernel::RationalSquared => {
                // with φ = atan(1/z): (2φ - sin 2φ) / π
                let x = 2.0 * (1.0 / z).atan();
                let d = if x < 1e-2 {
                    let x3 = x * x * x;
                    x3 / 6.0 - x3 * x * x / 120.0 + x3 * x3 * x / 5040.0
                } else {
                    x - x.sin()
                };
                d / PI
            }
            Kernel::Cauchy => FRAC_2_PI * (1.0 / z).atan(),
        }
    }

    /// Smallest `z` with `survival(z) <= tol`, or `None` if it is beyond `z_cap`.
    fn tail_radius(self, tol: f64, z_cap: f64) -> Option<f64> {
        if self.survival(z_cap) > tol {
            return None;
        }
        let (mut lo, mut hi) = (0.0, z_cap);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.survival(mid) <= tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownKernel(s.to_string()))
    }
}

fn check_nonnegative(z: f64) -> Result<()> {
    if z >= 0.0 {
        Ok(())
    } else {
        Err(invalid("z", format!("kernel argument must be >= 0, got {z}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid("alpha", format!("filter size must be positive, got {alpha}")))
    }
}

/// One row `I_0, I_1, …, I_K` of the Toeplitz averaging matrix on a uniform
/// Lagrangian grid.
///
/// `I_j` is the kernel mass between `j·dz` and `(j+1)·dz`. Because the grid
/// is uniform, the same row serves every cell. The row is truncated once the
/// remaining tail mass drops below the requested tolerance; that residual is
/// folded into `I_0` so the row has unit mass and stays non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    alpha: f64,
    dz: f64,
    weights: Vec<f64>,
    /// `suffix[k] = Σ_{j >= k} I_j`, with `suffix[K+1] = 0`.
    suffix: Vec<f64>,
}

impl WeightRow {
    /// Build a row from explicit weights. They must be non-negative,
    /// non-increasing and sum to one within `1e-12`.
    pub fn from_weights(alpha: f64, dz: f64, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weight row"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("weights", "weights must be non-negative"));
        }
        if weights.windows(2).any(|p| p[1] > p[0]) {
            return Err(invalid("weights", "weights must be non-increasing"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("weights", format!("weights sum to {total}, not 1")));
        }
        Ok(Self::with_suffix(alpha, dz, weights))
    }

    /// The collapsed row `[1]`: averaging reduces to the identity.
    pub fn identity(dz: f64) -> Self {
        Self::with_suffix(0.0, dz, vec![1.0])
    }

    fn with_suffix(alpha: f64, dz: f64, weights: Vec<f64>) -> Self {
        let mut suffix = vec![0.0; weights.len() + 1];
        for k in (0..weights.len()).rev() {
            suffix[k] = suffix[k + 1] + weights[k];
        }
        Self {
            alpha,
            dz,
            weights,
            suffix,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Truncation index `K` (the row has `K + 1` entries).
    pub fn truncation_index(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Mass carried by entries `k, k+1, …` (zero past the end).
    pub fn tail_mass(&self, k: usize) -> f64 {
        self.suffix.get(k).copied().unwrap_or(0.0)
    }

    pub(crate) fn suffix(&self) -> &[f64] {
        &self.suffix
    }

    /// The first `len` entries with all remaining mass folded into the last
    /// one. This is the row used on a finite window when everything past the
    /// window is treated as a single far-field cell.
    pub fn folded(&self, len: usize) -> Vec<f64> {
        assert!(len > 0, "folded row needs at least one entry");
        let mut out: Vec<f64> = (0..len).map(|j| self.weights.get(j).copied().unwrap_or(0.0)).collect();
        out[len - 1] = self.tail_mass(len - 1);
        out
    }
}

/// Build the Lagrangian weight row for filter size `alpha` on cells of width `dz`.
pub fn lagrangian_weights(kernel: Kernel, alpha: f64, dz: f64, tail_mass_tol: f64) -> Result<WeightRow> {
    lagrangian_weights_capped(kernel, alpha, dz, tail_mass_tol, DEFAULT_MAX_WEIGHTS)
}

/// As [`lagrangian_weights`], with an explicit cap on the row length.
pub fn lagrangian_weights_capped(
    kernel: Kernel,
    alpha: f64,
    dz: f64,
    tail_mass_tol: f64,
    max_weights: usize,
) -> Result<WeightRow> {
    check_alpha(alpha)?;
    if !(dz > 0.0 && dz.is_finite()) {
        return Err(invalid("dz", format!("cell width must be positive, got {dz}")));
    }
    if !(tail_mass_tol > 0.0 && tail_mass_tol < 1.0) {
        return Err(invalid(
            "tail_mass_tol",
            format!("must lie in (0, 1), got {tail_mass_tol}"),
        ));
    }
    if max_weights == 0 {
        return Err(invalid("max_weights", "cap must be positive"));
    }
    let h = dz / alpha;
    let z_cap = h * max_weights as f64;
    let radius = kernel
        .tail_radius(tail_mass_tol, z_cap)
        .ok_or(Error::TruncationFailure {
            remaining: kernel.survival(z_cap),
            tol: tail_mass_tol,
            cap: max_weights,
        })?;

    // K is the smallest index with survival((K+1) h) <= tol.
    let mut k = ((radius / h).ceil() as usize).saturating_sub(1);
    while k > 0 && kernel.survival(k as f64 * h) <= tail_mass_tol {
        k -= 1;
    }
    while kernel.survival((k + 1) as f64 * h) > tail_mass_tol {
        k += 1;
    }
    if k + 1 > max_weights {
        return Err(Error::TruncationFailure {
            remaining: kernel.survival(max_weights as f64 * h),
            tol: tail_mass_tol,
            cap: max_weights,
        });
    }

    let mut weights = Vec::with_capacity(k + 1);
    let mut upper = kernel.survival(0.0);
    for j in 0..=k {
        let lower = kernel.survival((j + 1) as f64 * h);
        weights.push((upper - lower).max(0.0));
        upper = lower;
    }
    // exact differences of a flat stretch (box) can wobble by an ulp
    for j in 2..weights.len() {
        weights[j] = weights[j].min(weights[j - 1]);
    }
    let rest: f64 = weights[1..].iter().rev().sum();
    weights[0] = 1.0 - rest;
    if weights.len() > 1 && weights[0] < weights[1] {
        weights[0] = weights[1];
    }
    Ok(WeightRow::with_suffix(alpha, dz, weights))
}

/// Row `i` of the position-dependent averaging matrix over vehicles
/// `i..N` (zero-based), where `positions[N]` is treated as `+∞`.
///
/// Entry `j - i` is the scaled kernel mass between `x_j - x_i` and
/// `x_{j+1} - x_i`; the last entry carries the whole tail to infinity.
pub fn eulerian_weights(kernel: Kernel, alpha: f64, positions: &[f64], i: usize) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if positions.is_empty() {
        return Err(Error::Empty("positions"));
    }
    if i >= positions.len() {
        return Err(invalid(
            "i",
            format!("index {i} out of range for {} positions", positions.len()),
        ));
    }
    if let Some(bad) = positions.windows(2).position(|p| !(p[1] > p[0])) {
        return Err(Error::NonMonotonePositions { index: bad + 1 });
    }
    Ok(eulerian_row(kernel, alpha, positions, i))
}

/// Unchecked core of [`eulerian_weights`]; positions are assumed increasing.
pub(crate) fn eulerian_row(kernel: Kernel, alpha: f64, positions: &[f64], i: usize) -> Vec<f64> {
    let n = positions.len();
    let xi = positions[i];
    let mut row = Vec::with_capacity(n - i);
    let mut upper = 1.0;
    for j in i..n - 1 {
        let lower = kernel.survival((positions[j + 1] - xi) / alpha);
        row.push((upper - lower).max(0.0));
        upper = lower;
    }
    row.push(upper);
    if row.len() > 1 {
        let rest: f64 = row[1..].iter().rev().sum();
        row[0] = 1.0 - rest;
    }
    row
}
