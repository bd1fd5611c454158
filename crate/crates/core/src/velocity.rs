//! Speed–density laws `V(u)` and the derived spacing law `W(w) = V(1/w)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

type SpeedFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Law {
    /// `V(u) = 1 - u`
    Linear,
    /// `V(u) = 1 - u²`
    Quadratic,
    Custom {
        name: String,
        speed: SpeedFn,
        lipschitz: f64,
    },
}

/// A non-increasing Lipschitz speed law `V: [0, 1] → [0, 1]` with `V(1) = 0`.
///
/// In Lagrangian coordinates the scheme works with the spacing `w ≥ 1`
/// through `W(w) = V(1/w)`, which is non-decreasing in `w`.
#[derive(Clone)]
pub struct VelocityModel {
    law: Law,
}

impl VelocityModel {
    pub fn linear() -> Self {
        Self { law: Law::Linear }
    }

    pub fn quadratic() -> Self {
        Self { law: Law::Quadratic }
    }

    /// A user-supplied law. `lipschitz` bounds `|V'|` on `[0, 1]` and is what
    /// the time-step control relies on, so it must be a true upper bound
    /// (zero only for the trivial law `V ≡ 0`).
    ///
    /// The law is sampled on a fine grid to check that it maps into `[0, 1]`,
    /// is non-increasing and vanishes at `u = 1`.
    pub fn custom<F>(name: impl Into<String>, speed: F, lipschitz: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(invalid("lipschitz", format!("must be non-negative, got {lipschitz}")));
        }
        if speed(1.0).abs() > 1e-12 {
            return Err(invalid("speed", "V(1) must be 0"));
        }
        let samples = 4096;
        let mut prev = f64::INFINITY;
        for k in 0..=samples {
            let u = k as f64 / samples as f64;
            let v = speed(u);
            if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                return Err(invalid("speed", format!("V({u}) = {v} outside [0, 1]")));
            }
            if v > prev + 1e-12 {
                return Err(invalid("speed", format!("V increases near u = {u}")));
            }
            if k > 0 && (prev - v) * samples as f64 > lipschitz * (1.0 + 1e-9) + 1e-9 {
                return Err(invalid(
                    "lipschitz",
                    format!("V is steeper than {lipschitz} near u = {u}"),
                ));
            }
            prev = v;
        }
        Ok(Self {
            law: Law::Custom {
                name: name.into(),
                speed: Arc::new(speed),
                lipschitz,
            },
        })
    }

    pub fn name(&self) -> &str {
        match &self.law {
            Law::Linear => "linear",
            Law::Quadratic => "quadratic",
            Law::Custom { name, .. } => name,
        }
    }

    /// Speed at density `u`.
    #[inline]
    pub fn speed(&self, u: f64) -> f64 {
        match &self.law {
            Law::Linear => 1.0 - u,
            Law::Quadratic => 1.0 - u * u,
            Law::Custom { speed, .. } => speed(u),
        }
    }

    /// Lipschitz constant of `V` on `[0, 1]`.
    pub fn lipschitz(&self) -> f64 {
        match &self.law {
            Law::Linear => 1.0,
            Law::Quadratic => 2.0,
            Law::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// `W(w) = V(1/w)`.
    #[inline]
    pub fn w_of(&self, w: f64) -> f64 {
        match &self.law {
            Law::Linear => 1.0 - 1.0 / w,
            Law::Quadratic => 1.0 - 1.0 / (w * w),
            Law::Custom { speed, .. } => speed(1.0 / w),
        }
    }

    /// `W'(w) = -V'(1/w)/w²` where it is known in closed form, otherwise the
    /// Lipschitz bound `L/w²`.
    pub fn w_prime(&self, w: f64) -> f64 {
        match &self.law {
            Law::Linear => 1.0 / (w * w),
            Law::Quadratic => 2.0 / (w * w * w),
            Law::Custom { lipschitz, .. } => lipschitz / (w * w),
        }
    }

    /// Supremum of `W'` over `[w_min, w_max]`. Every law here has `W'`
    /// bounded by a decreasing function of `w`, so the bound sits at `w_min`.
    pub fn sup_w_prime(&self, w_min: f64, w_max: f64) -> f64 {
        debug_assert!(w_min <= w_max);
        self.w_prime(w_min)
    }

    /// Eulerian flux `f(ρ) = ρ V(ρ)`.
    #[inline]
    pub fn flux(&self, rho: f64) -> f64 {
        rho * self.speed(rho)
    }

    /// Upper bound for `|f'(ρ)|` on `[0, 1]`.
    pub fn flux_speed_bound(&self) -> f64 {
        match &self.law {
            Law::Linear => 1.0,
            Law::Quadratic => 2.0,
            Law::Custom { lipschitz, .. } => 1.0 + lipschitz,
        }
    }
}

impl fmt::Debug for VelocityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VelocityModel")
            .field("name", &self.name())
            .field("lipschitz", &self.lipschitz())
            .finish()
    }
}

impl Default for VelocityModel {
    fn default() -> Self {
        Self::linear()
    }
}

impl FromStr for VelocityModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "lwr" | "greenshields" => Ok(Self::linear()),
            "quadratic" => Ok(Self::quadratic()),
            _ => Err(Error::UnknownVelocity(s.to_string())),
        }
    }
}
