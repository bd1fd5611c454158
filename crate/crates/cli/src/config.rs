//! Experiment manifests: flat `key = value` files, overridden by flags.
//!
//! ```text
//! # box data, zero-filter sweep
//! kernel  = exp
//! alpha   = 1/2, 1/8, 1/32, 1/128
//! ell     = 1/2000
//! profile = box:1,0.05,-0.75,0.75
//! t_end   = 1.2
//! ```
//!
//! Numbers accept `p/q` fractions. Profiles are `box:inside,outside,lo,hi`,
//! `constant:rho` or `piecewise:v0,b1,v1,...,bn,vn` (values alternating with
//! increasing breakpoints).

use std::fmt;
use std::path::{Path, PathBuf};

use nonlocal_lwr::ftl::DensityProfile;
use nonlocal_lwr::{BoundaryMode, Kernel, VelocityModel};

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "NLWR_OUT_DIR";

pub const KEYS: &[&str] = &[
    "kernel",
    "kernels",
    "alpha",
    "ell",
    "velocity",
    "profile",
    "a",
    "b",
    "t_end",
    "safety",
    "boundary",
    "out_dir",
    "record_every",
    "seed",
    "trials",
    "dt",
    "ref_dx",
];

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{}", path.display(), line),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: field `{field}`: {reason}")]
    Field {
        origin: Origin,
        field: String,
        reason: String,
    },
    #[error("{origin}: {reason}")]
    Syntax { origin: Origin, reason: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

impl ConfigError {
    fn field(origin: &Origin, field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Field {
            origin: origin.clone(),
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Every setting an experiment can take. `None` means "use the command's
/// default".
#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    pub kernel: Option<Kernel>,
    pub kernels: Option<Vec<Kernel>>,
    pub alpha: Option<Vec<f64>>,
    pub ell: Option<f64>,
    pub velocity: Option<VelocityModel>,
    pub profile: Option<DensityProfile>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub t_end: Option<f64>,
    pub safety: Option<f64>,
    pub boundary: Option<BoundaryMode>,
    pub out_dir: Option<PathBuf>,
    pub record_every: Option<usize>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub dt: Option<f64>,
    pub ref_dx: Option<f64>,
}

pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            let q: f64 = q.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
            p / q
        }
        None => s.parse().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_number(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let items: Vec<T> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(item)
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        Err("list is empty".into())
    } else {
        Ok(items)
    }
}

pub fn parse_profile(s: &str) -> Result<DensityProfile, String> {
    let (kind, args) = s
        .split_once(':')
        .ok_or("expected `box:...`, `constant:...` or `piecewise:...`")?;
    let nums = list(args, parse_number)?;
    let profile = match (kind.trim(), nums.as_slice()) {
        ("box", [inside, outside, lo, hi]) => DensityProfile::boxed(*inside, *outside, *lo, *hi),
        ("box", _) => return Err("box takes inside,outside,lo,hi".into()),
        ("constant", [rho]) => DensityProfile::constant(*rho),
        ("constant", _) => return Err("constant takes one density".into()),
        ("piecewise", n) if n.len() % 2 == 1 => {
            let values = n.iter().step_by(2).copied().collect();
            let breaks = n.iter().skip(1).step_by(2).copied().collect();
            DensityProfile::new(breaks, values)
        }
        ("piecewise", _) => return Err("piecewise takes v0,b1,v1,...,bn,vn (an odd count)".into()),
        (other, _) => return Err(format!("unknown profile kind `{other}`")),
    };
    profile.map_err(|e| e.to_string())
}

impl ExperimentConfig {
    /// Set one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str, origin: &Origin) -> Result<(), ConfigError> {
        let err = |reason: String| ConfigError::field(origin, key, reason);
        let value = value.trim();
        match key {
            "kernel" => self.kernel = Some(value.parse().map_err(|e: nonlocal_lwr::Error| err(e.to_string()))?),
            "kernels" => {
                self.kernels = Some(list(value, |k| k.parse::<Kernel>().map_err(|e| e.to_string())).map_err(err)?)
            }
            "alpha" => self.alpha = Some(list(value, positive).map_err(err)?),
            "ell" => self.ell = Some(positive(value).map_err(err)?),
            "velocity" => self.velocity = Some(value.parse().map_err(|e: nonlocal_lwr::Error| err(e.to_string()))?),
            "profile" => self.profile = Some(parse_profile(value).map_err(err)?),
            "a" => self.a = Some(parse_number(value).map_err(err)?),
            "b" => self.b = Some(parse_number(value).map_err(err)?),
            "t_end" => self.t_end = Some(positive(value).map_err(err)?),
            "safety" => self.safety = Some(positive(value).map_err(err)?),
            "boundary" => self.boundary = Some(value.parse().map_err(|e: nonlocal_lwr::Error| err(e.to_string()))?),
            "out_dir" if value.is_empty() => return Err(err("empty path".into())),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "record_every" => {
                self.record_every = Some(value.parse().map_err(|_| err(format!("`{value}` is not a count")))?)
            }
            "seed" => self.seed = Some(value.parse().map_err(|_| err(format!("`{value}` is not a seed")))?),
            "trials" => {
                let n: usize = value.parse().map_err(|_| err(format!("`{value}` is not a count")))?;
                if n == 0 {
                    return Err(err("must be at least 1".into()));
                }
                self.trials = Some(n);
            }
            "dt" => self.dt = Some(positive(value).map_err(err)?),
            "ref_dx" => self.ref_dx = Some(positive(value).map_err(err)?),
            _ => {
                return Err(ConfigError::field(
                    origin,
                    key,
                    format!("unknown key (expected one of {})", KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<(String, usize)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let origin = Origin::File {
                path: path.to_path_buf(),
                line: k + 1,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                origin: origin.clone(),
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if let Some((_, first)) = seen.iter().find(|(s, _)| s == key) {
                return Err(ConfigError::field(&origin, key, format!("already set on line {first}")));
            }
            seen.push((key.to_string(), k + 1));
            cfg.set(key, value, &origin)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Fields set in `other` replace ours.
    pub fn overlay(&mut self, other: ExperimentConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            kernel,
            kernels,
            alpha,
            ell,
            velocity,
            profile,
            a,
            b,
            t_end,
            safety,
            boundary,
            out_dir,
            record_every,
            seed,
            trials,
            dt,
            ref_dx
        );
    }

    /// Output directory: flag, then environment, then file, then `default`.
    pub fn resolve_out_dir(&self, flag: Option<&Path>, env: Option<&str>, default: &str) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        match env {
            Some(e) if !e.is_empty() => PathBuf::from(e),
            _ => self.out_dir.clone().unwrap_or_else(|| PathBuf::from(default)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(text, Path::new("exp.cfg"))
    }

    #[test]
    fn fractions_lists_and_comments() {
        let c = parse("alpha = 1/2, 1/8 # two sizes\n\nell=1/2000\nkernels = exp, box\n").unwrap();
        assert_eq!(c.alpha, Some(vec![0.5, 0.125]));
        assert_eq!(c.ell, Some(0.0005));
        assert_eq!(c.kernels, Some(vec![Kernel::Exponential, Kernel::Box]));
    }

    #[test]
    fn errors_name_line_and_field() {
        let e = parse("ell = 0.01\nalpha = 1/0x\n").unwrap_err().to_string();
        assert!(e.starts_with("exp.cfg:2: field `alpha`"), "{e}");
        let e = parse("kernel = gauss").unwrap_err().to_string();
        assert!(e.contains("exp.cfg:1") && e.contains("unknown kernel"), "{e}");
        let e = parse("ell = 1\nell = 2").unwrap_err().to_string();
        assert!(e.contains("already set on line 1"), "{e}");
        let e = parse("colour = red").unwrap_err().to_string();
        assert!(e.contains("unknown key"), "{e}");
        let e = parse("just words").unwrap_err().to_string();
        assert!(e.contains("expected `key = value`"), "{e}");
        assert!(parse("ell = -1").is_err());
        assert!(parse("trials = 0").is_err());
    }

    #[test]
    fn profiles() {
        let p = parse_profile("box:1,0.05,-0.75,0.75").unwrap();
        assert_eq!(p, DensityProfile::jam_box());
        let q = parse_profile("piecewise:0.05,-0.75,1,0.75,0.05").unwrap();
        assert_eq!(p, q);
        assert_eq!(
            parse_profile("constant:0.4").unwrap(),
            DensityProfile::constant(0.4).unwrap()
        );
        assert!(parse_profile("box:1.5,0.05,0,1").is_err());
        assert!(parse_profile("piecewise:0.1,0").is_err());
        assert!(parse_profile("wave:1").is_err());
    }

    #[test]
    fn out_dir_precedence() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.resolve_out_dir(None, None, "out"), PathBuf::from("out"));
        c.out_dir = Some("from-file".into());
        assert_eq!(c.resolve_out_dir(None, None, "out"), PathBuf::from("from-file"));
        assert_eq!(
            c.resolve_out_dir(None, Some("from-env"), "out"),
            PathBuf::from("from-env")
        );
        assert_eq!(
            c.resolve_out_dir(Some(Path::new("flag")), Some("from-env"), "out"),
            PathBuf::from("flag")
        );
    }

    #[test]
    fn overlay_keeps_unset_fields() {
        let mut base = parse("ell = 0.01\nt_end = 2").unwrap();
        base.overlay(parse("t_end = 3").unwrap());
        assert_eq!(base.ell, Some(0.01));
        assert_eq!(base.t_end, Some(3.0));
    }
}
