use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use nonlocal_lwr::campaign::{run_campaign, CampaignConfig};
use nonlocal_lwr::coordinates::{write_trace_csv, EulerianTrace, Field};
use nonlocal_lwr::diagnostics::write_campaign_csv;
use nonlocal_lwr::experiments::{compare_ftl, filter_study, zero_filter, FtlConfig, SweepConfig};
use nonlocal_lwr::ftl::reconstruct_density;
use nonlocal_lwr::reference::write_solution_csv;
use nonlocal_lwr::scheme::write_trajectory_csv;
use nonlocal_lwr::{Kernel, VelocityModel};

use crate::config::{ConfigError, ExperimentConfig};
use crate::plot;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] nonlocal_lwr::Error),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Verification(_) => 3,
            CliError::Run(_) | CliError::Io { .. } => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Writes files into one output directory and remembers what it wrote.
pub struct Output {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|source| CliError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    pub fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    {
        let path = self.dir.join(name);
        let wrap = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let mut out = BufWriter::new(File::create(&path).map_err(wrap)?);
        body(&mut out).and_then(|_| out.flush()).map_err(wrap)?;
        self.written.push(path);
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Warn about settings a command does not read.
fn note_unused(cfg: &ExperimentConfig, command: &str, used: &[&str]) {
    let set = [
        ("kernel", cfg.kernel.is_some()),
        ("kernels", cfg.kernels.is_some()),
        ("alpha", cfg.alpha.is_some()),
        ("ell", cfg.ell.is_some()),
        ("velocity", cfg.velocity.is_some()),
        ("profile", cfg.profile.is_some()),
        ("a", cfg.a.is_some()),
        ("b", cfg.b.is_some()),
        ("t_end", cfg.t_end.is_some()),
        ("safety", cfg.safety.is_some()),
        ("boundary", cfg.boundary.is_some()),
        ("record_every", cfg.record_every.is_some()),
        ("seed", cfg.seed.is_some()),
        ("trials", cfg.trials.is_some()),
        ("dt", cfg.dt.is_some()),
        ("ref_dx", cfg.ref_dx.is_some()),
    ];
    for (key, present) in set {
        if present && !used.contains(&key) {
            eprintln!("note: `{key}` is not used by {command}");
        }
    }
}

fn single_alpha(cfg: &ExperimentConfig, default: f64) -> Result<f64> {
    match cfg.alpha.as_deref() {
        None => Ok(default),
        Some([a]) => Ok(*a),
        Some(_) => Err(ConfigError::Invalid("this command takes a single alpha".into()).into()),
    }
}

fn check_stability(safety: f64) -> Result<()> {
    if safety <= 1.0 {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("safety must lie in (0, 1], got {safety}")).into())
    }
}

fn sweep_config(cfg: &ExperimentConfig, ell_default: f64) -> Result<SweepConfig> {
    let mut s = SweepConfig::jam_box(cfg.ell.unwrap_or(ell_default));
    if let Some(p) = &cfg.profile {
        s.profile = p.clone();
    }
    if let Some(m) = &cfg.velocity {
        s.model = m.clone();
    }
    s.a = cfg.a.unwrap_or(s.a);
    s.b = cfg.b.unwrap_or(s.b);
    s.t_end = cfg.t_end.unwrap_or(s.t_end);
    s.safety = cfg.safety.unwrap_or(s.safety);
    s.boundary = cfg.boundary.unwrap_or(s.boundary);
    check_stability(s.safety)?;
    if s.a >= s.b {
        return Err(ConfigError::Invalid(format!("road interval needs a < b, got [{}, {}]", s.a, s.b)).into());
    }
    Ok(s)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn cmd_compare_ftl(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    note_unused(
        cfg,
        "compare-ftl",
        &["kernel", "alpha", "ell", "velocity", "profile", "a", "b", "t_end", "dt"],
    );
    let mut f = FtlConfig::jam_box(cfg.ell.unwrap_or(0.06));
    f.alpha = single_alpha(cfg, f.alpha)?;
    f.kernel = cfg.kernel.unwrap_or(f.kernel);
    if let Some(p) = &cfg.profile {
        f.profile = p.clone();
    }
    if let Some(m) = &cfg.velocity {
        f.model = m.clone();
    }
    f.a = cfg.a.unwrap_or(f.a);
    f.b = cfg.b.unwrap_or(f.b);
    f.t_end = cfg.t_end.unwrap_or(f.t_end);
    f.dt = cfg.dt;
    let cmp = compare_ftl(&f)?;

    let mut files = Vec::new();
    let mut states = vec![("initial", &cmp.initial)];
    states.extend(cmp.finals.iter().map(|(tag, s)| (*tag, s)));
    for (tag, state) in states {
        let name = format!("ftl_{tag}.csv");
        let samples = reconstruct_density(state).samples();
        out.write(&name, |w| {
            writeln!(w, "x,u")?;
            for (x, u) in samples {
                writeln!(w, "{},{}", fmt(x), fmt(u))?;
            }
            Ok(())
        })?;
        files.push((name, format!("{tag} (t={})", state.t)));
    }
    out.write("ftl_centroids.csv", |w| {
        writeln!(w, "model,t,vehicles,centroid")?;
        for (tag, s) in &cmp.finals {
            writeln!(w, "{tag},{},{},{}", fmt(s.t), s.len(), fmt(s.centroid()))?;
        }
        Ok(())
    })?;
    out.write("compare_ftl.gp", |w| w.write_all(plot::compare_ftl(&files).as_bytes()))?;

    println!(
        "FtL comparison: {} vehicles, ell = {}, alpha = {}, t = {}",
        cmp.initial.len(),
        f.ell,
        f.alpha,
        f.t_end
    );
    println!("{:<12} {:>12}", "model", "centroid");
    for (tag, s) in &cmp.finals {
        println!("{:<12} {:>12.6}", tag, s.centroid());
    }
    Ok(())
}

pub fn cmd_zero_filter(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    note_unused(
        cfg,
        "zero-filter",
        &[
            "kernel", "alpha", "ell", "velocity", "profile", "a", "b", "t_end", "safety", "boundary", "ref_dx",
        ],
    );
    let sweep = sweep_config(cfg, 1.0 / 2000.0)?;
    let kernel = cfg.kernel.unwrap_or(Kernel::Exponential);
    let alphas = cfg
        .alpha
        .clone()
        .unwrap_or_else(|| vec![0.5, 1.0 / 8.0, 1.0 / 32.0, 1.0 / 128.0]);
    let report = zero_filter(&sweep, kernel, &alphas, cfg.ref_dx)?;

    out.write("zero_filter.csv", |w| {
        writeln!(w, "alpha,l1_w,l1_y,gap,bound,steps")?;
        for r in &report.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt(r.alpha),
                fmt(r.l1_w),
                fmt(r.l1_y),
                fmt(r.gap),
                fmt(r.bound),
                r.steps
            )?;
        }
        Ok(())
    })?;
    out.write("reference.csv", |w| write_solution_csv(w, &report.reference))?;
    let mut traces = Vec::new();
    for (k, (alpha, tw, ty)) in report.traces.iter().enumerate() {
        let name = format!("trace_w_{k}.csv");
        out.write(&name, |w| write_trace_csv(w, tw))?;
        out.write(&format!("trace_y_{k}.csv"), |w| write_trace_csv(w, ty))?;
        traces.push((name, format!("{alpha}")));
    }
    out.write("zero_filter.gp", |w| {
        w.write_all(plot::zero_filter("reference.csv", &traces).as_bytes())
    })?;

    println!(
        "zero-filter sweep: kernel {kernel}, ell = {}, t = {}, BV(y0) = {:.4}, reference cells = {}",
        sweep.ell, sweep.t_end, report.bv_y0, report.reference_cells
    );
    println!(
        "{:>12} {:>12} {:>12} {:>12} {:>12}",
        "alpha", "L1(1/w)", "L1(1/y)", "gap", "bound"
    );
    for r in &report.rows {
        println!(
            "{:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            r.alpha, r.l1_w, r.l1_y, r.gap, r.bound
        );
    }
    match &report.fit {
        Some(fit) => println!("fitted rate: {:.3}", fit.slope),
        None => println!("fitted rate: n/a (one filter size)"),
    }
    Ok(())
}

pub fn cmd_filter_study(cfg: &ExperimentConfig, paper_scale: bool, out: &mut Output) -> Result<()> {
    note_unused(
        cfg,
        "filter-study",
        &[
            "kernels", "alpha", "ell", "velocity", "profile", "a", "b", "t_end", "safety", "boundary",
        ],
    );
    let (ell, alphas) = if paper_scale {
        (1.0 / 10000.0, vec![1.0 / 64.0, 1.0 / 256.0])
    } else {
        (1.0 / 2500.0, vec![1.0 / 16.0, 1.0 / 64.0])
    };
    let mut sweep = sweep_config(cfg, ell)?;
    let alphas = cfg.alpha.clone().unwrap_or(alphas);
    if cfg.a.is_none() {
        let widest = alphas.iter().copied().fold(0.0, f64::max);
        sweep = sweep.with_upstream_reach(widest);
    }
    let kernels = cfg
        .kernels
        .clone()
        .unwrap_or_else(|| vec![Kernel::Exponential, Kernel::Triangular, Kernel::Box]);
    let study = filter_study(&sweep, &kernels, &alphas)?;

    out.write("filter_study.csv", |w| {
        writeln!(w, "kernel,alpha,gap,identity_residual")?;
        for r in &study.rows {
            let res = r.identity_residual.map(fmt).unwrap_or_default();
            writeln!(w, "{},{},{},{}", r.kernel, fmt(r.alpha), fmt(r.gap), res)?;
        }
        Ok(())
    })?;
    let names: Vec<&str> = kernels.iter().map(|k| k.name()).collect();
    out.write("filter_study.gp", |w| {
        w.write_all(plot::filter_study(&names).as_bytes())
    })?;

    println!(
        "filter study: ell = {}, t = {}, road [{:.3}, {}]",
        sweep.ell, sweep.t_end, sweep.a, sweep.b
    );
    println!("{:<8} {:>12} {:>12} {:>14}", "kernel", "alpha", "gap", "exp identity");
    for r in &study.rows {
        let res = r
            .identity_residual
            .map(|v| format!("{v:.3e}"))
            .unwrap_or_else(|| "-".into());
        println!("{:<8} {:>12.6} {:>12.6} {:>14}", r.kernel, r.alpha, r.gap, res);
    }
    for k in &kernels {
        let verdict = if study.plateaued.contains(k) {
            "gap plateaus"
        } else {
            "gap shrinks"
        };
        println!("{k}: {verdict}");
    }
    Ok(())
}

pub fn cmd_verify(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    note_unused(cfg, "verify", &["seed", "trials", "safety", "velocity"]);
    let seed = cfg.seed.unwrap_or(CampaignConfig::default().seed);
    let trials = cfg.trials.unwrap_or(1000);
    let safety = cfg.safety.unwrap_or(0.9);
    let campaign = if safety > 1.0 {
        CampaignConfig {
            safety,
            ..CampaignConfig::negative_control(seed, trials)
        }
    } else {
        CampaignConfig {
            seed,
            trials,
            safety,
            ..CampaignConfig::default()
        }
    };
    let model = cfg.velocity.clone().unwrap_or_else(VelocityModel::linear);
    let report = run_campaign(&campaign, &model);
    out.write("campaign.csv", |w| write_campaign_csv(w, &report.checks))?;

    println!("property campaign: seed {seed}, {trials} trials, CFL safety {safety}");
    println!(
        "{:<16} {:>8} {:>11} {:>14}",
        "check", "trials", "violations", "worst margin"
    );
    for c in &report.checks {
        println!(
            "{:<16} {:>8} {:>11} {:>14.3e}",
            c.name, c.trials, c.violations, c.worst_margin
        );
    }
    if report.passed() {
        println!("all checks passed");
        return Ok(());
    }
    for (name, s) in &report.failures {
        println!("{name}: first failing trial has seed {s}");
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| c.name.as_str())
        .collect();
    Err(CliError::Verification(format!("violations in: {}", failed.join(", "))))
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &mut Output) -> Result<()> {
    note_unused(
        cfg,
        "simulate",
        &[
            "kernel",
            "alpha",
            "ell",
            "velocity",
            "profile",
            "a",
            "b",
            "t_end",
            "safety",
            "boundary",
            "record_every",
        ],
    );
    let sweep = sweep_config(cfg, 1.0 / 500.0)?;
    let kernel = cfg.kernel.unwrap_or(Kernel::Exponential);
    let alpha = single_alpha(cfg, 1.0 / 8.0)?;
    let (setup, traj) = sweep.run(kernel, alpha, cfg.record_every.unwrap_or(0))?;
    let last = traj.last();
    out.write("trajectory.csv", |w| write_trajectory_csv(w, &traj, &setup.grid))?;
    let tw = EulerianTrace::from_state(last, setup.x1_0, sweep.ell, Field::Filtered);
    let ty = EulerianTrace::from_state(last, setup.x1_0, sweep.ell, Field::Raw);
    out.write("trace_w.csv", |w| write_trace_csv(w, &tw))?;
    out.write("trace_y.csv", |w| write_trace_csv(w, &ty))?;
    out.write("simulate.gp", |w| w.write_all(plot::simulate().as_bytes()))?;
    let (lo, hi) = last.w_range();
    println!(
        "simulate: kernel {kernel}, alpha = {alpha}, ell = {}, {} cells, {} steps to t = {}, w in [{lo:.6}, {hi:.6}]",
        sweep.ell,
        setup.y0.len(),
        traj.steps(),
        last.t
    );
    Ok(())
}
