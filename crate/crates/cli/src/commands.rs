use crate::config::{AnalyzeSettings, ExperimentConfig, Mode, OdeSettings, PdeSettings};
use crate::{presets, CliResult, Command, Failure, OutArgs, PdeOverrides};
use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use spiral_lattice::averaging::predict::{anchors_from, find_limit_cycles};
use spiral_lattice::averaging::{
    average_over_phi, compute_m, find_equilibria, find_m_zeros, predict, AveragingError, Prediction,
};
use spiral_lattice::center_bundle::{
    conjugacy_residual, integrate_sampled, invariant_surface_diagnostic, DynamicsError, SystemParams,
};
use spiral_lattice::lattice::Vec2;
use spiral_lattice::rd_fhn::{
    run, spawn_spiral, write_snapshot, FieldPair, GridSpec, PdeError, RunOptions, SpawnOptions,
};
use spiral_lattice::tip::{classify_with, ClassificationRecord, TipError, TipTrajectory};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Validate { config } => validate(&load(&config)?),
        Command::OdeRun { config, out } => ode_run(&load(&config)?, &out.out_dir).map(drop),
        Command::Average { config, out } => average(&load(&config)?, &out.out_dir),
        Command::Predict { config, out } => predict_cmd(&load(&config)?, &out.out_dir),
        Command::PdeRun { config, out, overrides } => pde_run(&load(&config)?, &out.out_dir, &overrides).map(drop),
        Command::TipAnalyze { tips, transient, threshold, out } => {
            let settings = AnalyzeSettings { tips, transient_fraction: transient, threshold };
            let record = analyze(&settings)?;
            match out {
                Some(p) => write_json(&p, &record),
                None => print_json(&record),
            }
        }
        Command::Repro { preset, out, overrides } => repro(&preset, &out, &overrides),
        Command::Preset { name } => match name {
            None => {
                for n in presets::names() {
                    println!("{n}");
                }
                Ok(())
            }
            Some(n) => {
                print!("{}", preset_text(&n)?);
                Ok(())
            }
        },
        Command::Sweep { config, omega_min, omega_max, steps } => sweep(&load(&config)?, omega_min, omega_max, steps),
    }
}

fn load(path: &Path) -> CliResult<ExperimentConfig> {
    Ok(crate::config::load_config(path)?)
}

fn preset_text(name: &str) -> CliResult<&'static str> {
    presets::lookup(name).ok_or_else(|| {
        Failure::usage(anyhow!("unknown preset `{name}`; available presets: {}", presets::names().join(", ")))
    })
}

fn dynamics_failure(e: DynamicsError) -> Failure {
    match e {
        DynamicsError::InvalidParams(_) => Failure::validation(e),
        _ => Failure::numerical(e),
    }
}

fn averaging_failure(e: AveragingError) -> Failure {
    match e {
        AveragingError::AsymmetricSpec(_) | AveragingError::InvalidInput(_) | AveragingError::Spec(_) => {
            Failure::validation(e)
        }
        AveragingError::Dynamics(d) => dynamics_failure(d),
        _ => Failure::numerical(e),
    }
}

fn pde_failure(e: PdeError) -> Failure {
    match e {
        PdeError::GridTooSmall(_) | PdeError::Unstable { .. } => Failure::validation(e),
        PdeError::Io(_) => Failure::usage(e),
        _ => Failure::numerical(e),
    }
}

fn tip_failure(e: TipError) -> Failure {
    match e {
        TipError::Csv { .. } => Failure::validation(e),
        TipError::Io(_) => Failure::usage(e),
        _ => Failure::numerical(e),
    }
}

fn system(cfg: &ExperimentConfig) -> CliResult<&SystemParams> {
    cfg.system
        .as_ref()
        .ok_or_else(|| Failure::validation(anyhow!("mode `{}` needs a [system] section", cfg.mode.name())))
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::usage(anyhow::Error::new(e).context(format!("writing {}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(std::io::Error::from)
        .and_then(|_| writeln!(w))
        .and_then(|_| w.flush())
        .map_err(|e| io_failure(path, e))
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let s = serde_json::to_string_pretty(value).map_err(Failure::numerical)?;
    println!("{s}");
    Ok(())
}

fn validate(cfg: &ExperimentConfig) -> CliResult<()> {
    if let Some(p) = &cfg.system {
        let report = p.spec.check_z4_symmetry().map_err(Failure::validation)?;
        if !report.passes {
            let terms: Vec<String> = report
                .violating_terms
                .iter()
                .map(|(c, t)| format!("{}: {t}", c.key()))
                .collect();
            return Err(Failure::validation(anyhow!("perturbation is not Z4-symmetric: {}", terms.join(", "))));
        }
        println!("spec: Z4-symmetric (numeric residual {:.3e})", report.numeric_residual);
    }
    if let Some(p) = &cfg.pde {
        let c = p.coeffs;
        println!(
            "pde: n = {}, dt = {} (limit {:.4}), coefficients a1={} b1={} c1={} a2={} b2={} c2={}",
            p.grid.n,
            p.dt,
            p.grid.dt_limit(),
            c.a1,
            c.b1,
            c.c1,
            c.a2,
            c.b2,
            c.c2
        );
    }
    if let Some(a) = &cfg.analyze {
        if !a.tips.is_file() {
            return Err(Failure::usage(anyhow!("tip file {} not found", a.tips.display())));
        }
    }
    println!("{}: valid {} config", cfg.prefix, cfg.mode.name());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub phi_mean: f64,
    pub phi_maxdev: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeDiagnostic {
    pub preset: Option<String>,
    pub v: Vec2,
    pub omega: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub t_end: f64,
    pub transient_fraction: f64,
    pub phi_mean: f64,
    pub phi_maxdev: f64,
    pub final_psi: Vec2,
    pub final_phi: f64,
    pub conjugacy_residual: f64,
    pub epsilon_sweep: Vec<SweepEntry>,
    /// `phi_maxdev` strictly decreases along the sweep sorted by decreasing epsilon.
    pub sweep_strictly_decreasing: Option<bool>,
}

fn surface_entry(params: &SystemParams, ode: &OdeSettings) -> Result<(SweepEntry, spiral_lattice::Trajectory), DynamicsError> {
    let traj = integrate_sampled(params, ode.initial, ode.dt, ode.t_end, ode.sample_every)?;
    let d = invariant_surface_diagnostic(&traj, ode.transient_fraction)?;
    Ok((SweepEntry { epsilon: params.epsilon, phi_mean: d.phi_mean, phi_maxdev: d.phi_maxdev }, traj))
}

/// Integrate, write `<prefix>_trajectory.csv` and `<prefix>_diagnostic.json`.
pub fn ode_run(cfg: &ExperimentConfig, out_dir: &Path) -> CliResult<OdeDiagnostic> {
    let params = system(cfg)?;
    let ode = cfg
        .ode
        .as_ref()
        .ok_or_else(|| Failure::validation(anyhow!("ode runs need an [integration] section")))?;

    let main = || surface_entry(params, ode);
    let sweep = || {
        ode.epsilon_sweep
            .par_iter()
            .map(|&epsilon| {
                let p = SystemParams { epsilon, ..params.clone() };
                surface_entry(&p, ode).map(|(e, _)| e)
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let (main, sweep) = rayon::join(main, sweep);
    let (entry, traj) = main.map_err(dynamics_failure)?;
    let mut sweep = sweep.map_err(dynamics_failure)?;
    let residual = conjugacy_residual(params, &traj).map_err(dynamics_failure)?;

    sweep.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let decreasing = (sweep.len() >= 2).then(|| sweep.windows(2).all(|w| w[1].phi_maxdev < w[0].phi_maxdev));
    let last = traj.last().wrapped();
    let diag = OdeDiagnostic {
        preset: cfg.preset.clone(),
        v: params.v,
        omega: params.omega,
        epsilon: params.epsilon,
        dt: traj.dt,
        t_end: ode.t_end,
        transient_fraction: ode.transient_fraction,
        phi_mean: entry.phi_mean,
        phi_maxdev: entry.phi_maxdev,
        final_psi: last.psi,
        final_phi: last.phi,
        conjugacy_residual: residual,
        epsilon_sweep: sweep,
        sweep_strictly_decreasing: decreasing,
    };

    let csv = out_dir.join(format!("{}_trajectory.csv", cfg.prefix));
    let mut w = create(&csv)?;
    traj.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| io_failure(&csv, e))?;
    write_json(&out_dir.join(format!("{}_diagnostic.json", cfg.prefix)), &diag)?;
    println!(
        "{}: phi_mean = {:.6}, phi_maxdev = {:.6}, conjugacy residual = {:.3e}",
        cfg.prefix, diag.phi_mean, diag.phi_maxdev, diag.conjugacy_residual
    );
    for s in &diag.epsilon_sweep {
        println!("  eps = {:<8} phi_mean = {:.6}, phi_maxdev = {:.6}", s.epsilon, s.phi_mean, s.phi_maxdev);
    }
    Ok(diag)
}

fn average(cfg: &ExperimentConfig, out_dir: &Path) -> CliResult<()> {
    let params = system(cfg)?;
    params.validate().map_err(dynamics_failure)?;
    let value = if params.omega > 0.0 {
        let field = average_over_phi(&params.spec, params.v, params.omega).map_err(averaging_failure)?;
        let eq = find_equilibria(&field);
        let cycles = if field.is_zero() { Vec::new() } else { find_limit_cycles(&field, &eq) };
        json!({
            "kind": "averaged_field",
            "field": field,
            "equilibria": eq,
            "anchors": anchors_from(&eq),
            "limit_cycles": cycles,
        })
    } else {
        let m = compute_m(&params.spec);
        let zeros = match find_m_zeros(&m) {
            Ok(z) => z,
            Err(AveragingError::DegenerateM) => Vec::new(),
            Err(e) => return Err(averaging_failure(e)),
        };
        json!({ "kind": "m_function", "m": m, "zeros": zeros })
    };
    write_json(&out_dir.join(format!("{}_average.json", cfg.prefix)), &value)?;
    print_json(&value)
}

pub fn prediction(cfg: &ExperimentConfig) -> CliResult<Prediction> {
    predict(system(cfg)?).map_err(averaging_failure)
}

fn predict_cmd(cfg: &ExperimentConfig, out_dir: &Path) -> CliResult<()> {
    let p = prediction(cfg)?;
    write_json(&out_dir.join(format!("{}_prediction.json", cfg.prefix)), &p)?;
    print_json(&p)
}

fn sweep(cfg: &ExperimentConfig, lo: f64, hi: f64, steps: usize) -> CliResult<()> {
    let params = system(cfg)?;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo && steps >= 1) {
        return Err(Failure::usage(anyhow!("need 0 <= omega-min <= omega-max and steps >= 1")));
    }
    let omegas: Vec<f64> = (0..steps)
        .map(|k| if steps == 1 { lo } else { lo + (hi - lo) * k as f64 / (steps - 1) as f64 })
        .collect();
    let rows: Vec<CliResult<Prediction>> = omegas
        .par_iter()
        .map(|&omega| predict(&SystemParams { omega, ..params.clone() }).map_err(averaging_failure))
        .collect();
    println!("omega,guard_ratio,mode,stable_anchors,limit_cycles,stable_travelling");
    for (omega, row) in omegas.iter().zip(rows) {
        let p = row?;
        let mode = serde_json::to_value(p.mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        println!(
            "{omega},{},{mode},{},{},{}",
            p.guard_ratio.map(|g| g.to_string()).unwrap_or_default(),
            p.anchors.iter().filter(|a| a.stable).count(),
            p.meander_orbits.len(),
            p.travelling.iter().filter(|t| t.wave.stable).count()
        );
    }
    Ok(())
}

fn analyze(settings: &AnalyzeSettings) -> CliResult<ClassificationRecord> {
    let file = File::open(&settings.tips)
        .map_err(|e| Failure::usage(anyhow::Error::new(e).context(format!("reading {}", settings.tips.display()))))?;
    let traj = TipTrajectory::read_csv(BufReader::new(file)).map_err(tip_failure)?;
    let c = classify_with(&traj, settings.transient_fraction, settings.threshold).map_err(tip_failure)?;
    Ok(ClassificationRecord::new(c))
}

/// How one PDE initial condition was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialCondition {
    /// The base spawn rotated by `quarter_turns` counter-clockwise quarter turns.
    Conjugate { spawn: Vec2, quarter_turns: u8 },
    Spawn { spawn: Vec2 },
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeRunReport {
    pub label: String,
    pub initial: InitialCondition,
    pub tips_file: String,
    pub samples: usize,
    pub classification: Option<ClassificationRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeSummary {
    pub preset: Option<String>,
    pub coefficients: Option<String>,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub runs: Vec<PdeRunReport>,
    /// Largest distance between the anchor of each conjugate run and the
    /// correspondingly rotated anchor of the first run.
    pub conjugate_anchor_mismatch: Option<f64>,
}

fn apply_overrides(p: &PdeSettings, o: &PdeOverrides) -> CliResult<PdeSettings> {
    let mut p = p.clone();
    if let Some(n) = o.n {
        p.grid = GridSpec::new(n).map_err(pde_failure)?;
        if p.dt > p.grid.dt_limit() {
            return Err(Failure::validation(anyhow!("dt = {} exceeds the limit {} at n = {n}", p.dt, p.grid.dt_limit())));
        }
    }
    if let Some(t) = o.t_end {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::usage(anyhow!("--t-end must be positive")));
        }
        p.t_end = t;
    }
    Ok(p)
}

/// Spawn, run and classify every initial condition of the config.
pub fn pde_run(cfg: &ExperimentConfig, out_dir: &Path, overrides: &PdeOverrides) -> CliResult<PdeSummary> {
    let p = apply_overrides(
        cfg.pde
            .as_ref()
            .ok_or_else(|| Failure::validation(anyhow!("pde runs need a [pde] section")))?,
        overrides,
    )?;
    let spawn_opts = |center: Vec2| SpawnOptions { center, settle_time: p.settle_time, dt: p.dt, ..Default::default() };

    let mut ics: Vec<InitialCondition> = (0..p.conjugates as u8)
        .map(|k| InitialCondition::Conjugate { spawn: p.spawn, quarter_turns: k })
        .collect();
    ics.extend(p.extra_spawns.iter().map(|&spawn| InitialCondition::Spawn { spawn }));
    let multiple = ics.len() > 1;
    log::info!("{}: {} initial condition(s) on a {}x{} grid", cfg.prefix, ics.len(), p.grid.n, p.grid.n);

    let base = spawn_spiral(&p.grid, &spawn_opts(p.spawn)).map_err(pde_failure)?;
    let results: Vec<(InitialCondition, Result<(TipTrajectory, FieldPair), PdeError>)> = ics
        .par_iter()
        .map(|&ic| {
            let fields = match ic {
                InitialCondition::Conjugate { quarter_turns, .. } => {
                    Ok((0..quarter_turns).fold(base.clone(), |f, _| f.rotate_quarter()))
                }
                InitialCondition::Spawn { spawn } => spawn_spiral(&p.grid, &spawn_opts(spawn)),
            };
            let opts = RunOptions { dt: p.dt, t_end: p.t_end, sample_every: p.sample_every };
            let out = fields.and_then(|f| run(f, &p.coeffs, &p.grid, &opts)).map(|o| (o.tips, o.fields));
            (ic, out)
        })
        .collect();

    let mut runs = Vec::new();
    let mut first_failure: Option<Failure> = None;
    for (idx, (ic, result)) in results.into_iter().enumerate() {
        let label = if multiple { format!("ic{}", idx + 1) } else { String::new() };
        let stem = if multiple { format!("{}_{label}", cfg.prefix) } else { cfg.prefix.clone() };
        let tips_path = out_dir.join(format!("{stem}_tips.csv"));
        let mut report = PdeRunReport {
            label: if multiple { label } else { "ic1".into() },
            initial: ic,
            tips_file: file_name(&tips_path),
            samples: 0,
            classification: None,
            error: None,
        };
        match result {
            Err(e) => {
                report.error = Some(e.to_string());
                first_failure.get_or_insert(pde_failure(e));
            }
            Ok((tips, fields)) => {
                report.samples = tips.len();
                let mut w = create(&tips_path)?;
                tips.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| io_failure(&tips_path, e))?;
                if overrides.snapshots {
                    let snap = out_dir.join(format!("{stem}_final.snap"));
                    let mut w = create(&snap)?;
                    write_snapshot(&fields, &mut w).map_err(pde_failure)?;
                    w.flush().map_err(|e| io_failure(&snap, e))?;
                }
                match classify_with(&tips, p.transient_fraction, p.threshold) {
                    Ok(c) => {
                        let record = ClassificationRecord::new(c);
                        write_json(&out_dir.join(format!("{stem}_classification.json")), &record)?;
                        report.classification = Some(record);
                    }
                    Err(e) => {
                        report.error = Some(e.to_string());
                        first_failure.get_or_insert(tip_failure(e));
                    }
                }
            }
        }
        runs.push(report);
    }

    let summary = PdeSummary {
        preset: cfg.preset.clone(),
        coefficients: p.coeff_name.clone(),
        n: p.grid.n,
        dt: p.dt,
        t_end: p.t_end,
        conjugate_anchor_mismatch: conjugate_mismatch(&runs),
        runs,
    };
    write_json(&out_dir.join(format!("{}_summary.json", cfg.prefix)), &summary)?;
    for r in &summary.runs {
        match &r.classification {
            Some(c) => println!(
                "{} {}: {:?}, anchor {:?}, lattice distance {:?}, dual distance {:?}",
                cfg.prefix,
                r.label,
                c.classification.kind,
                c.classification.anchor,
                c.lattice_distance,
                c.dual_distance
            ),
            None => println!("{} {}: failed: {}", cfg.prefix, r.label, r.error.as_deref().unwrap_or("")),
        }
    }
    match first_failure {
        Some(f) => Err(f),
        None => Ok(summary),
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn conjugate_mismatch(runs: &[PdeRunReport]) -> Option<f64> {
    let anchor = |r: &PdeRunReport| r.classification.as_ref().and_then(|c| c.classification.anchor);
    let conj: Vec<(u8, Option<Vec2>)> = runs
        .iter()
        .filter_map(|r| match r.initial {
            InitialCondition::Conjugate { quarter_turns, .. } => Some((quarter_turns, anchor(r))),
            InitialCondition::Spawn { .. } => None,
        })
        .collect();
    if conj.len() < 2 {
        return None;
    }
    let a0 = conj.iter().find(|(k, _)| *k == 0)?.1?;
    conj.iter()
        .filter(|(k, _)| *k != 0)
        .map(|(k, a)| a.map(|a| a.distance(a0.rotate_quarter(*k as i32))))
        .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))
}

/// What a preset run produced.
#[derive(Debug)]
pub enum ReproOutput {
    Ode(OdeDiagnostic),
    Pde(PdeSummary),
}

pub fn repro_config(name: &str) -> CliResult<ExperimentConfig> {
    let text = preset_text(name)?;
    crate::config::parse_config(text, None)
        .map_err(|e| Failure::validation(anyhow::Error::new(e).context(format!("bundled preset `{name}`"))))
}

pub fn run_preset(name: &str, out_dir: &Path, overrides: &PdeOverrides) -> CliResult<ReproOutput> {
    let mut cfg = repro_config(name)?;
    match cfg.mode {
        Mode::Ode => {
            if let (Some(t), Some(ode)) = (overrides.t_end, cfg.ode.as_mut()) {
                ode.t_end = t;
            }
            ode_run(&cfg, out_dir).map(ReproOutput::Ode)
        }
        Mode::Pde => pde_run(&cfg, out_dir, overrides).map(ReproOutput::Pde),
        other => Err(Failure::validation(anyhow!("preset `{name}` has unsupported mode `{}`", other.name()))),
    }
}

fn repro(name: &str, out: &OutArgs, overrides: &PdeOverrides) -> CliResult<()> {
    std::fs::create_dir_all(&out.out_dir)
        .with_context(|| format!("creating {}", out.out_dir.display()))
        .map_err(Failure::usage)?;
    run_preset(name, &out.out_dir, overrides).map(drop)
}
