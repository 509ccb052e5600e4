//! Command-line driver: config handling, study dispatch and output files.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub use config::{Command, StudyConfig, COMMAND_LINE};

use crate::assembly::Formulation;
use crate::error::Result;
use crate::timeloop::write_energy_log;
use crate::verification::{
    energy_decay, format_rate, run_convergence_study, run_level, xi_sweep, ConvergenceReport, Norm, StudyParams,
};

/// Environment variable read when the config does not set `jobs`.
pub const JOBS_ENV: &str = "POROMIX_JOBS";

/// Writes through a temporary sibling file and renames it into place, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or_default()));
    {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        body(&mut out)?;
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `<command>_<formulation>_xi<xi>_p<degree>` without extension.
pub fn output_stem(command: Command, formulation: Formulation, xi: &str, p_degree: usize) -> String {
    format!("{command}_{formulation}_xi{xi}_p{p_degree}")
}

/// Number of worker threads: config value, then `POROMIX_JOBS`, then 1.
pub fn resolve_jobs(cfg: &StudyConfig, env: Option<&str>) -> usize {
    cfg.jobs.or_else(|| env.and_then(|s| s.trim().parse().ok()).filter(|&j| j > 0)).unwrap_or(1)
}

/// What a run produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    /// Solver failures and failed property gates.
    pub failures: Vec<String>,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs the configured command, writing artifacts into `cfg.output_dir` and a
/// human-readable summary to `log`.
pub fn run(cfg: &StudyConfig, jobs: usize, log: &mut dyn Write) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut summary = RunSummary::default();
    match cfg.command {
        Command::Solve => run_solve(cfg, jobs, log, &mut summary)?,
        Command::Convergence => run_convergence(cfg, jobs, log, &mut summary)?,
        Command::Sweep => run_sweep(cfg, jobs, log, &mut summary)?,
        Command::EnergyTest => run_energy_test(cfg, log, &mut summary)?,
    }
    for f in &summary.failures {
        writeln!(log, "FAILED: {f}")?;
    }
    Ok(summary)
}

fn file(cfg: &StudyConfig, stem: &str, ext: &str) -> PathBuf {
    cfg.output_dir.join(format!("{stem}.{ext}"))
}

fn push_file(summary: &mut RunSummary, path: PathBuf, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    write_atomic(&path, body)?;
    summary.files.push(path);
    Ok(())
}

fn run_solve(cfg: &StudyConfig, jobs: usize, log: &mut dyn Write, summary: &mut RunSummary) -> Result<()> {
    let n = *cfg.levels.last().expect("validated nonempty");
    for &formulation in &cfg.formulations {
        for &xi in &cfg.xi_rs {
            let mut study = cfg.study(formulation, xi, jobs);
            study.levels = vec![n];
            let result = run_level(&study, n);
            let report = ConvergenceReport { config: study.clone(), levels: vec![result] };
            let stem = output_stem(Command::Solve, formulation, &xi.to_string(), cfg.pressure_degree);
            push_file(summary, file(cfg, &stem, "csv"), |w| report.write_csv(w))?;
            push_file(summary, file(cfg, &format!("{stem}_energy"), "csv"), |w| {
                write_energy_log(&report.levels[0].energy_log, w)
            })?;
            push_file(summary, file(cfg, &stem, "meta.txt"), |w| report.write_metadata(w))?;
            let level = &report.levels[0];
            match &level.failure {
                Some(e) => summary.failures.push(format!("{formulation} xi={xi} n={n}: {e}")),
                None => {
                    writeln!(log, "{formulation} xi_Rs={xi} n={n}: {} Newton iterations", level.newton_iterations)?;
                    write_errors(&study, &report, log)?;
                }
            }
        }
    }
    Ok(())
}

fn write_errors(study: &StudyParams, report: &ConvergenceReport, log: &mut dyn Write) -> Result<()> {
    let last = report.levels.len() - 1;
    for &t in &study.report_times {
        write!(log, "  t={t}:")?;
        for norm in Norm::ALL {
            let e = report.error(last, t, norm).map_or_else(|| "FAILED".into(), |e| format!("{e:.3e}"));
            write!(log, " {}-{}={}", norm.field().name(), norm.kind(), e)?;
            if report.levels.len() > 1 {
                write!(log, " ({})", format_rate(report.final_rate(t, norm)))?;
            }
        }
        writeln!(log)?;
    }
    Ok(())
}

fn run_convergence(cfg: &StudyConfig, jobs: usize, log: &mut dyn Write, summary: &mut RunSummary) -> Result<()> {
    for &formulation in &cfg.formulations {
        for &xi in &cfg.xi_rs {
            let study = cfg.study(formulation, xi, jobs);
            let report = run_convergence_study(&study)?;
            let stem = output_stem(Command::Convergence, formulation, &xi.to_string(), cfg.pressure_degree);
            push_file(summary, file(cfg, &stem, "csv"), |w| report.write_csv(w))?;
            push_file(summary, file(cfg, &stem, "dat"), |w| report.write_plot_data(w))?;
            push_file(summary, file(cfg, &stem, "meta.txt"), |w| report.write_metadata(w))?;
            for l in report.levels.iter().filter(|l| l.failure.is_some()) {
                summary.failures.push(format!(
                    "{formulation} xi={xi} n={}: {}",
                    l.n,
                    l.failure.as_deref().unwrap_or("")
                ));
            }
            writeln!(log, "{formulation} xi_Rs={xi} levels={:?}, finest errors (last rate):", cfg.levels)?;
            write_errors(&study, &report, log)?;
        }
    }
    Ok(())
}

fn run_sweep(cfg: &StudyConfig, jobs: usize, log: &mut dyn Write, summary: &mut RunSummary) -> Result<()> {
    let xi_token = cfg.xi_rs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("-");
    for &formulation in &cfg.formulations {
        let base = cfg.study(formulation, cfg.xi_rs[0], jobs);
        let report = xi_sweep(&base, &cfg.xi_rs, &[formulation])?;
        let stem = output_stem(Command::Sweep, formulation, &xi_token, cfg.pressure_degree);
        push_file(summary, file(cfg, &stem, "csv"), |w| report.write_csv(w))?;
        push_file(summary, file(cfg, &stem, "dat"), |w| report.write_plot_data(w))?;
        push_file(summary, file(cfg, &stem, "meta.txt"), |w| report.write_metadata(w))?;
        for e in &report.entries {
            match &e.result.failure {
                Some(f) => summary.failures.push(format!("{formulation} xi={}: {f}", e.xi_rs)),
                None => {
                    write!(log, "{formulation} xi_Rs={} n={}:", e.xi_rs, report.n)?;
                    for &t in &cfg.report_times {
                        for norm in [Norm::VfL2, Norm::VfltL2, Norm::PL2] {
                            let v = e.result.error(t, norm).unwrap_or(f64::NAN);
                            write!(log, " t={t} {}-{}={v:.3e}", norm.field().name(), norm.kind())?;
                        }
                    }
                    writeln!(log)?;
                }
            }
        }
    }
    Ok(())
}

fn run_energy_test(cfg: &StudyConfig, log: &mut dyn Write, summary: &mut RunSummary) -> Result<()> {
    for &formulation in &cfg.formulations {
        for &xi in &cfg.xi_rs {
            let decay = cfg.decay(formulation, xi);
            let stem = output_stem(Command::EnergyTest, formulation, &xi.to_string(), cfg.pressure_degree);
            match energy_decay(&decay) {
                Ok(r) => {
                    push_file(summary, file(cfg, &stem, "csv"), |w| write_energy_log(&r.log, w))?;
                    let verdict = if r.passed { "PASS" } else { "FAIL" };
                    writeln!(
                        log,
                        "{verdict} energy-test {formulation} xi_Rs={xi}: max increase {:.3e} (slack {:e}), max balance excess {:.3e}",
                        r.max_increase, decay.slack, r.max_balance_excess
                    )?;
                    if !r.passed {
                        summary
                            .failures
                            .push(format!("energy-test {formulation} xi={xi}: max increase {:e}", r.max_increase));
                    }
                }
                Err(e) => {
                    writeln!(log, "FAIL energy-test {formulation} xi_Rs={xi}: {e}")?;
                    summary.failures.push(format!("energy-test {formulation} xi={xi}: {e}"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("poromix-cli-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn names_and_jobs() {
        assert_eq!(
            output_stem(Command::Convergence, Formulation::FluidVelocity, "0.5", 2),
            "convergence_fluid_xi0.5_p2"
        );
        let mut cfg = StudyConfig::default();
        assert_eq!(resolve_jobs(&cfg, None), 1);
        assert_eq!(resolve_jobs(&cfg, Some("3")), 3);
        assert_eq!(resolve_jobs(&cfg, Some("zero")), 1);
        cfg.jobs = Some(2);
        assert_eq!(resolve_jobs(&cfg, Some("3")), 2);
    }

    #[test]
    fn injected_convergence_writes_expected_shape() {
        let dir = temp_dir("conv");
        let cfg = StudyConfig {
            mode: crate::verification::SolveMode::ExactInjection,
            output_dir: dir.clone(),
            ..Default::default()
        };
        let mut log = Vec::new();
        let summary = run(&cfg, 2, &mut log).unwrap();
        assert!(summary.success());
        let csv = fs::read_to_string(dir.join("convergence_fluid_xi0.5_p2.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 8 * 4 * 2);
        assert!(dir.join("convergence_fluid_xi0.5_p2.dat").exists());
        assert!(fs::read_dir(&dir).unwrap().all(|e| !e.unwrap().path().to_string_lossy().ends_with(".tmp")));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn sweep_marks_failures_without_aborting() {
        let dir = temp_dir("sweep");
        let cfg = StudyConfig {
            command: Command::Sweep,
            xi_rs: vec![0.5, 0.7],
            levels: vec![2],
            t_end: 0.004,
            report_times: vec![0.004],
            newton_max_iter: 1,
            newton_tol: 1e-300,
            output_dir: dir.clone(),
            ..Default::default()
        };
        let summary = run(&cfg, 1, &mut Vec::new()).unwrap();
        assert_eq!(summary.failures.len(), 2);
        let csv = fs::read_to_string(dir.join("sweep_fluid_xi0.5-0.7_p2.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 8);
        assert!(csv.lines().skip(1).all(|l| l.contains("FAILED")));
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn energy_test_prints_verdict() {
        let dir = temp_dir("energy");
        let cfg = StudyConfig {
            command: Command::EnergyTest,
            xi_rs: vec![0.9],
            energy_n: 4,
            energy_steps: 10,
            output_dir: dir.clone(),
            ..Default::default()
        };
        let mut log = Vec::new();
        let summary = run(&cfg, 1, &mut log).unwrap();
        assert!(summary.success());
        assert!(String::from_utf8(log).unwrap().starts_with("PASS energy-test fluid xi_Rs=0.9"));
        assert!(dir.join("energy-test_fluid_xi0.9_p2.csv").exists());
        fs::remove_dir_all(dir).unwrap();
    }
}
