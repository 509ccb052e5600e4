use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::assembly::Formulation;
use crate::error::{Error, Result};
use crate::mechanics::MaterialParams;
use crate::timeloop::TimeIntegratorConfig;
use crate::verification::{DecayConfig, SolveMode, StudyParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Convergence,
    Sweep,
    EnergyTest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Convergence => "convergence",
            Command::Sweep => "sweep",
            Command::EnergyTest => "energy-test",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "solve" => Ok(Command::Solve),
            "convergence" => Ok(Command::Convergence),
            "sweep" => Ok(Command::Sweep),
            "energy-test" => Ok(Command::EnergyTest),
            other => Err(format!("unknown command `{other}` (solve, convergence, sweep, energy-test)")),
        }
    }
}

/// Everything a run needs. Read from `key = value` lines.
///
/// Every command loops over `formulations` and `xi_rs`, except `sweep`, which
/// puts all volume fractions of one formulation into a single table.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub command: Command,
    pub formulations: Vec<Formulation>,
    pub xi_rs: Vec<f64>,
    /// Cells per side, coarse to fine. `solve` uses the last entry.
    pub levels: Vec<usize>,
    pub velocity_degree: usize,
    pub pressure_degree: usize,
    pub dt: f64,
    pub bdf_order: usize,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub line_search: bool,
    pub enforce_volume_fraction: bool,
    pub report_times: Vec<f64>,
    pub mode: SolveMode,
    pub rho_s_star: f64,
    pub rho_f_star: f64,
    pub mu_f: f64,
    pub k_s: f64,
    pub shear_modulus: f64,
    pub energy_n: usize,
    pub energy_steps: usize,
    pub energy_dt: f64,
    pub energy_slack: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// `None` falls back to `POROMIX_JOBS` and then to 1.
    pub jobs: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let ti = TimeIntegratorConfig::default();
        let unit = MaterialParams::default();
        StudyConfig {
            command: Command::Convergence,
            formulations: vec![Formulation::FluidVelocity],
            xi_rs: vec![0.5],
            levels: vec![4, 8, 16, 32],
            velocity_degree: 2,
            pressure_degree: 2,
            dt: ti.dt,
            bdf_order: ti.bdf_order,
            t_end: ti.t_end,
            newton_tol: ti.newton_tol,
            newton_max_iter: ti.newton_max_iter,
            line_search: ti.line_search,
            enforce_volume_fraction: true,
            report_times: vec![0.7, 1.0],
            mode: SolveMode::Solve,
            rho_s_star: unit.rho_s_star,
            rho_f_star: unit.rho_f_star,
            mu_f: unit.mu_f,
            k_s: unit.k_s,
            shear_modulus: unit.g,
            energy_n: 8,
            energy_steps: 200,
            energy_dt: 0.01,
            energy_slack: 1e-8,
            output_dir: PathBuf::from("out"),
            seed: 1,
            jobs: None,
        }
    }
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    v.split(',').map(|s| s.trim().parse::<T>().map_err(|e| format!("`{}`: {e}", s.trim()))).collect()
}

fn scalar<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Line number used for values that come from `--set` rather than a file.
pub const COMMAND_LINE: usize = 0;

impl StudyConfig {
    /// Applies one `key = value` pair and checks its range. Constraints
    /// between keys are left to [`StudyConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let err = |reason: String| Error::Config { key: key.to_string(), line, reason };
        let v = value.trim();
        let r: std::result::Result<(), String> = (|| {
            match key {
                "command" => self.command = v.parse()?,
                "formulation" => {
                    self.formulations = if v == "both" {
                        vec![Formulation::FluidVelocity, Formulation::FiltrationVelocity]
                    } else {
                        list::<Formulation>(v)?
                    }
                }
                "xi_Rs" => self.xi_rs = list(v)?,
                "levels" => self.levels = list(v)?,
                "h" => {
                    self.levels = list::<f64>(v)?
                        .into_iter()
                        .map(|h| {
                            let n = (1.0 / h).round();
                            if h > 0.0 && ((1.0 / h) - n).abs() < 1e-9 && n >= 1.0 {
                                Ok(n as usize)
                            } else {
                                Err(format!("h = {h} is not the reciprocal of a positive integer"))
                            }
                        })
                        .collect::<std::result::Result<_, _>>()?
                }
                "velocity_degree" => self.velocity_degree = scalar(v)?,
                "p_degree" => self.pressure_degree = scalar(v)?,
                "dt" => self.dt = scalar(v)?,
                "bdf_order" => self.bdf_order = scalar(v)?,
                "t_end" => self.t_end = scalar(v)?,
                "newton_tol" => self.newton_tol = scalar(v)?,
                "newton_max_iter" => self.newton_max_iter = scalar(v)?,
                "line_search" => self.line_search = scalar(v)?,
                "enforce_volume_fraction" => self.enforce_volume_fraction = scalar(v)?,
                "report_times" => self.report_times = list(v)?,
                "mode" => {
                    self.mode = match v {
                        "solve" => SolveMode::Solve,
                        "exact-injection" => SolveMode::ExactInjection,
                        _ => return Err(format!("`{v}`: expected solve or exact-injection")),
                    }
                }
                "rho_s_star" => self.rho_s_star = scalar(v)?,
                "rho_f_star" => self.rho_f_star = scalar(v)?,
                "mu_f" => self.mu_f = scalar(v)?,
                "k_s" => self.k_s = scalar(v)?,
                "G" => self.shear_modulus = scalar(v)?,
                "energy_n" => self.energy_n = scalar(v)?,
                "energy_steps" => self.energy_steps = scalar(v)?,
                "energy_dt" => self.energy_dt = scalar(v)?,
                "energy_slack" => self.energy_slack = scalar(v)?,
                "output_dir" => self.output_dir = PathBuf::from(v),
                "seed" => self.seed = scalar(v)?,
                "jobs" => self.jobs = Some(scalar(v)?),
                _ => return Err("unknown key".to_string()),
            }
            self.key_problem(key).map_or(Ok(()), Err)
        })();
        r.map_err(err)
    }

    /// Parses config text. Blank lines and text after `#` are ignored; the
    /// result is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = StudyConfig::default();
        for (i, raw) in text.lines().enumerate() {
            cfg.apply_line(raw, i + 1)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one config line; blank and comment-only lines are accepted.
    pub fn apply_line(&mut self, raw: &str, line: usize) -> Result<()> {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            return Ok(());
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config { key: content.to_string(), line, reason: "expected `key = value`".into() });
        };
        self.set(key.trim(), value, line)
    }

    pub fn serialize(&self) -> String {
        let mut lines = vec![
            format!("command = {}", self.command),
            format!("formulation = {}", join(&self.formulations)),
            format!("xi_Rs = {}", join(&self.xi_rs)),
            format!("levels = {}", join(&self.levels)),
            format!("velocity_degree = {}", self.velocity_degree),
            format!("p_degree = {}", self.pressure_degree),
            format!("dt = {}", self.dt),
            format!("bdf_order = {}", self.bdf_order),
            format!("t_end = {}", self.t_end),
            format!("newton_tol = {:e}", self.newton_tol),
            format!("newton_max_iter = {}", self.newton_max_iter),
            format!("line_search = {}", self.line_search),
            format!("enforce_volume_fraction = {}", self.enforce_volume_fraction),
            format!("report_times = {}", join(&self.report_times)),
            format!(
                "mode = {}",
                match self.mode {
                    SolveMode::Solve => "solve",
                    SolveMode::ExactInjection => "exact-injection",
                }
            ),
            format!("rho_s_star = {}", self.rho_s_star),
            format!("rho_f_star = {}", self.rho_f_star),
            format!("mu_f = {}", self.mu_f),
            format!("k_s = {}", self.k_s),
            format!("G = {}", self.shear_modulus),
            format!("energy_n = {}", self.energy_n),
            format!("energy_steps = {}", self.energy_steps),
            format!("energy_dt = {}", self.energy_dt),
            format!("energy_slack = {:e}", self.energy_slack),
            format!("output_dir = {}", self.output_dir.display()),
            format!("seed = {}", self.seed),
        ];
        if let Some(j) = self.jobs {
            lines.push(format!("jobs = {j}"));
        }
        lines.join("\n") + "\n"
    }

    /// Range problem with the value behind one key, independent of the others.
    fn key_problem(&self, key: &str) -> Option<String> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match key {
            "formulation" if self.formulations.is_empty() => Some("empty list".into()),
            "xi_Rs" if self.xi_rs.is_empty() => Some("empty list".into()),
            "xi_Rs" => self.xi_rs.iter().find(|&&xi| !(xi > 0.0 && xi < 1.0)).map(|xi| format!("{xi} outside (0, 1)")),
            "levels" | "h" if self.levels.is_empty() || self.levels.contains(&0) => {
                Some("need positive cell counts".into())
            }
            "velocity_degree" if !(1..=3).contains(&self.velocity_degree) => {
                Some(format!("{} not in 1..=3", self.velocity_degree))
            }
            "p_degree" if !(2..=3).contains(&self.pressure_degree) => {
                Some(format!("{} not in {{2, 3}}", self.pressure_degree))
            }
            "dt" if !positive(self.dt) => Some(format!("{} must be positive", self.dt)),
            "bdf_order" if !(1..=2).contains(&self.bdf_order) => Some(format!("{} not in {{1, 2}}", self.bdf_order)),
            "t_end" if !positive(self.t_end) => Some(format!("{} must be positive", self.t_end)),
            "newton_tol" if !positive(self.newton_tol) => Some(format!("{} must be positive", self.newton_tol)),
            "newton_max_iter" if self.newton_max_iter == 0 => Some("must be at least 1".into()),
            "rho_s_star" if !positive(self.rho_s_star) => Some(format!("{} must be positive", self.rho_s_star)),
            "rho_f_star" if !positive(self.rho_f_star) => Some(format!("{} must be positive", self.rho_f_star)),
            "mu_f" if !positive(self.mu_f) => Some(format!("{} must be positive", self.mu_f)),
            "k_s" if !positive(self.k_s) => Some(format!("{} must be positive", self.k_s)),
            "G" if !positive(self.shear_modulus) => Some(format!("{} must be positive", self.shear_modulus)),
            "energy_n" if self.energy_n == 0 => Some("must be at least 1".into()),
            "energy_steps" if self.energy_steps == 0 => Some("must be at least 1".into()),
            "energy_dt" if !positive(self.energy_dt) => Some(format!("{} must be positive", self.energy_dt)),
            "energy_slack" if !(self.energy_slack >= 0.0) => Some(format!("{} must be nonnegative", self.energy_slack)),
            "jobs" if self.jobs == Some(0) => Some("must be at least 1".into()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        const KEYS: [&str; 22] = [
            "formulation",
            "xi_Rs",
            "levels",
            "velocity_degree",
            "p_degree",
            "dt",
            "bdf_order",
            "t_end",
            "newton_tol",
            "newton_max_iter",
            "rho_s_star",
            "rho_f_star",
            "mu_f",
            "k_s",
            "G",
            "energy_n",
            "energy_steps",
            "energy_dt",
            "energy_slack",
            "jobs",
            "report_times",
            "command",
        ];
        let bad = |key: &str, reason: String| Err(Error::Config { key: key.into(), line: COMMAND_LINE, reason });
        for key in KEYS {
            if let Some(reason) = self.key_problem(key) {
                return bad(key, reason);
            }
        }
        if let Some(t) = self.report_times.iter().find(|&&t| !(0.0..=self.t_end).contains(&t)) {
            return bad("report_times", format!("{t} outside [0, t_end]"));
        }
        Ok(())
    }

    pub fn material(&self, xi_rs: f64) -> MaterialParams {
        MaterialParams {
            rho_s_star: self.rho_s_star,
            rho_f_star: self.rho_f_star,
            mu_f: self.mu_f,
            k_s: self.k_s,
            g: self.shear_modulus,
            xi_rs,
            enforce_volume_fraction: self.enforce_volume_fraction,
        }
    }

    pub fn integrator(&self) -> TimeIntegratorConfig {
        TimeIntegratorConfig {
            dt: self.dt,
            bdf_order: self.bdf_order,
            t_end: self.t_end,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            line_search: self.line_search,
            ..Default::default()
        }
    }

    /// Study parameters for one formulation and volume fraction.
    pub fn study(&self, formulation: Formulation, xi_rs: f64, jobs: usize) -> StudyParams {
        StudyParams {
            formulation,
            params: self.material(xi_rs),
            velocity_degree: self.velocity_degree,
            pressure_degree: self.pressure_degree,
            levels: self.levels.clone(),
            integrator: self.integrator(),
            report_times: self.report_times.clone(),
            mode: self.mode,
            jobs,
            ..Default::default()
        }
    }

    pub fn decay(&self, formulation: Formulation, xi_rs: f64) -> DecayConfig {
        DecayConfig {
            formulation,
            params: self.material(xi_rs),
            n: self.energy_n,
            velocity_degree: self.velocity_degree,
            pressure_degree: self.pressure_degree,
            integrator: TimeIntegratorConfig {
                dt: self.energy_dt,
                bdf_order: 1,
                t_end: self.energy_steps as f64 * self.energy_dt,
                ..self.integrator()
            },
            seed: self.seed,
            slack: self.energy_slack,
            ..Default::default()
        }
    }
}
