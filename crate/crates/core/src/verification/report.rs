use std::io::Write;

use super::{compute_rate, LevelResult, Norm, SolveMode, StudyParams};
use crate::assembly::Formulation;
use crate::error::Result;
use crate::femspace::error_quadrature_degree;

const CSV_HEADER: &str = "formulation,xi_Rs,p_degree,h,t,field,norm,error,rate";

/// Text used for a rate in tables: the value, or `n/a` when undefined.
pub fn format_rate(rate: Option<f64>) -> String {
    rate.map_or_else(|| "n/a".to_string(), |r| format!("{r:.4}"))
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub config: StudyParams,
    pub levels: Vec<LevelResult>,
}

impl ConvergenceReport {
    pub fn error(&self, level: usize, t: f64, norm: Norm) -> Option<f64> {
        self.levels.get(level)?.error(t, norm)
    }

    /// Rate between `level - 1` and `level`.
    pub fn rate(&self, level: usize, t: f64, norm: Norm) -> Option<f64> {
        if level == 0 {
            return None;
        }
        compute_rate(self.error(level - 1, t, norm)?, self.error(level, t, norm)?)
    }

    /// Rate between the two finest levels.
    pub fn final_rate(&self, t: f64, norm: Norm) -> Option<f64> {
        self.rate(self.levels.len().checked_sub(1)?, t, norm)
    }

    pub fn failed(&self) -> bool {
        self.levels.iter().any(|l| l.failure.is_some())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        let c = &self.config;
        for (i, level) in self.levels.iter().enumerate() {
            for &t in &c.report_times {
                for norm in Norm::ALL {
                    let error = level.error(t, norm).map_or_else(|| "FAILED".to_string(), |e| format!("{e:.6e}"));
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{}",
                        c.formulation,
                        c.params.xi_rs,
                        c.pressure_degree,
                        level.h,
                        t,
                        norm.field().name(),
                        norm.kind(),
                        error,
                        format_rate(self.rate(i, t, norm))
                    )?;
                }
            }
        }
        Ok(())
    }

    /// One gnuplot data block (`h error`) per time, field and norm, separated
    /// by two blank lines so `index` can select them.
    pub fn write_plot_data<W: Write>(&self, mut out: W) -> Result<()> {
        let mut first = true;
        for &t in &self.config.report_times {
            for norm in Norm::ALL {
                if !first {
                    writeln!(out, "\n")?;
                }
                first = false;
                writeln!(out, "# t={} field={} norm={}", t, norm.field().name(), norm.kind())?;
                for level in &self.levels {
                    if let Some(e) = level.error(t, norm) {
                        writeln!(out, "{} {:.6e}", level.h, e)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_metadata<W: Write>(&self, mut out: W) -> Result<()> {
        write_metadata(&self.config, &self.levels, &mut out)
    }
}

fn write_metadata<W: Write>(c: &StudyParams, levels: &[LevelResult], out: &mut W) -> Result<()> {
    let qdeg = 2 * c.velocity_degree.max(c.pressure_degree) + 2;
    writeln!(out, "formulation = {}", c.formulation)?;
    writeln!(out, "xi_Rs = {}", c.params.xi_rs)?;
    writeln!(out, "velocity_degree = {}", c.velocity_degree)?;
    writeln!(out, "pressure_degree = {}", c.pressure_degree)?;
    writeln!(out, "dt = {}", c.integrator.dt)?;
    writeln!(out, "bdf_order = {}", c.integrator.bdf_order)?;
    writeln!(out, "newton_tol = {:e}", c.integrator.newton_tol)?;
    writeln!(out, "assembly_quadrature_degree = {qdeg}")?;
    writeln!(
        out,
        "error_quadrature_degree = {} (velocity fields), {} (pressure)",
        error_quadrature_degree(c.velocity_degree),
        error_quadrature_degree(c.pressure_degree)
    )?;
    let mode = match c.mode {
        SolveMode::Solve => "solve",
        SolveMode::ExactInjection => "exact-injection",
    };
    writeln!(out, "mode = {mode}")?;
    writeln!(
        out,
        "sources = closed-form manufactured body forces, mass source g in the pressure-test row, \
         boundary flux h, stabilization-row corrections"
    )?;
    writeln!(out, "boundary = u_s and v_s Dirichlet on the whole boundary; none on the third velocity or p")?;
    writeln!(out, "pressure_gauge = zero-mean multiplier")?;
    for l in levels {
        let status = l.failure.as_deref().unwrap_or("ok");
        writeln!(
            out,
            "level n={} h={} newton_iterations={} ill_conditioned_recovery={} status={}",
            l.n, l.h, l.newton_iterations, l.ill_conditioned, status
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub formulation: Formulation,
    pub xi_rs: f64,
    pub result: LevelResult,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub config: StudyParams,
    pub n: usize,
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn error(&self, formulation: Formulation, xi: f64, t: f64, norm: Norm) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.formulation == formulation && e.xi_rs == xi)
            .and_then(|e| e.result.error(t, norm))
    }

    pub fn failed(&self) -> bool {
        self.entries.iter().any(|e| e.result.failure.is_some())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        let c = &self.config;
        for e in &self.entries {
            for &t in &c.report_times {
                for norm in Norm::ALL {
                    let error = e.result.error(t, norm).map_or_else(|| "FAILED".to_string(), |v| format!("{v:.6e}"));
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},n/a",
                        e.formulation,
                        e.xi_rs,
                        c.pressure_degree,
                        e.result.h,
                        t,
                        norm.field().name(),
                        norm.kind(),
                        error
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Blocks of `xi error` per formulation, time, field and norm.
    pub fn write_plot_data<W: Write>(&self, mut out: W) -> Result<()> {
        let mut forms: Vec<Formulation> = Vec::new();
        for e in &self.entries {
            if !forms.contains(&e.formulation) {
                forms.push(e.formulation);
            }
        }
        let mut first = true;
        for &f in &forms {
            for &t in &self.config.report_times {
                for norm in Norm::ALL {
                    if !first {
                        writeln!(out, "\n")?;
                    }
                    first = false;
                    writeln!(out, "# formulation={} t={} field={} norm={}", f, t, norm.field().name(), norm.kind())?;
                    for e in self.entries.iter().filter(|e| e.formulation == f) {
                        if let Some(v) = e.result.error(t, norm) {
                            writeln!(out, "{} {:.6e}", e.xi_rs, v)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_metadata<W: Write>(&self, mut out: W) -> Result<()> {
        let levels: Vec<LevelResult> = self.entries.iter().map(|e| e.result.clone()).collect();
        write_metadata(&self.config, &levels, &mut out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::ErrorSample;

    fn level(n: usize, scale: f64) -> LevelResult {
        LevelResult {
            n,
            h: 1.0 / n as f64,
            samples: vec![ErrorSample { t: 1.0, errors: [scale; 8] }],
            failure: None,
            newton_iterations: 3,
            ill_conditioned: false,
            energy_log: Vec::new(),
        }
    }

    #[test]
    fn csv_shape_and_rates() {
        let cfg = StudyParams { levels: vec![2, 4], report_times: vec![1.0], ..Default::default() };
        let report = ConvergenceReport { config: cfg, levels: vec![level(2, 0.04), level(4, 0.01)] };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 2 * 8);
        assert_eq!(lines[1], "fluid,0.5,2,0.5,1,us,L2,4.000000e-2,n/a");
        assert!(lines[9].ends_with(",2.0000"));
        assert_eq!(report.final_rate(1.0, Norm::PH1), Some(2.0));
    }

    #[test]
    fn failed_level_is_marked() {
        let mut bad = level(4, 0.01);
        bad.failure = Some("newton".into());
        let cfg = StudyParams { levels: vec![2, 4], report_times: vec![1.0], ..Default::default() };
        let report = ConvergenceReport { config: cfg, levels: vec![level(2, 0.04), bad] };
        assert!(report.failed());
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().last().unwrap().ends_with("FAILED,n/a"));
        let mut plot = Vec::new();
        report.write_plot_data(&mut plot).unwrap();
        assert!(String::from_utf8(plot).unwrap().starts_with("# t=1 field=us norm=L2\n0.5 4.000000e-2\n\n\n#"));
    }
}
