//! Per-step metrics records: one comma-separated line per step.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Fields are written in declaration order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub mean_reward: f64,
    /// Mean over groups of the per-group reward standard deviation.
    pub adv_sigma: f64,
    pub ell: usize,
    pub kl: f64,
    pub loss: f64,
    pub guided_fraction: f64,
}

impl StepMetrics {
    pub const FIELDS: [&'static str; 7] =
        ["step", "mean_reward", "adv_sigma", "ell", "kl", "loss", "guided_fraction"];

    /// Floats use 17 significant digits, which round-trips every f64.
    pub fn to_line(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e}",
            self.step, self.mean_reward, self.adv_sigma, self.ell, self.kl, self.loss, self.guided_fraction
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != Self::FIELDS.len() {
            return Err(Error::invalid(format!("expected {} fields, got {}", Self::FIELDS.len(), f.len())));
        }
        let int = |i: usize| {
            f[i].parse::<usize>()
                .map_err(|e| Error::invalid(format!("{}: {e}", Self::FIELDS[i])))
        };
        let float = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|e| Error::invalid(format!("{}: {e}", Self::FIELDS[i])))
        };
        Ok(Self {
            step: int(0)?,
            mean_reward: float(1)?,
            adv_sigma: float(2)?,
            ell: int(3)?,
            kl: float(4)?,
            loss: float(5)?,
            guided_fraction: float(6)?,
        })
    }
}

pub fn write_metrics(w: &mut impl Write, metrics: &[StepMetrics]) -> std::io::Result<()> {
    for m in metrics {
        writeln!(w, "{}", m.to_line())?;
    }
    Ok(())
}

pub fn emit_metrics(metrics: &[StepMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_metrics(&mut w, metrics)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<StepMetrics>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(StepMetrics::from_line(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
