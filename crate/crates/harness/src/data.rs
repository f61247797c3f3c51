//! Dataset files: CSV with header `x_1..x_dx,y_1..y_dy`, one row per time step.

use std::path::Path;

use nalgebra::DVector;
use pspf::{Swarm, Trajectory};

use crate::error::{invalid, HarnessError, Result};

pub fn write_dataset(path: &Path, tr: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    let dx = tr.states.dim();
    let dy = tr.observations.first().map_or(0, |y| y.len());
    let header: Vec<String> = (1..=dx)
        .map(|k| format!("x_{k}"))
        .chain((1..=dy).map(|k| format!("y_{k}")))
        .collect();
    w.write_record(&header).map_err(|e| HarnessError::csv(path, e))?;
    for (x, y) in tr.states.iter().zip(&tr.observations) {
        let row: Vec<String> = x.iter().chain(y.iter()).map(|v| v.to_string()).collect();
        w.write_record(&row).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    let header = r.headers().map_err(|e| HarnessError::csv(path, e))?.clone();
    let column = |prefix: &str| -> Vec<usize> {
        (1..)
            .map_while(|k| header.iter().position(|h| h == format!("{prefix}_{k}")))
            .collect()
    };
    let (xs, ys) = (column("x"), column("y"));
    if xs.is_empty() || ys.is_empty() {
        return Err(invalid(format!("{}: expected columns x_1.. and y_1..", path.display())));
    }
    let mut states = Vec::new();
    let mut observations = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::csv(path, e))?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| invalid(format!("{}: bad value on data row {}", path.display(), line + 1)))
        };
        for &i in &xs {
            states.push(field(i)?);
        }
        let y = ys.iter().map(|&i| field(i)).collect::<Result<Vec<f64>>>()?;
        observations.push(DVector::from_vec(y));
    }
    if observations.is_empty() {
        return Err(invalid(format!("{}: no data rows", path.display())));
    }
    Ok(Trajectory {
        states: Swarm::from_flat(xs.len(), states)?,
        observations,
    })
}
