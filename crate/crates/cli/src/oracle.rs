//! Direct-loop reference computations, independent of the library's kernels.

use std::path::{Path, PathBuf};

use clap::Subcommand;
use latentfire::io;
use latentfire::tensor::DenseTensor;

use crate::{CliError, CliResult};

#[derive(Subcommand)]
pub enum OracleCommand {
    /// Generalized KL divergence D(A || B).
    Kl {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Squared Frobenius distance ||A − B||².
    SqDist {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Relative error ||A − B|| / ||A||.
    RelError {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Mode-n unfolding, printed as CSV rows.
    Unfold {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mode: usize,
    },
}

fn pair(a: &Path, b: &Path) -> CliResult<(DenseTensor, DenseTensor)> {
    let x = io::read_tensor(a)?;
    let y = io::read_tensor(b)?;
    if x.shape() != y.shape() {
        return Err(CliError::Run(latentfire::Error::Dimension(format!(
            "shapes {:?} and {:?} differ",
            x.shape(),
            y.shape()
        ))));
    }
    Ok((x, y))
}

fn kl(x: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.len() {
        if x[i] == 0.0 {
            total += y[i];
        } else if y[i] == 0.0 {
            return f64::INFINITY;
        } else {
            total += x[i] * (x[i] / y[i]).ln() - x[i] + y[i];
        }
    }
    total
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.len() {
        total += (x[i] - y[i]) * (x[i] - y[i]);
    }
    total
}

/// Row `i_n`, column = remaining indices in order with the last varying fastest.
fn unfold_rows(x: &DenseTensor, mode: usize) -> Vec<Vec<f64>> {
    let shape = x.shape();
    let mut rows = vec![Vec::new(); shape[mode]];
    let mut idx = vec![0usize; shape.len()];
    let mut others: Vec<usize> = (0..shape.len()).filter(|&m| m != mode).collect();
    others.reverse();
    for r in 0..shape[mode] {
        idx[mode] = r;
        for m in &others {
            idx[*m] = 0;
        }
        loop {
            rows[r].push(x.get(&idx));
            let mut carried = true;
            for &m in &others {
                idx[m] += 1;
                if idx[m] < shape[m] {
                    carried = false;
                    break;
                }
                idx[m] = 0;
            }
            if carried {
                break;
            }
        }
    }
    rows
}

pub fn run(cmd: OracleCommand) -> CliResult<()> {
    match cmd {
        OracleCommand::Kl { a, b } => {
            let (x, y) = pair(&a, &b)?;
            if x.data().iter().chain(y.data()).any(|v| *v < 0.0) {
                return Err(CliError::Run(latentfire::Error::Domain("KL needs non-negative inputs".into())));
            }
            println!("{:.17e}", kl(x.data(), y.data()));
        }
        OracleCommand::SqDist { a, b } => {
            let (x, y) = pair(&a, &b)?;
            println!("{:.17e}", sq_dist(x.data(), y.data()));
        }
        OracleCommand::RelError { a, b } => {
            let (x, y) = pair(&a, &b)?;
            let norm = sq_dist(x.data(), &vec![0.0; x.len()]);
            if norm == 0.0 {
                return Err(CliError::Run(latentfire::Error::UndefinedInput(
                    "relative error of a zero reference".into(),
                )));
            }
            println!("{:.17e}", (sq_dist(x.data(), y.data()) / norm).sqrt());
        }
        OracleCommand::Unfold { input, mode } => {
            let x = io::read_tensor(&input)?;
            if mode >= x.ndim() {
                return Err(CliError::Usage(format!("mode {mode} out of range for order {}", x.ndim())));
            }
            for row in unfold_rows(&x, mode) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
                println!("{}", cells.join(","));
            }
        }
    }
    Ok(())
}
