use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ParamPoint;

/// Ordered MCMC output with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub algorithm: String,
    pub param_names: Vec<String>,
    /// Which coordinates take discrete labels.
    pub discrete: Vec<bool>,
    pub draws: Vec<ParamPoint>,
    pub log_lik_est: Vec<f64>,
    pub log_prior: Vec<f64>,
    pub accepted: Vec<bool>,
    pub seed: u64,
    pub chain_index: u32,
    pub streams: Vec<(String, u64)>,
    #[serde(default)]
    pub wall_clock_secs: f64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|a| **a).count() as f64 / self.accepted.len() as f64
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    /// Body of the chain CSV: `iter, <params>, log_lik_est, log_prior, accepted`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "iter")?;
        for name in &self.param_names {
            write!(w, ",{name}")?;
        }
        writeln!(w, ",log_lik_est,log_prior,accepted")?;
        for t in 0..self.len() {
            write!(w, "{}", t + 1)?;
            for v in self.draws[t].iter() {
                write!(w, ",{v}")?;
            }
            writeln!(
                w,
                ",{},{},{}",
                self.log_lik_est[t], self.log_prior[t], self.accepted[t] as u8
            )?;
        }
        Ok(())
    }

    /// Reads a chain CSV back; provenance fields are left empty.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Chain> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Io("empty chain file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let k = cols.len();
        if k < 5
            || cols[0] != "iter"
            || cols[k - 3] != "log_lik_est"
            || cols[k - 2] != "log_prior"
            || cols[k - 1] != "accepted"
        {
            return Err(Error::Io(format!("not a chain header: {header}")));
        }
        let names: Vec<String> = cols[1..k - 3].iter().map(|s| s.to_string()).collect();
        let mut chain = Chain {
            algorithm: String::new(),
            discrete: vec![false; names.len()],
            param_names: names,
            draws: Vec::new(),
            log_lik_est: Vec::new(),
            log_prior: Vec::new(),
            accepted: Vec::new(),
            seed: 0,
            chain_index: 0,
            streams: Vec::new(),
            wall_clock_secs: 0.0,
        };
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Io(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != k {
                return Err(Error::Io(format!("line {}: expected {k} fields", lineno + 2)));
            }
            chain.draws.push(ParamPoint::new(vals[1..k - 3].to_vec()));
            chain.log_lik_est.push(vals[k - 3]);
            chain.log_prior.push(vals[k - 2]);
            chain.accepted.push(vals[k - 1] != 0.0);
        }
        Ok(chain)
    }
}

/// Shifts `chain1` so its post-burn-in mean equals that of `chain2`,
/// coordinate by coordinate.
pub fn debias(chain1: &Chain, chain2: &Chain, burn_in: usize) -> Result<Chain> {
    if chain1.len() != chain2.len() || chain1.dim() != chain2.dim() {
        return Err(Error::Contract(
            "debiasing needs chains of equal length and dimension".into(),
        ));
    }
    if chain1.discrete.iter().chain(&chain2.discrete).any(|d| *d) {
        return Err(Error::Unsupported(
            "no debiasing for chains with discrete coordinates".into(),
        ));
    }
    if burn_in >= chain1.len() {
        return Err(Error::Contract("burn-in leaves no draws".into()));
    }
    let kept = (chain1.len() - burn_in) as f64;
    let mean = |c: &Chain, j: usize| c.draws[burn_in..].iter().map(|d| d[j]).sum::<f64>() / kept;
    let shift: Vec<f64> = (0..chain1.dim())
        .map(|j| mean(chain2, j) - mean(chain1, j))
        .collect();
    let mut out = chain1.clone();
    out.algorithm = "mhc_debias".into();
    for d in out.draws.iter_mut() {
        for (v, s) in d.0.iter_mut().zip(&shift) {
            *v += s;
        }
    }
    Ok(out)
}
