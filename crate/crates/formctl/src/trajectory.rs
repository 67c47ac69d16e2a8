//! Recorded time series of a simulation run and its CSV/metadata export.
//!
//! Column order is fixed: `t`, then for each agent `i` (1-based) the blocks
//! `p`, `v`, `u`, `e`, `delta`, `zeta` (each `n` wide) followed by `kappa`,
//! `vhat_fro`, `zhat_fro`, `what_fro`; then the leader `p`, `v`; then the
//! cost indices `nu` (average control effort) and `vartheta` (average
//! formation error).

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// Uniformly sampled run record. Every row follows the documented header.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub n_agents: usize,
    pub state_dim: usize,
}

impl TrajectoryLog {
    pub fn new(n_agents: usize, state_dim: usize) -> Self {
        let mut header = vec!["t".to_string()];
        for i in 1..=n_agents {
            for block in ["p", "v", "u", "e", "delta", "zeta"] {
                for k in 1..=state_dim {
                    header.push(format!("a{i}_{block}{k}"));
                }
            }
            header.push(format!("a{i}_kappa"));
            header.push(format!("a{i}_vhat_fro"));
            header.push(format!("a{i}_zhat_fro"));
            header.push(format!("a{i}_what_fro"));
        }
        for k in 1..=state_dim {
            header.push(format!("leader_p{k}"));
        }
        for k in 1..=state_dim {
            header.push(format!("leader_v{k}"));
        }
        header.push("nu".to_string());
        header.push("vartheta".to_string());
        Self { header, rows: Vec::new(), n_agents, state_dim }
    }

    pub fn width(&self) -> usize {
        self.header.len()
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Extracts one column by header name.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.col(name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn last_row(&self) -> Option<&Vec<f64>> {
        self.rows.last()
    }

    /// Writes the log as CSV. Floats use the shortest round-trip
    /// representation, so identical logs produce identical bytes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (k, x) in row.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{x}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Parses a CSV previously produced by [`TrajectoryLog::write_csv`].
    pub fn from_csv_str(s: &str) -> Result<Self, String> {
        let mut lines = s.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or("empty CSV")?
            .split(',')
            .map(|h| h.trim().to_string())
            .collect();
        if header.first().map(String::as_str) != Some("t") {
            return Err("first column must be t".into());
        }
        let n_agents = header
            .iter()
            .filter(|h| h.ends_with("_kappa"))
            .count();
        let state_dim = header.iter().filter(|h| h.starts_with("a1_p")).count();
        if n_agents == 0 || state_dim == 0 {
            return Err("header does not describe any agent block".into());
        }
        let mut rows = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| format!("line {}: {e}", ln + 2))?;
            if row.len() != header.len() {
                return Err(format!(
                    "line {}: {} fields, expected {}",
                    ln + 2,
                    row.len(),
                    header.len()
                ));
            }
            rows.push(row);
        }
        Ok(Self { header, rows, n_agents, state_dim })
    }
}

/// Deterministic sidecar describing how a trajectory was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub scenario: String,
    pub config_hash: String,
    pub rng_seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub log_stride: usize,
    pub n_steps: usize,
    pub rows_logged: usize,
    pub package_version: String,
}

/// 64-bit FNV-1a, used to fingerprint scenario configurations.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
