use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed, configuration hash and version, echoed at the top of every report.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: &'static str,
    pub seed: u64,
    pub config_json: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new<T: Serialize>(command: &'static str, seed: u64, effective: &T) -> Self {
        let config_json = serde_json::to_string(effective).expect("config serializes");
        let digest = Sha256::digest(config_json.as_bytes());
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            command,
            seed,
            config_json,
            config_hash,
        }
    }

    pub fn write_header(&self, out: &mut dyn Write) -> CliResult<()> {
        writeln!(
            out,
            "# hdmr-gpr {VERSION} {} seed={} config=sha256:{}",
            self.command, self.seed, self.config_hash
        )
        .and_then(|_| writeln!(out, "# config {}", self.config_json))
        .map_err(stdout_err)
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("version".into(), VERSION.into()),
            ("command".into(), self.command.into()),
            ("seed".into(), self.seed.to_string()),
            ("config_hash".into(), self.config_hash.clone()),
            ("config".into(), self.config_json.clone()),
        ]
    }
}

pub fn stdout_err(e: std::io::Error) -> CliError {
    CliError::io("<stdout>", e)
}

/// Left-aligned first column, right-aligned others.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let n = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut s = String::new();
        for (j, c) in cells.iter().enumerate() {
            let pad = widths[j] - c.chars().count();
            if j == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (n - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn sci(v: f64) -> String {
    format!("{v:.4e}")
}
