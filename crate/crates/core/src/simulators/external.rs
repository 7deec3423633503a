//! Subprocess simulators.
//!
//! The command receives `{"x": <moment vector>, "n": <count>, "seed": <u64>}`
//! as JSON on stdin and must print `n` real numbers, one per line, on stdout.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::Serialize;

use super::Simulator;
use crate::error::{Error, Result};
use crate::inputs::{MomentVector, ModelSpec};

pub struct External {
    command: Vec<String>,
    specs: Vec<ModelSpec>,
}

#[derive(Serialize)]
struct Request<'a> {
    x: &'a MomentVector,
    n: usize,
    seed: u64,
}

impl External {
    pub fn new(command: Vec<String>, specs: Vec<ModelSpec>) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::Config("external simulator needs a command".into()));
        }
        Ok(Self { command, specs })
    }
}

impl Simulator for External {
    fn name(&self) -> &str {
        "external"
    }

    fn specs(&self) -> &[ModelSpec] {
        &self.specs
    }

    fn simulate(&self, x: &MomentVector, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Simulator(format!("cannot start `{}`: {e}", self.command[0])))?;
        let body = serde_json::to_vec(&Request { x, n, seed })?;
        child
            .stdin
            .take()
            .expect("stdin is piped")
            .write_all(&body)
            .map_err(|e| Error::Simulator(format!("writing request: {e}")))?;
        let out = child
            .wait_with_output()
            .map_err(|e| Error::Simulator(format!("waiting for simulator: {e}")))?;
        if !out.status.success() {
            return Err(Error::Simulator(format!("simulator exited with {}", out.status)));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let values = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Simulator(format!("bad output line `{l}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != n {
            return Err(Error::Simulator(format!("expected {n} outputs, got {}", values.len())));
        }
        Ok(values)
    }
}
