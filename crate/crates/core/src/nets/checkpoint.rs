//! Plain-text parameter checkpoints.
//!
//! ```text
//! ampf-checkpoint 1
//! meta <key> <value>
//! tensor <key> <ndim> <dims...> <values...>
//! ```
//!
//! Values are written in shortest round-trip exponent form, so a
//! write/read cycle reproduces every bit.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::autodiff::Tensor;

use super::NetError;

const MAGIC: &str = "ampf-checkpoint 1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

fn bad(line: usize, msg: impl Into<String>) -> NetError {
    NetError::Checkpoint(format!("line {line}: {}", msg.into()))
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str, NetError> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| NetError::Checkpoint(format!("missing meta key `{key}`")))
    }

    pub fn insert(&mut self, key: &str, tensor: Tensor) {
        self.tensors.insert(key.to_string(), tensor);
    }

    pub fn tensor(&self, key: &str) -> Result<&Tensor, NetError> {
        self.tensors
            .get(key)
            .ok_or_else(|| NetError::Checkpoint(format!("missing tensor `{key}`")))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}")?;
        for (k, v) in &self.meta {
            writeln!(w, "meta {k} {v}")?;
        }
        for (k, t) in &self.tensors {
            write!(w, "tensor {k} {}", t.ndim())?;
            for d in t.shape() {
                write!(w, " {d}")?;
            }
            for v in t.data() {
                write!(w, " {v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, NetError> {
        let mut lines = r.lines().enumerate();
        match lines.next() {
            Some((_, Ok(l))) if l.trim_end() == MAGIC => {}
            _ => return Err(bad(1, "not a checkpoint file")),
        }
        let mut ckpt = Checkpoint::new();
        for (i, line) in lines {
            let n = i + 1;
            let line = line.map_err(|e| bad(n, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| bad(n, "meta without key"))?;
                    let value = parts.collect::<Vec<_>>().join(" ");
                    ckpt.meta.insert(key.to_string(), value);
                }
                Some("tensor") => {
                    let key = parts.next().ok_or_else(|| bad(n, "tensor without key"))?;
                    let mut nums = parts;
                    let mut next_usize = || -> Result<usize, NetError> {
                        nums.next()
                            .ok_or_else(|| bad(n, "truncated tensor header"))?
                            .parse()
                            .map_err(|_| bad(n, "bad tensor header"))
                    };
                    let ndim = next_usize()?;
                    let shape = (0..ndim).map(|_| next_usize()).collect::<Result<Vec<_>, _>>()?;
                    let data = nums
                        .map(|s| s.parse::<f64>().map_err(|_| bad(n, format!("bad value `{s}`"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    let t = Tensor::new(shape, data).map_err(|e| bad(n, e.to_string()))?;
                    ckpt.tensors.insert(key.to_string(), t);
                }
                Some(other) => return Err(bad(n, format!("unknown record `{other}`"))),
                None => {}
            }
        }
        Ok(ckpt)
    }
}
