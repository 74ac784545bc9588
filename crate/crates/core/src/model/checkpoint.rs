//! Versioned text container for named parameter tensors plus JSON metadata
//! blocks. Values print in shortest round-trip decimal form, so files are
//! byte-stable for a fixed seed.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "influlocal-checkpoint v1";

pub struct Checkpoint {
    /// JSON metadata blocks keyed by name (config, feature stats, ...).
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{FORMAT_VERSION}")?;
        for (key, json) in &self.meta {
            writeln!(out, "meta {key} {json}")?;
        }
        writeln!(out, "tensors {}", self.tensors.len())?;
        for (name, t) in &self.tensors {
            writeln!(out, "tensor {name} {} {}", t.rows(), t.cols())?;
            let mut first = true;
            for &v in t.data() {
                if first {
                    write!(out, "{v}")?;
                    first = false;
                } else {
                    write!(out, " {v}")?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Checkpoint> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty checkpoint".into() })?;
        let header = header?;
        if header != FORMAT_VERSION {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported checkpoint format '{header}'"),
            });
        }
        let mut meta = BTreeMap::new();
        let mut tensors = Vec::new();
        let mut expected: Option<usize> = None;
        while let Some((i, line)) = lines.next() {
            let line = line?;
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (key, json) = rest.split_once(' ').ok_or_else(|| Error::Parse {
                    line: lineno,
                    msg: "meta line needs a key and a value".into(),
                })?;
                meta.insert(key.to_string(), json.to_string());
            } else if let Some(rest) = line.strip_prefix("tensors ") {
                expected = Some(rest.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: "bad tensor count".into(),
                })?);
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "tensor line needs name, rows, cols".into(),
                    });
                }
                let rows: usize = parts[1].parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: "bad row count".into(),
                })?;
                let cols: usize = parts[2].parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: "bad column count".into(),
                })?;
                let (di, data_line) = lines.next().ok_or_else(|| Error::Parse {
                    line: lineno,
                    msg: "tensor data line missing".into(),
                })?;
                let data_line = data_line?;
                let data: Vec<f32> = data_line
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse {
                        line: di + 1,
                        msg: format!("bad tensor value: {e}"),
                    })?;
                let t = Tensor::new(rows, cols, data)?;
                tensors.push((parts[0].to_string(), t));
            } else {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("unrecognized checkpoint line '{line}'"),
                });
            }
        }
        if let Some(n) = expected {
            if tensors.len() != n {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("checkpoint declares {n} tensors, found {}", tensors.len()),
                });
            }
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Round-trip helper: f32 values printed with `{}` parse back bit-exactly.
pub fn format_value<F: Scalar>(v: F) -> String {
    format!("{v}")
}
