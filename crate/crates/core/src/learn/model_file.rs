//! Plain-text model files.
//!
//! ```text
//! BILATERAL-LSTM 1
//! # free-form provenance lines
//! shape <layers> <hidden> <input> <output>
//! input_min <v>...
//! input_max <v>...
//! output_min <v>...
//! output_max <v>...
//! params <count>
//! <v> (eight per line)
//! ```
//!
//! Values use the shortest representation that parses back to the same bits.

use std::fmt::Write as _;
use std::path::Path;

use super::lstm::{LstmModel, ModelShape};
use super::normalize::{MinMax, NormalizerStats};
use super::train::TrainedModel;
use crate::error::{Error, Result};

pub const MAGIC: &str = "BILATERAL-LSTM";
pub const VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn to_model_string(trained: &TrainedModel, provenance: &str) -> String {
    let sh = trained.model.shape();
    let st = &trained.stats;
    let mut out = format!("{MAGIC} {VERSION}\n");
    for line in provenance.lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "shape {} {} {} {}", sh.layers, sh.hidden, sh.input, sh.output);
    let _ = writeln!(out, "input_min {}", join(&st.input.min));
    let _ = writeln!(out, "input_max {}", join(&st.input.max));
    let _ = writeln!(out, "output_min {}", join(&st.output.min));
    let _ = writeln!(out, "output_max {}", join(&st.output.max));
    let params = trained.model.params();
    let _ = writeln!(out, "params {}", params.len());
    for chunk in params.chunks(8) {
        out.push_str(&join(chunk));
        out.push('\n');
    }
    out
}

pub fn save_model(path: &Path, trained: &TrainedModel, provenance: &str) -> Result<()> {
    std::fs::write(path, to_model_string(trained, provenance)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, &path.display().to_string())
}

pub fn parse_model(text: &str, origin: &str) -> Result<TrainedModel> {
    let fail = |detail: String| Error::Format {
        path: origin.to_string(),
        detail,
    };
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));

    let header = lines.next().ok_or_else(|| fail("empty file".into()))?;
    let mut head = header.split_whitespace();
    if head.next() != Some(MAGIC) {
        return Err(fail(format!("missing {MAGIC} header")));
    }
    match head.next().map(str::parse::<u32>) {
        Some(Ok(VERSION)) => {}
        Some(Ok(v)) => return Err(fail(format!("unsupported version {v}"))),
        _ => return Err(fail("missing version".into())),
    }

    let mut keyed = |key: &str| -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| fail(format!("missing `{key}` line")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(fail(format!("expected `{key}`, found `{line}`")));
        }
        Ok(parts.map(String::from).collect())
    };
    let ints = |v: Vec<String>, key: &str| -> Result<Vec<usize>> {
        v.iter()
            .map(|s| s.parse().map_err(|_| fail(format!("bad integer `{s}` in {key}"))))
            .collect()
    };
    let floats = |v: Vec<String>, key: &str| -> Result<Vec<f64>> {
        v.iter()
            .map(|s| s.parse().map_err(|_| fail(format!("bad number `{s}` in {key}"))))
            .collect()
    };

    let dims = ints(keyed("shape")?, "shape")?;
    let [layers, hidden, input, output] = dims[..] else {
        return Err(fail(format!("shape needs 4 integers, got {}", dims.len())));
    };
    let shape = ModelShape {
        layers,
        hidden,
        input,
        output,
    };
    let input_min = floats(keyed("input_min")?, "input_min")?;
    let input_max = floats(keyed("input_max")?, "input_max")?;
    let output_min = floats(keyed("output_min")?, "output_min")?;
    let output_max = floats(keyed("output_max")?, "output_max")?;
    for (name, v, n) in [
        ("input_min", &input_min, input),
        ("input_max", &input_max, input),
        ("output_min", &output_min, output),
        ("output_max", &output_max, output),
    ] {
        if v.len() != n {
            return Err(fail(format!("{name} has {} values, shape needs {n}", v.len())));
        }
    }
    let count = ints(keyed("params")?, "params")?;
    let [count] = count[..] else {
        return Err(fail("params line needs a single count".into()));
    };
    let mut params = Vec::with_capacity(count);
    for line in lines {
        for tok in line.split_whitespace() {
            params.push(
                tok.parse::<f64>()
                    .map_err(|_| fail(format!("bad parameter `{tok}`")))?,
            );
        }
    }
    if params.len() != count || count != shape.param_count() {
        return Err(fail(format!(
            "expected {} parameters, header says {count}, found {}",
            shape.param_count(),
            params.len()
        )));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("model parameters"));
    }
    Ok(TrainedModel {
        model: LstmModel::from_params(shape, params)?,
        stats: NormalizerStats {
            input: MinMax {
                min: input_min,
                max: input_max,
            },
            output: MinMax {
                min: output_min,
                max: output_max,
            },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrainedModel {
        let shape = ModelShape {
            layers: 2,
            hidden: 3,
            input: 2,
            output: 2,
        };
        TrainedModel {
            model: LstmModel::init(shape, 5).unwrap(),
            stats: NormalizerStats {
                input: MinMax {
                    min: vec![-1.0, 0.1],
                    max: vec![2.0, 0.1],
                },
                output: MinMax {
                    min: vec![0.0, 1.0 / 3.0],
                    max: vec![1e-300, 7.5],
                },
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let text = to_model_string(&m, "seed = 5\nnote");
        assert!(text.starts_with("BILATERAL-LSTM 1\n# seed = 5\n# note\nshape 2 3 2 2\n"));
        assert_eq!(parse_model(&text, "mem").unwrap(), m);
    }

    #[test]
    fn rejects_corruption() {
        let text = to_model_string(&sample(), "");
        assert!(parse_model(&text.replace("BILATERAL-LSTM 1", "BILATERAL-LSTM 9"), "x").is_err());
        assert!(parse_model(&text.replace("shape 2 3", "shape 2 4"), "x").is_err());
        let truncated: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(parse_model(&truncated, "x").is_err());
        assert!(parse_model("", "x").is_err());
        assert!(parse_model(&text.replacen("input_min -1", "input_min nope", 1), "x").is_err());
    }
}
