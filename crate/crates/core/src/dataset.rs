//! Input/target sequence pairs on the learner's time grid.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub episode: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<Sequence>,
    dim_in: usize,
    dim_out: usize,
}

impl Dataset {
    pub fn new(sequences: Vec<Sequence>) -> Result<Self> {
        let first = sequences
            .iter()
            .find(|s| !s.is_empty())
            .ok_or(Error::Empty("dataset"))?;
        let dim_in = first.inputs[0].len();
        let dim_out = first.targets[0].len();
        for s in &sequences {
            if s.inputs.len() != s.targets.len() {
                return Err(Error::InvalidParam(format!(
                    "episode {}: {} inputs vs {} targets",
                    s.episode,
                    s.inputs.len(),
                    s.targets.len()
                )));
            }
            if s.inputs.iter().any(|r| r.len() != dim_in)
                || s.targets.iter().any(|r| r.len() != dim_out)
            {
                return Err(Error::InvalidParam(format!(
                    "episode {}: inconsistent feature widths",
                    s.episode
                )));
            }
        }
        Ok(Self {
            sequences,
            dim_in,
            dim_out,
        })
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn samples(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }

    pub fn to_csv_string(&self, provenance: &str) -> String {
        let mut out = String::new();
        for line in provenance.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let mut header = vec!["episode".to_string(), "step".to_string()];
        header.extend((0..self.dim_in).map(|i| format!("in{i}")));
        header.extend((0..self.dim_out).map(|i| format!("out{i}")));
        out.push_str(&header.join(","));
        out.push('\n');
        for s in &self.sequences {
            for (k, (x, y)) in s.inputs.iter().zip(&s.targets).enumerate() {
                let _ = write!(out, "{},{}", s.episode, k);
                for v in x.iter().chain(y) {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path, provenance: &str) -> Result<()> {
        std::fs::write(path, self.to_csv_string(provenance)).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn parse_csv(text: &str, origin: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            path: origin.to_string(),
            detail,
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        if header.len() < 2 || header[0] != "episode" || header[1] != "step" {
            return Err(bad("header must start with episode,step".into()));
        }
        let dim_in = header.iter().filter(|h| h.starts_with("in")).count();
        let dim_out = header.iter().filter(|h| h.starts_with("out")).count();
        if dim_in + dim_out + 2 != header.len() {
            return Err(bad("unexpected columns in header".into()));
        }

        let mut sequences: Vec<Sequence> = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(bad(format!("row {line}: {} fields", rec.len())));
            }
            let episode: usize = rec[0]
                .parse()
                .map_err(|e| bad(format!("row {line}: episode: {e}")))?;
            let values: Vec<f64> = rec
                .iter()
                .skip(2)
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("row {line}: {e}")))?;
            if sequences.last().map(|s| s.episode) != Some(episode) {
                sequences.push(Sequence {
                    episode,
                    inputs: Vec::new(),
                    targets: Vec::new(),
                });
            }
            let seq = sequences.last_mut().unwrap();
            seq.inputs.push(values[..dim_in].to_vec());
            seq.targets.push(values[dim_in..].to_vec());
        }
        Self::new(sequences)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(vec![
            Sequence {
                episode: 0,
                inputs: vec![vec![0.1, 0.2], vec![0.3, 1e-17]],
                targets: vec![vec![1.0], vec![-2.5]],
            },
            Sequence {
                episode: 4,
                inputs: vec![vec![7.0, 8.0]],
                targets: vec![vec![0.0]],
            },
        ])
        .unwrap()
    }

    #[test]
    fn csv_round_trip_exact() {
        let ds = tiny();
        let back = Dataset::parse_csv(&ds.to_csv_string("seed = 1"), "mem").unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.samples(), 3);
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(matches!(Dataset::new(vec![]), Err(Error::Empty(_))));
        let ragged = Sequence {
            episode: 0,
            inputs: vec![vec![1.0], vec![1.0, 2.0]],
            targets: vec![vec![0.0], vec![0.0]],
        };
        assert!(Dataset::new(vec![ragged]).is_err());
    }
}
