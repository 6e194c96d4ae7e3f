//! Episode logs and their CSV form.
//!
//! Layout: optional `#`-prefixed provenance lines, a header row, then one row
//! per control tick. Floats are written with the shortest representation that
//! parses back to the same bits, so logs round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::JointState;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub master: JointState,
    pub slave: JointState,
    pub vel_cmd_m: Vec<f64>,
    pub vel_cmd_s: Vec<f64>,
    pub mop_length: f64,
    /// Desk force on the slave's mop tip, `[tangential, normal]`.
    pub contact_force: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub dt: f64,
    pub rows: Vec<LogRow>,
}

impl EpisodeLog {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            rows: Vec::new(),
        }
    }

    pub fn joints(&self) -> Option<usize> {
        self.rows.first().map(|r| r.slave.joints())
    }

    pub fn duration(&self) -> f64 {
        self.rows.len() as f64 * self.dt
    }

    pub fn header(joints: usize) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        for robot in ["m", "s"] {
            for q in ["theta", "dtheta", "tau"] {
                cols.extend((0..joints).map(|i| format!("{robot}_{q}{i}")));
            }
        }
        cols.extend((0..joints).map(|i| format!("m_cmd{i}")));
        cols.extend((0..joints).map(|i| format!("s_cmd{i}")));
        cols.extend(["mop_length", "contact_ft", "contact_fn"].map(String::from));
        cols
    }

    /// Renders the log; `provenance` lines are emitted as `# ` comments.
    pub fn to_csv_string(&self, provenance: &str) -> String {
        let joints = self.joints().unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "# dt = {}", self.dt);
        let _ = writeln!(out, "# joints = {joints}");
        for line in provenance.lines() {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str(&Self::header(joints).join(","));
        out.push('\n');
        for r in &self.rows {
            let mut fields: Vec<f64> = vec![r.t];
            for js in [&r.master, &r.slave] {
                fields.extend(&js.theta);
                fields.extend(&js.dtheta);
                fields.extend(&js.tau);
            }
            fields.extend(&r.vel_cmd_m);
            fields.extend(&r.vel_cmd_s);
            fields.extend([r.mop_length, r.contact_force[0], r.contact_force[1]]);
            let line: Vec<String> = fields.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
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
        let mut dt = None;
        let mut joints = None;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim();
            // the first two lines are ours; later ones may be embedded config
            if let (None, Some(v)) = (dt, body.strip_prefix("dt = ")) {
                dt = v.parse::<f64>().ok();
            } else if let (None, Some(v)) = (joints, body.strip_prefix("joints = ")) {
                joints = v.parse::<usize>().ok();
            }
        }
        let dt = dt.ok_or_else(|| bad("missing '# dt = ...' line".into()))?;
        let joints = joints.ok_or_else(|| bad("missing '# joints = ...' line".into()))?;

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let expected = Self::header(joints);
        let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        if header != expected {
            return Err(bad(format!(
                "unexpected header; expected {} columns starting with {:?}",
                expected.len(),
                &expected[..expected.len().min(4)]
            )));
        }

        let n = joints;
        let mut rows = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let v: Vec<f64> = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("row {line}: {e}")))?;
            if v.len() != expected.len() {
                return Err(bad(format!("row {line}: {} fields", v.len())));
            }
            let js = |off: usize| JointState {
                theta: v[off..off + n].to_vec(),
                dtheta: v[off + n..off + 2 * n].to_vec(),
                tau: v[off + 2 * n..off + 3 * n].to_vec(),
            };
            let cmd = 1 + 6 * n;
            rows.push(LogRow {
                t: v[0],
                master: js(1),
                slave: js(1 + 3 * n),
                vel_cmd_m: v[cmd..cmd + n].to_vec(),
                vel_cmd_s: v[cmd + n..cmd + 2 * n].to_vec(),
                mop_length: v[cmd + 2 * n],
                contact_force: [v[cmd + 2 * n + 1], v[cmd + 2 * n + 2]],
            });
        }
        Ok(Self { dt, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_names_every_column() {
        let h = EpisodeLog::header(3);
        assert_eq!(h.len(), 1 + 18 + 6 + 3);
        assert_eq!(h[1], "m_theta0");
        assert_eq!(h[10], "s_theta0");
        assert_eq!(h.last().unwrap(), "contact_fn");
    }

    #[test]
    fn empty_log_round_trips() {
        let log = EpisodeLog::new(1e-3);
        let text = log.to_csv_string("");
        let back = EpisodeLog::parse_csv(&text, "mem").unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "# dt = 0.001\n# joints = 1\nt,foo\n0,1\n";
        assert!(matches!(
            EpisodeLog::parse_csv(text, "mem"),
            Err(Error::Format { .. })
        ));
    }
}
