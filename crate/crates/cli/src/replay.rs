//! Recomputes collision probabilities from an occupancy log and checks them
//! against a trace file.

use std::collections::BTreeMap;
use std::fmt;

use crate::output::{TraceRow, CSV_HEADER};
use crate::CliError;

/// Tolerance for comparing a recomputed mean with a trace value.
pub const TOLERANCE: f64 = 1e-12;

/// Per-RRI (transmissions, colliding transmissions) of one seed.
type Counts = Vec<(u64, u64)>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub trace_file: Option<String>,
    pub num_rris: Option<usize>,
    /// Blocks per mode, in file order.
    pub blocks: BTreeMap<String, Vec<(u64, Counts)>>,
}

fn malformed(line: usize, message: impl Into<String>) -> CliError {
    CliError::MalformedLog { line, message: message.into() }
}

impl EventLog {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut log = EventLog::default();
        let mut current: Option<(String, usize)> = None;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("trace=") {
                    log.trace_file = Some(v.to_string());
                } else if let Some(v) = comment.strip_prefix("num_rris=") {
                    log.num_rris = Some(v.parse().map_err(|_| malformed(line_no, "bad num_rris"))?);
                } else if comment.starts_with("mode=") {
                    let (mode, seed) = parse_block_header(comment).ok_or_else(|| malformed(line_no, "bad block header"))?;
                    let blocks = log.blocks.entry(mode.clone()).or_default();
                    blocks.push((seed, Vec::new()));
                    current = Some((mode, blocks.len() - 1));
                }
                continue;
            }
            let (mode, idx) = current.as_ref().ok_or_else(|| malformed(line_no, "record before any block header"))?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(malformed(line_no, format!("expected 5 fields, found {}", fields.len())));
            }
            for (f, name) in fields[..4].iter().zip(["t_us", "rri", "subframe", "subchannel"]) {
                f.parse::<u64>().map_err(|_| malformed(line_no, format!("bad {name}")))?;
            }
            let rri: usize = fields[1].parse().expect("checked");
            if rri == 0 {
                return Err(malformed(line_no, "rri counts from 1"));
            }
            let transmitters = fields[4].split(';').map(|v| v.parse::<u8>()).collect::<Result<Vec<_>, _>>();
            let transmitters = transmitters.map_err(|_| malformed(line_no, "bad colliders list"))?;
            let counts = &mut log.blocks.get_mut(mode).expect("block exists")[*idx].1;
            if counts.len() < rri {
                counts.resize(rri, (0, 0));
            }
            let k = transmitters.len() as u64;
            counts[rri - 1].0 += k;
            if k >= 2 {
                counts[rri - 1].1 += k;
            }
        }
        Ok(log)
    }

    /// Seed-averaged collision probability per RRI for `mode`, or `None`
    /// when the log has no block for it.
    pub fn mean_trace(&self, mode: &str, len: usize) -> Option<(Vec<f64>, usize)> {
        let blocks = self.blocks.get(mode)?;
        let mut mean = vec![0.0; len];
        for (_, counts) in blocks {
            for (k, m) in mean.iter_mut().enumerate() {
                let (t, c) = counts.get(k).copied().unwrap_or((0, 0));
                *m += if t == 0 { 0.0 } else { c as f64 / t as f64 };
            }
        }
        let n = blocks.len();
        mean.iter_mut().for_each(|m| *m /= n as f64);
        Some((mean, n))
    }
}

fn parse_block_header(s: &str) -> Option<(String, u64)> {
    let mut mode = None;
    let mut seed = None;
    for kv in s.split_whitespace() {
        match kv.split_once('=')? {
            ("mode", m) => mode = Some(m.to_string()),
            ("seed", v) => seed = Some(v.parse().ok()?),
            _ => return None,
        }
    }
    Some((mode?, seed?))
}

/// Reads a CSV or JSON trace file.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>, CliError> {
    let bad = |line: usize, m: &str| CliError::Config(format!("trace line {line}: {m}"));
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).map_err(|e| CliError::Config(format!("trace: {e}")));
    }
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(bad(1, "missing header")),
    }
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(n + 1, "expected 6 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n + 1, "bad number"));
        rows.push(TraceRow {
            rri_index: f[0].parse().map_err(|_| bad(n + 1, "bad rri_index"))?,
            mode: f[1].to_string(),
            mean_collision_prob: num(f[2])?,
            min_prob: num(f[3])?,
            max_prob: num(f[4])?,
            n_seeds: f[5].parse().map_err(|_| bad(n + 1, "bad n_seeds"))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Consistent,
    Divergent { mode: String, rri_index: usize, trace: f64, replay: f64 },
    SeedCountMismatch { mode: String, trace: usize, replay: usize },
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Consistent => write!(f, "consistent"),
            Verdict::Divergent { mode, rri_index, trace, replay } => write!(
                f,
                "divergence at rri {rri_index} (mode {mode}): trace {trace}, replay {replay}"
            ),
            Verdict::SeedCountMismatch { mode, trace, replay } => {
                write!(f, "divergence in seed count (mode {mode}): trace {trace}, replay {replay}")
            }
        }
    }
}

/// Compares trace rows in file order against the log; the first mismatch wins.
pub fn compare(log: &EventLog, rows: &[TraceRow]) -> Verdict {
    let len = rows.iter().map(|r| r.rri_index).max().unwrap_or(0);
    let mut cache: BTreeMap<&str, Option<(Vec<f64>, usize)>> = BTreeMap::new();
    for r in rows {
        let replayed = cache.entry(&r.mode).or_insert_with(|| log.mean_trace(&r.mode, len));
        let (value, n) = match replayed {
            Some((mean, n)) => (mean.get(r.rri_index.wrapping_sub(1)).copied().unwrap_or(0.0), Some(*n)),
            None => (0.0, None),
        };
        if let Some(n) = n {
            if n != r.n_seeds {
                return Verdict::SeedCountMismatch { mode: r.mode.clone(), trace: r.n_seeds, replay: n };
            }
        }
        if (value - r.mean_collision_prob).abs() > TOLERANCE {
            return Verdict::Divergent {
                mode: r.mode.clone(),
                rri_index: r.rri_index,
                trace: r.mean_collision_prob,
                replay: value,
            };
        }
    }
    Verdict::Consistent
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG: &str = "# num_rris=2\n# mode=ledger seed=1\n0,1,0,0,3;4\n0,1,0,1,5\n100000,2,0,1,5\n# mode=ledger seed=2\n0,1,0,0,7\n";

    fn trace(p1: f64) -> Vec<TraceRow> {
        let r = |k, p| TraceRow { rri_index: k, mode: "ledger".into(), mean_collision_prob: p, min_prob: 0.0, max_prob: 0.0, n_seeds: 2 };
        vec![r(1, p1), r(2, 0.0)]
    }

    #[test]
    fn counts_occupancy() {
        let log = EventLog::parse(LOG).unwrap();
        let (mean, n) = log.mean_trace("ledger", 2).unwrap();
        assert_eq!(n, 2);
        assert_eq!(mean, vec![(2.0 / 3.0 + 0.0) / 2.0, 0.0]);
        assert_eq!(compare(&log, &trace(1.0 / 3.0)), Verdict::Consistent);
    }

    #[test]
    fn reports_first_divergence() {
        let log = EventLog::parse(LOG).unwrap();
        assert!(matches!(compare(&log, &trace(0.5)), Verdict::Divergent { rri_index: 1, .. }));
    }

    #[test]
    fn empty_log_diverges_at_first_nonzero() {
        let log = EventLog::parse("").unwrap();
        let mut rows = trace(0.0);
        rows[1].mean_collision_prob = 0.2;
        assert!(matches!(compare(&log, &rows), Verdict::Divergent { rri_index: 2, .. }));
    }

    #[test]
    fn malformed_logs() {
        for bad in ["0,1,0,0,3\n", "# mode=ledger seed=1\n0,1,0\n", "# mode=ledger seed=1\n0,0,0,0,3\n", "# mode=ledger seed=x\n", "# mode=ledger seed=1\n0,1,0,0,300\n"] {
            assert!(matches!(EventLog::parse(bad), Err(CliError::MalformedLog { .. })), "{bad:?}");
        }
    }
}
