//! Trace, event-log and plot-script writers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use v2x_ledger::sim::MetricsTrace;

pub const CSV_HEADER: &str = "rri_index,mode,mean_collision_prob,min_prob,max_prob,n_seeds";
pub const EVENT_COLUMNS: &str = "t_us,rri,subframe,subchannel,colliders";

/// One line of a trace file. `rri_index` counts from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub rri_index: usize,
    pub mode: String,
    pub mean_collision_prob: f64,
    pub min_prob: f64,
    pub max_prob: f64,
    pub n_seeds: usize,
}

pub fn rows(traces: &[MetricsTrace]) -> Vec<TraceRow> {
    traces
        .iter()
        .flat_map(|t| {
            (0..t.per_rri_collision_probability.len()).map(move |k| TraceRow {
                rri_index: k + 1,
                mode: t.mode.as_str().to_string(),
                mean_collision_prob: t.per_rri_collision_probability[k],
                min_prob: t.min_probability[k],
                max_prob: t.max_probability[k],
                n_seeds: t.n_seeds(),
            })
        })
        .collect()
}

pub fn to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.rri_index, r.mode, r.mean_collision_prob, r.min_prob, r.max_prob, r.n_seeds
        );
    }
    out
}

pub fn to_json(rows: &[TraceRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("rows serialize");
    s.push('\n');
    s
}

/// Occupancy log: one comment header per (mode, seed) block, then one line
/// per occupied resource with its transmitters joined by `;`.
pub fn event_log(traces: &[MetricsTrace], num_rris: u32, trace_file: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# v2x-ledger occupancy log");
    let _ = writeln!(out, "# trace={trace_file}");
    let _ = writeln!(out, "# num_rris={num_rris}");
    let _ = writeln!(out, "# columns={EVENT_COLUMNS}");
    for t in traces {
        for run in &t.per_seed {
            let _ = writeln!(out, "# mode={} seed={}", t.mode.as_str(), run.seed);
            for o in &run.occupancy {
                let ids: Vec<String> = o.transmitters.iter().map(|v| v.0.to_string()).collect();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    o.t_us,
                    o.rri_index + 1,
                    o.subframe_index,
                    o.subchannel_id,
                    ids.join(";")
                );
            }
        }
    }
    out
}

/// gnuplot script drawing mean collision probability per mode.
pub fn plot_script(trace_file: &str, modes: &[&str]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "set datafile separator ','");
    let _ = writeln!(out, "set xlabel 'RRI'");
    let _ = writeln!(out, "set ylabel 'collision probability'");
    let _ = writeln!(out, "set key top right");
    let plots: Vec<String> = modes
        .iter()
        .map(|m| {
            format!("'{trace_file}' using 1:(strcol(2) eq '{m}' ? $3 : 1/0) skip 1 with lines title '{m}'")
        })
        .collect();
    let _ = writeln!(out, "plot {}", plots.join(", \\\n     "));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, mode: &str, p: f64) -> TraceRow {
        TraceRow { rri_index: k, mode: mode.into(), mean_collision_prob: p, min_prob: 0.0, max_prob: p, n_seeds: 2 }
    }

    #[test]
    fn csv_layout() {
        let csv = to_csv(&[row(1, "ledger", 0.1), row(2, "ledger", 0.0)]);
        assert_eq!(
            csv,
            "rri_index,mode,mean_collision_prob,min_prob,max_prob,n_seeds\n1,ledger,0.1,0,0.1,2\n2,ledger,0,0,0,2\n"
        );
    }

    #[test]
    fn json_mirrors_csv_fields() {
        let json = to_json(&[row(1, "baseline", 0.25)]);
        let back: Vec<TraceRow> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![row(1, "baseline", 0.25)]);
        for key in ["rri_index", "mode", "mean_collision_prob", "min_prob", "max_prob", "n_seeds"] {
            assert!(json.contains(key));
        }
    }

    #[test]
    fn plot_script_mentions_each_mode() {
        let s = plot_script("out.csv", &["baseline", "ledger"]);
        assert!(s.contains("'baseline'") && s.contains("'ledger'") && s.contains("out.csv"));
    }
}
