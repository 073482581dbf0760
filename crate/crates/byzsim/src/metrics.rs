//! Per-round diagnostics and CSV emission.
//!
//! Every float is printed with 17 significant digits so the CSV parses back
//! to bit-identical values. The message-dispersion column tracks the first
//! momentum estimators by default; the dispersion of the wire messages can
//! be emitted as an extra column.

use std::io::Write;

use crate::error::{Result, SimError};
use crate::vector::{mean_of, Vector};

/// Metrics of one round, captured after aggregation and before the next
/// model update.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    /// Global objective over the union of honest shards.
    pub loss: f64,
    pub grad_norm_sq: f64,
    /// Dispersion of the honest momentum estimators.
    pub msg_variance: f64,
    /// Mean squared deviation of momentum from the local full gradient.
    pub momentum_dev: f64,
    /// Mean squared deviation of local gradients from the global one.
    pub het_hat: f64,
    /// Cumulative uplink bytes.
    pub bytes_up: u64,
    /// Measured robustness ratio of this round's aggregation, when defined.
    pub kappa_hat: Option<f64>,
    /// Dispersion of the honest wire messages.
    pub msg_variance_wire: f64,
}

/// Full run output.
#[derive(Debug, Clone)]
pub struct MetricsSeries {
    pub records: Vec<RoundRecord>,
    pub config_echo: String,
    /// Squared full-objective gradient norm at the uniformly sampled
    /// iterate.
    pub xhat_grad_norm_sq: f64,
}

/// Cross-worker dispersion: `(1/G) sum ||m_i - mean||^2`.
pub fn honest_variance(messages: &[Vector]) -> Result<f64> {
    if messages.is_empty() {
        return Err(SimError::config("variance of empty message set"));
    }
    let center = mean_of(messages)?;
    let total: f64 = messages
        .iter()
        .map(|m| m.dist_sq(&center))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    Ok(total / messages.len() as f64)
}

const BASE_HEADER: &str = "t,loss,grad_norm_sq,msg_variance,momentum_dev,het_hat,bytes_up,kappa_hat";

/// 17 significant digits: lossless for f64.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Write the per-round CSV. With `include_wire`, an extra
/// `msg_variance_wire` column is appended.
pub fn emit_csv(series: &MetricsSeries, sink: &mut dyn Write, include_wire: bool) -> Result<()> {
    if include_wire {
        writeln!(sink, "{BASE_HEADER},msg_variance_wire")?;
    } else {
        writeln!(sink, "{BASE_HEADER}")?;
    }
    for r in &series.records {
        let mut row = format!(
            "{},{},{},{},{},{},{},{}",
            r.t,
            fmt(r.loss),
            fmt(r.grad_norm_sq),
            fmt(r.msg_variance),
            fmt(r.momentum_dev),
            fmt(r.het_hat),
            r.bytes_up,
            fmt_opt(r.kappa_hat),
        );
        if include_wire {
            row.push(',');
            row.push_str(&fmt(r.msg_variance_wire));
        }
        writeln!(sink, "{row}")?;
    }
    Ok(())
}

/// Parse a CSV produced by [`emit_csv`] back into records.
pub fn parse_csv(text: &str) -> Result<Vec<RoundRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| SimError::Parse {
        line: 1,
        msg: "empty CSV".into(),
    })?;
    let has_wire = match header {
        h if h == BASE_HEADER => false,
        h if h == format!("{BASE_HEADER},msg_variance_wire") => true,
        other => {
            return Err(SimError::Parse {
                line: 1,
                msg: format!("unexpected header {other:?}"),
            })
        }
    };
    let expected = if has_wire { 9 } else { 8 };
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(SimError::Parse {
                line: lineno,
                msg: format!("expected {expected} fields, got {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| SimError::Parse {
                line: lineno,
                msg: format!("bad float {s:?}"),
            })
        };
        records.push(RoundRecord {
            t: fields[0].parse().map_err(|_| SimError::Parse {
                line: lineno,
                msg: format!("bad round index {:?}", fields[0]),
            })?,
            loss: parse_f(fields[1])?,
            grad_norm_sq: parse_f(fields[2])?,
            msg_variance: parse_f(fields[3])?,
            momentum_dev: parse_f(fields[4])?,
            het_hat: parse_f(fields[5])?,
            bytes_up: fields[6].parse().map_err(|_| SimError::Parse {
                line: lineno,
                msg: format!("bad byte count {:?}", fields[6]),
            })?,
            kappa_hat: if fields[7].is_empty() {
                None
            } else {
                Some(parse_f(fields[7])?)
            },
            msg_variance_wire: if has_wire { parse_f(fields[8])? } else { 0.0 },
        });
    }
    Ok(records)
}

/// Columns summarized across seeds, in emission order.
const SUMMARY_COLUMNS: &[&str] = &[
    "loss",
    "grad_norm_sq",
    "msg_variance",
    "momentum_dev",
    "het_hat",
    "bytes_up",
    "kappa_hat",
];

fn column_value(r: &RoundRecord, name: &str) -> Option<f64> {
    match name {
        "loss" => Some(r.loss),
        "grad_norm_sq" => Some(r.grad_norm_sq),
        "msg_variance" => Some(r.msg_variance),
        "momentum_dev" => Some(r.momentum_dev),
        "het_hat" => Some(r.het_hat),
        "bytes_up" => Some(r.bytes_up as f64),
        "kappa_hat" => r.kappa_hat,
        _ => unreachable!("unknown column {name}"),
    }
}

/// Mean and one standard error (sample std over sqrt(count)).
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt() / (n as f64).sqrt())
}

/// Write the companion mean/stderr CSV for a seed sweep. All series must
/// share the same round count.
pub fn emit_summary_csv(seriess: &[MetricsSeries], sink: &mut dyn Write) -> Result<()> {
    if seriess.is_empty() {
        return Err(SimError::config("summary of zero runs"));
    }
    let rounds = seriess[0].records.len();
    for s in seriess {
        if s.records.len() != rounds {
            return Err(SimError::config(
                "summary requires equal-length series".into(),
            ));
        }
    }
    let mut header = String::from("t");
    for c in SUMMARY_COLUMNS {
        header.push_str(&format!(",{c}_mean,{c}_stderr"));
    }
    writeln!(sink, "{header}")?;
    for t in 0..rounds {
        let mut row = seriess[0].records[t].t.to_string();
        for c in SUMMARY_COLUMNS {
            let values: Vec<f64> = seriess
                .iter()
                .filter_map(|s| column_value(&s.records[t], c))
                .collect();
            if values.is_empty() {
                row.push_str(",,");
            } else {
                let (m, se) = mean_stderr(&values);
                row.push_str(&format!(",{},{}", fmt(m), fmt(se)));
            }
        }
        writeln!(sink, "{row}")?;
    }
    Ok(())
}
