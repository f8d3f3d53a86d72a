use anyhow::Result;
use serde_json::json;

use wavecast::predict::RankMetric;
use wavecast::{IterationTrace, PredictionReport};

use crate::Format;

/// Version of the JSON document described by the bundled schema.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str], rows: Vec<Vec<String>>) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows,
        }
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for row in &self.rows {
            out += &line(row);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let line = |cells: &[String]| {
            cells
                .iter()
                .map(|c| {
                    if c.contains([',', '"', '\n']) {
                        format!("\"{}\"", c.replace('"', "\"\""))
                    } else {
                        c.clone()
                    }
                })
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        };
        let mut out = line(&self.header);
        for row in &self.rows {
            out += &line(row);
        }
        out
    }
}

pub fn num(x: f64) -> String {
    if x == 0.0 || (1e-3..1e7).contains(&x.abs()) {
        format!("{x:.4}")
    } else {
        format!("{x:.4e}")
    }
}

pub fn reports(
    format: Format,
    command: &str,
    metric: Option<RankMetric>,
    trace: &IterationTrace,
    reports: &[PredictionReport],
) -> Result<()> {
    match format {
        Format::Json => {
            let doc = json!({
                "schema_version": REPORT_SCHEMA_VERSION,
                "command": command,
                "metric": metric,
                "model_name": trace.model_name,
                "origin_gpu": trace.origin_gpu,
                "batch_size": trace.batch_size,
                "measured_iteration_time_ms": trace.total_time_ms(),
                "reports": reports,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        Format::Csv if metric.is_none() => print!("{}", per_op(trace, reports).to_csv()),
        Format::Csv => print!("{}", ranking(reports).to_csv()),
        Format::Table if metric.is_none() => {
            for r in reports {
                println!(
                    "{} on {} -> {} (batch {})",
                    trace.model_name, r.origin_gpu, r.dest_gpu, r.batch_size
                );
                print!("{}", per_op(trace, std::slice::from_ref(r)).to_text());
                let cost = r
                    .cost_normalized_throughput
                    .map_or(String::new(), |c| format!(", {} samples/s per $/h", num(c)));
                println!(
                    "iteration {} ms (measured on origin {} ms), {} samples/s{cost}\n",
                    num(r.iteration_time_ms),
                    num(trace.total_time_ms()),
                    num(r.throughput)
                );
            }
        }
        Format::Table => print!("{}", ranking(reports).to_text()),
    }
    Ok(())
}

fn per_op(trace: &IterationTrace, reports: &[PredictionReport]) -> Table {
    let mut rows = Vec::new();
    for r in reports {
        for (i, (p, op)) in r.per_op.iter().zip(&trace.operations).enumerate() {
            rows.push(vec![
                r.dest_gpu.clone(),
                i.to_string(),
                p.op_name.clone(),
                p.path.to_string(),
                num(op.total_time_ms()),
                num(p.predicted_time_ms),
            ]);
        }
    }
    Table::new(
        &[
            "dest_gpu",
            "op_index",
            "operation",
            "path",
            "origin_ms",
            "predicted_ms",
        ],
        rows,
    )
}

fn ranking(reports: &[PredictionReport]) -> Table {
    let rows = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                (i + 1).to_string(),
                r.dest_gpu.clone(),
                num(r.iteration_time_ms),
                num(r.throughput),
                r.cost_normalized_throughput.map_or("-".into(), num),
            ]
        })
        .collect();
    Table::new(
        &[
            "rank",
            "gpu",
            "iteration_ms",
            "samples_per_s",
            "samples_per_s_per_usd_h",
        ],
        rows,
    )
}
