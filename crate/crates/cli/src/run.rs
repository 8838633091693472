//! Scenario evaluation and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use owc_core::channel::{mimo_matrix, ChannelMatrix};
use owc_core::linkbudget::{aggregate_rate, to_db, RateReport};
use rayon::prelude::*;
use serde_json::json;

use crate::scenario::{Resolved, Scenario};

/// Channel matrix and rate report of one scenario.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub channel: ChannelMatrix,
    pub rates: RateReport,
}

pub fn evaluate(r: &Resolved) -> owc_core::Result<Evaluation> {
    let channel = mimo_matrix(&r.beam, r.distance, &r.tx, &r.rx, &r.state, r.method, &r.quadrature)?;
    let rates = aggregate_rate(&channel, &r.params, r.mode)?;
    Ok(Evaluation { channel, rates })
}

/// One row of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub aggregate: f64,
    pub min_sinr: f64,
    pub max_sinr: f64,
}

/// Evaluates every sweep point in parallel; the result is in ascending
/// parameter order.
pub fn run_sweep(scenario: &Scenario) -> Result<Vec<SweepPoint>> {
    let Some(sweep) = &scenario.sweep else {
        return Ok(Vec::new());
    };
    let values = sweep.values()?;
    let points: Vec<Resolved> = values
        .iter()
        .map(|&v| {
            let s = scenario.with_parameter(&sweep.parameter, v)?;
            s.resolve()
        })
        .collect::<Result<_, _>>()?;
    values
        .par_iter()
        .zip(points.par_iter())
        .map(|(&value, r)| {
            let e = evaluate(r).with_context(|| format!("{} = {value:e}", sweep.parameter))?;
            let sinr = &e.rates.per_link_sinr;
            Ok(SweepPoint {
                value,
                aggregate: e.rates.aggregate,
                min_sinr: sinr.iter().cloned().fold(f64::INFINITY, f64::min),
                max_sinr: sinr.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}

pub fn sweep_csv(parameter: &str, points: &[SweepPoint]) -> String {
    let mut out = format!("{parameter},aggregate_rate_bps,min_sinr_db,max_sinr_db\n");
    for p in points {
        let _ = writeln!(
            out,
            "{:.11e},{:.11e},{:.11e},{:.11e}",
            p.value,
            p.aggregate,
            to_db(p.min_sinr),
            to_db(p.max_sinr)
        );
    }
    out
}

/// Runs a scenario file and writes `gains.csv`, `rates.csv`, `meta.json`
/// and, for sweeps, `sweep.csv` into `out_dir`.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path, seed: u64) -> Result<Evaluation> {
    let resolved = scenario.resolve()?;
    let eval = evaluate(&resolved)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write(out_dir, "gains.csv", &eval.channel.to_csv())?;
    write(out_dir, "rates.csv", &eval.rates.to_csv())?;
    if let Some(sweep) = &scenario.sweep {
        let points = run_sweep(scenario)?;
        write(out_dir, "sweep.csv", &sweep_csv(&sweep.parameter, &points))?;
    }
    let meta = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "scenario": scenario,
        "n_tx": eval.channel.n_tx(),
        "n_rx": eval.channel.n_rx(),
        "fill_factor": resolved.rx.fill_factor(),
        "aggregate_rate_bps": eval.rates.aggregate,
    });
    write(out_dir, "meta.json", &(serde_json::to_string_pretty(&meta)? + "\n"))?;
    Ok(eval)
}

pub(crate) fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_ordered_and_monotone_in_waist() {
        let s = Scenario::from_json(
            r#"{"beam": {"w0": 1e-4}, "rx": {"layout": {"square": 2}},
                "sweep": {"parameter": "beam.w0", "start": 1e-4, "stop": 2e-5, "steps": 4}}"#,
        )
        .unwrap();
        let pts = run_sweep(&s).unwrap();
        assert_eq!(pts.len(), 4);
        assert!(pts.windows(2).all(|w| w[0].value < w[1].value));
        assert!(pts.windows(2).all(|w| w[0].aggregate < w[1].aggregate));
        let csv = sweep_csv("beam.w0", &pts);
        assert!(csv.starts_with("beam.w0,aggregate_rate_bps"));
    }

    #[test]
    fn unknown_sweep_parameter_fails() {
        let s = Scenario::from_json(
            r#"{"beam": {"w0": 1e-4}, "sweep": {"parameter": "beam.nope", "start": 0, "stop": 1, "steps": 2}}"#,
        )
        .unwrap();
        assert!(run_sweep(&s).is_err());
    }
}
