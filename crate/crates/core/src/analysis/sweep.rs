//! Replicated parameter sweeps over a factorial design or a level grid.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_design, fit_regression, summarize_replications, AnalysisError, Factor, FactorialDesign, RegressionResult};
use crate::drs::DroneRoadSystem;
use crate::engine::{run, SimConfig};

/// Response columns, in output order.
pub const RESPONSES: [&str; 6] = ["cr", "as", "injected", "arrived", "collided", "mean_nc"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub factors: Vec<Factor>,
    /// Extra level lists for a full grid, keyed by factor name. Factors not
    /// listed keep their two levels. An empty map means no grid.
    pub grid: BTreeMap<String, Vec<f64>>,
    pub replications: u64,
    pub seed_base: u64,
}

impl SweepSpec {
    /// Checks that every factor is a settable key and every design point
    /// yields a valid config.
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.replications == 0 {
            return Err(AnalysisError::Design("at least one replication is needed".into()));
        }
        for name in self.grid.keys() {
            if !self.factors.iter().any(|f| &f.name == name) {
                return Err(AnalysisError::Design(format!("grid levels given for `{name}`, which is not a factor")));
            }
        }
        for levels in self.grid.values() {
            if levels.is_empty() {
                return Err(AnalysisError::Design("grid level list is empty".into()));
            }
        }
        build_design(&self.factors)?;
        for p in self.points()? {
            p.config(&self.base, self.seed_base)?.validate()?;
        }
        Ok(())
    }

    pub fn design(&self) -> Result<FactorialDesign, AnalysisError> {
        build_design(&self.factors)
    }

    /// Every design point: the factorial runs, then the grid points if any.
    pub fn points(&self) -> Result<Vec<DesignPoint>, AnalysisError> {
        let design = self.design()?;
        let names: Vec<String> = self.factors.iter().map(|f| f.name.clone()).collect();
        let mut points: Vec<DesignPoint> = (0..design.runs())
            .map(|r| DesignPoint {
                set: "factorial".into(),
                index: r,
                names: names.clone(),
                coded: Some(design.coded[r].clone()),
                values: design.values(r),
            })
            .collect();
        if !self.grid.is_empty() {
            let levels: Vec<Vec<f64>> = self
                .factors
                .iter()
                .map(|f| self.grid.get(&f.name).cloned().unwrap_or_else(|| vec![f.low, f.high]))
                .collect();
            points.extend(grid_points(&levels).into_iter().enumerate().map(|(index, values)| DesignPoint {
                set: "grid".into(),
                index,
                names: names.clone(),
                coded: None,
                values,
            }));
        }
        Ok(points)
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.replications).map(|r| self.seed_base + r)
    }
}

/// Cartesian product of level lists, first list varying slowest.
pub fn grid_points(levels: &[Vec<f64>]) -> Vec<Vec<f64>> {
    levels.iter().fold(vec![Vec::new()], |acc, ls| {
        acc.iter()
            .flat_map(|prefix| {
                ls.iter().map(move |&l| {
                    let mut p = prefix.clone();
                    p.push(l);
                    p
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    /// `factorial` or `grid`.
    pub set: String,
    pub index: usize,
    pub names: Vec<String>,
    pub coded: Option<Vec<f64>>,
    pub values: Vec<f64>,
}

impl DesignPoint {
    pub fn config(&self, base: &SimConfig, seed: u64) -> Result<SimConfig, AnalysisError> {
        let mut cfg = base.clone();
        for (name, v) in self.names.iter().zip(&self.values) {
            cfg.set(name, &v.to_string())?;
        }
        cfg.seed = seed;
        Ok(cfg)
    }
}

/// One (design point, seed) replication.
pub type Cell = (String, usize, u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub set: String,
    pub point: usize,
    pub seed: u64,
    pub cr: f64,
    #[serde(rename = "as")]
    pub r#as: f64,
    pub injected: u64,
    pub arrived: u64,
    pub collided: u64,
    /// Mean number of drones aloft over the seconds after warmup.
    pub mean_nc: f64,
}

impl ResponseRow {
    pub fn cell(&self) -> Cell {
        (self.set.clone(), self.point, self.seed)
    }

    pub fn get(&self, response: &str) -> Option<f64> {
        Some(match response {
            "cr" => self.cr,
            "as" => self.r#as,
            "injected" => self.injected as f64,
            "arrived" => self.arrived as f64,
            "collided" => self.collided as f64,
            "mean_nc" => self.mean_nc,
            _ => return None,
        })
    }
}

fn replicate(drs: &DroneRoadSystem, cfg: &SimConfig, point: &DesignPoint) -> Result<ResponseRow, AnalysisError> {
    let out = run(drs, cfg)?;
    let after: Vec<f64> = out.series.iter().filter(|b| b.t as f64 > cfg.warmup).map(|b| b.nc as f64).collect();
    let mean_nc = if after.is_empty() { 0.0 } else { after.iter().sum::<f64>() / after.len() as f64 };
    Ok(ResponseRow {
        set: point.set.clone(),
        point: point.index,
        seed: cfg.seed,
        cr: out.collision_rate(),
        r#as: out.average_speed(),
        injected: out.totals.injected,
        arrived: out.totals.arrived,
        collided: out.totals.collided,
        mean_nc,
    })
}

/// Runs every cell not in `done` on `parallel` worker threads.
///
/// Each finished row is passed to `sink` under a lock, in completion order.
/// The returned rows (including `done`) are sorted by (set, point, seed), so
/// the result does not depend on the worker count.
pub fn run_sweep<F>(
    drs: &DroneRoadSystem,
    spec: &SweepSpec,
    parallel: usize,
    done: Vec<ResponseRow>,
    sink: F,
) -> Result<Vec<ResponseRow>, AnalysisError>
where
    F: FnMut(&ResponseRow) -> Result<(), AnalysisError> + Send,
{
    spec.validate()?;
    let points = spec.points()?;
    let wanted: BTreeMap<Cell, &DesignPoint> = points
        .iter()
        .flat_map(|p| spec.seeds().map(move |s| ((p.set.clone(), p.index, s), p)))
        .collect();
    let mut rows: BTreeMap<Cell, ResponseRow> =
        done.into_iter().filter(|r| wanted.contains_key(&r.cell())).map(|r| (r.cell(), r)).collect();
    let todo: Vec<(&DesignPoint, u64)> =
        wanted.iter().filter(|(c, _)| !rows.contains_key(*c)).map(|(c, p)| (*p, c.2)).collect();

    let sink = Mutex::new(sink);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| AnalysisError::Design(format!("worker pool: {e}")))?;
    let fresh: Vec<ResponseRow> = pool.install(|| {
        todo.par_iter()
            .map(|(p, seed)| {
                let row = replicate(drs, &p.config(&spec.base, *seed)?, p)?;
                (sink.lock().expect("sink poisoned"))(&row)?;
                Ok(row)
            })
            .collect::<Result<_, AnalysisError>>()
    })?;
    rows.extend(fresh.into_iter().map(|r| (r.cell(), r)));
    Ok(rows.into_values().collect())
}

/// Per-point means of `response` over replications, in point order.
pub(super) fn point_means(rows: &[ResponseRow], set: &str, points: usize, response: &str) -> Vec<Vec<f64>> {
    let mut by_point = vec![Vec::new(); points];
    for r in rows.iter().filter(|r| r.set == set) {
        if let (Some(slot), Some(v)) = (by_point.get_mut(r.point), r.get(response)) {
            slot.push(v);
        }
    }
    by_point
}

/// Regression of every response on the factorial part of a sweep.
pub fn regress(spec: &SweepSpec, rows: &[ResponseRow]) -> Result<Vec<(&'static str, RegressionResult)>, AnalysisError> {
    let design = spec.design()?;
    RESPONSES
        .iter()
        .map(|&name| {
            let means: Vec<f64> = point_means(rows, "factorial", design.runs(), name)
                .into_iter()
                .enumerate()
                .map(|(p, v)| {
                    if v.is_empty() {
                        Err(AnalysisError::Design(format!("factorial point {p} has no replications")))
                    } else {
                        Ok(v.iter().sum::<f64>() / v.len() as f64)
                    }
                })
                .collect::<Result<_, _>>()?;
            Ok((name, fit_regression(&design, &means)?))
        })
        .collect()
}

pub fn write_design_csv<W: Write>(points: &[DesignPoint], w: W) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    let Some(first) = points.first() else { return Ok(()) };
    let mut header = vec!["set".to_string(), "point".to_string()];
    header.extend(first.names.iter().map(|n| format!("coded:{n}")));
    header.extend(first.names.iter().cloned());
    out.write_record(&header)?;
    for p in points {
        let mut rec = vec![p.set.clone(), p.index.to_string()];
        match &p.coded {
            Some(c) => rec.extend(c.iter().map(|v| v.to_string())),
            None => rec.extend(p.names.iter().map(|_| String::new())),
        }
        rec.extend(p.values.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes response rows; `header` controls whether a header line is emitted
/// so the same function can append to an existing file.
pub fn write_responses_csv<W: Write>(rows: &[ResponseRow], w: W, header: bool) -> Result<(), AnalysisError> {
    let mut out = csv::WriterBuilder::new().has_headers(header).from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads response rows. A final line without its newline is ignored and any
/// record that does not parse is skipped, so a row cut short by an
/// interrupted sweep is simply recomputed.
pub fn read_responses<R: Read>(mut r: R) -> Result<Vec<ResponseRow>, AnalysisError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let complete = &text[..text.rfind('\n').map_or(0, |i| i + 1)];
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(complete.as_bytes());
    Ok(rdr.deserialize().filter_map(Result::ok).collect())
}

/// Long-format regression table: one (response, quantity, term, value) per row.
pub fn write_regression_csv<W: Write>(
    factors: &[Factor],
    fits: &[(&str, RegressionResult)],
    w: W,
) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["response", "quantity", "term", "value"])?;
    let num = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |v| v.to_string());
    for (name, fit) in fits {
        for (i, (t, a)) in fit.terms.iter().zip(&fit.coefficients).enumerate() {
            let label = t.label(factors);
            out.write_record([*name, "coefficient", &label, &a.to_string()])?;
            out.write_record([*name, "contribution_pct", &label, &num(fit.contributions.as_ref().map(|c| c[i]))])?;
        }
        out.write_record([*name, "sst", "", &fit.sst.to_string()])?;
        out.write_record([*name, "sst_coefficients", "", &fit.sst_coefficients.to_string()])?;
        out.write_record([*name, "sse", "", &fit.sse.to_string()])?;
        out.write_record([*name, "r2", "", &num(fit.r2)])?;
        out.write_record([*name, "degenerate", "", if fit.degenerate() { "1" } else { "0" }])?;
    }
    out.flush()?;
    Ok(())
}

/// Mean and 95% interval of every response at every design point.
pub fn write_summary_csv<W: Write>(points: &[DesignPoint], rows: &[ResponseRow], w: W) -> Result<(), AnalysisError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["set", "point", "response", "n", "mean", "ci_low", "ci_high"])?;
    let num = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    let mut sets: Vec<&str> = points.iter().map(|p| p.set.as_str()).collect();
    sets.dedup();
    for set in sets {
        let count = points.iter().filter(|p| p.set == set).count();
        for name in RESPONSES {
            for (p, vals) in point_means(rows, set, count, name).iter().enumerate() {
                let ci = summarize_replications(vals);
                out.write_record([
                    set.to_string(),
                    p.to_string(),
                    name.to_string(),
                    ci.n.to_string(),
                    ci.mean.to_string(),
                    num(ci.lower()),
                    num(ci.upper()),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
