use std::fmt::Write as _;

use rayon::prelude::*;

use super::vdsc;
use crate::error::{Error, Result};
use crate::preprocess::{reconstruct, unify, UniformMethod, Volume};

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationRow {
    pub method: UniformMethod,
    pub per_case: Vec<(String, f64)>,
}

impl SimulationRow {
    pub fn mean(&self) -> f64 {
        self.per_case.iter().map(|c| c.1).sum::<f64>() / self.per_case.len() as f64
    }
}

/// Round-trip vDSC of each method on each case.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTable {
    pub rows: Vec<SimulationRow>,
}

impl SimulationTable {
    pub fn mean(&self, method: UniformMethod) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .map(SimulationRow::mean)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>12}", "method", "vDSC [%]");
        for r in &self.rows {
            let _ = writeln!(out, "{:<10} {:>12.2}", r.method.to_string(), r.mean());
        }
        out
    }

    /// `method,case,vdsc` rows and one `# mean` line per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,case,vdsc\n");
        for r in &self.rows {
            for (id, v) in &r.per_case {
                let _ = writeln!(out, "{},{id},{v:.2}", r.method);
            }
        }
        for r in &self.rows {
            let _ = writeln!(out, "# mean,{},{:.2}", r.method, r.mean());
        }
        out
    }
}

/// Sends every ground-truth mask through unify and reconstruct with each
/// method and scores the result against the original.
pub fn simulate_uniform(
    cases: &[(String, Volume)],
    methods: &[UniformMethod],
    target: (usize, usize),
) -> Result<SimulationTable> {
    if cases.is_empty() {
        return Err(Error::config("simulation needs at least one mask"));
    }
    let rows = methods
        .iter()
        .map(|&method| {
            let per_case = cases
                .par_iter()
                .map(|(id, mask)| {
                    let ctx = format!("case {id} ({method})");
                    if !mask.is_binary() {
                        return Err(Error::contract("mask is not binary").context(&ctx));
                    }
                    let (u, rec) = unify(mask, method, target).map_err(|e| e.context(&ctx))?;
                    let back = reconstruct(&u, &rec).map_err(|e| e.context(&ctx))?;
                    Ok((id.clone(), vdsc(&back, mask).map_err(|e| e.context(&ctx))?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SimulationRow { method, per_case })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationTable { rows })
}
