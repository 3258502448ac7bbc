use std::fmt::Write as _;

use rayon::prelude::*;

use super::{hausdorff_with_spacing, ravd, vdsc, HausdorffMode};
use crate::error::{Error, Result};
use crate::preprocess::Volume;

/// Metrics of one case. `None` marks an undefined value (empty mask).
#[derive(Clone, Debug, PartialEq)]
pub struct CaseMetrics {
    pub id: String,
    pub vdsc: f64,
    pub hd: Option<f64>,
    pub ravd: Option<f64>,
}

/// Mean and sample standard deviation over the defined values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// `n − 1` denominator; 0 when fewer than two values are defined.
    pub sd: f64,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Summary> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { n, mean, sd })
    }
}

/// Per-case metrics; aggregates are computed on demand.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub cases: Vec<CaseMetrics>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.2}"))
}

fn summary_cell(s: Option<Summary>) -> String {
    s.map_or_else(
        || "undefined".to_string(),
        |s| format!("{:.2} ± {:.2}", s.mean, s.sd),
    )
}

impl MetricReport {
    pub fn vdsc_summary(&self) -> Option<Summary> {
        Summary::of(self.cases.iter().map(|c| c.vdsc))
    }

    pub fn hd_summary(&self) -> Option<Summary> {
        Summary::of(self.cases.iter().filter_map(|c| c.hd))
    }

    pub fn ravd_summary(&self) -> Option<Summary> {
        Summary::of(self.cases.iter().filter_map(|c| c.ravd))
    }

    /// `case,vdsc,hd,ravd` rows with two decimals, then `#` summary lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("case,vdsc,hd,ravd\n");
        for c in &self.cases {
            let _ = writeln!(
                out,
                "{},{:.2},{},{}",
                c.id,
                c.vdsc,
                cell(c.hd),
                cell(c.ravd)
            );
        }
        let sums = [self.vdsc_summary(), self.hd_summary(), self.ravd_summary()];
        let row = |f: fn(&Summary) -> f64| {
            sums.iter()
                .map(|s| cell(s.as_ref().map(f)))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(out, "# mean,{}", row(|s| s.mean));
        let _ = writeln!(out, "# sd,{}", row(|s| s.sd));
        let _ = writeln!(
            out,
            "# n,{}",
            sums.iter()
                .map(|s| s.map_or(0, |s| s.n).to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        out
    }

    /// Fixed-width table with a `mean ± sd` footer.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>16} {:>16} {:>16}",
            "case", "vDSC [%]", "HD [mm]", "RAVD [%]"
        );
        for c in &self.cases {
            let _ = writeln!(
                out,
                "{:<10} {:>16} {:>16} {:>16}",
                c.id,
                format!("{:.2}", c.vdsc),
                cell(c.hd),
                cell(c.ravd)
            );
        }
        let _ = writeln!(
            out,
            "{:<10} {:>16} {:>16} {:>16}",
            "mean ± sd",
            summary_cell(self.vdsc_summary()),
            summary_cell(self.hd_summary()),
            summary_cell(self.ravd_summary())
        );
        out
    }
}

/// Pairs predictions with references by id and computes every metric,
/// measuring distances with the reference spacing.
pub fn evaluate(
    preds: &[(String, Volume)],
    refs: &[(String, Volume)],
    mode: HausdorffMode,
) -> Result<MetricReport> {
    if preds.len() != refs.len() {
        return Err(Error::config(format!(
            "{} predictions for {} reference masks",
            preds.len(),
            refs.len()
        )));
    }
    let pairs = refs
        .iter()
        .map(|(id, gt)| {
            preds
                .iter()
                .find(|(pid, _)| pid == id)
                .map(|(_, p)| (id, p, gt))
                .ok_or_else(|| Error::config(format!("no prediction for case {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let cases = pairs
        .par_iter()
        .map(|&(id, p, gt)| -> Result<CaseMetrics> {
            if p.dims() != gt.dims() {
                return Err(Error::config(format!(
                    "case {id}: prediction dims {:?} vs reference {:?}",
                    p.dims(),
                    gt.dims()
                )));
            }
            let undefined_as_none = |r: Result<f64>| match r {
                Ok(v) => Ok(Some(v)),
                Err(Error::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            };
            Ok(CaseMetrics {
                id: id.clone(),
                vdsc: vdsc(p, gt).map_err(|e| e.context(id))?,
                hd: undefined_as_none(hausdorff_with_spacing(p, gt, gt.spacing(), mode))
                    .map_err(|e| e.context(id))?,
                ravd: undefined_as_none(ravd(p, gt)).map_err(|e| e.context(id))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport { cases })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_sample_sd() {
        let s = Summary::of([80.0, 90.0]).unwrap();
        assert_eq!(s.mean, 85.0);
        assert!((s.sd - 50f64.sqrt()).abs() < 1e-12);
        assert_eq!(Summary::of([3.0]).unwrap().sd, 0.0);
        assert!(Summary::of([]).is_none());
    }

    #[test]
    fn csv_layout() {
        let r = MetricReport {
            cases: vec![
                CaseMetrics {
                    id: "05".into(),
                    vdsc: 80.0,
                    hd: Some(1.234),
                    ravd: None,
                },
                CaseMetrics {
                    id: "15".into(),
                    vdsc: 90.0,
                    hd: Some(2.0),
                    ravd: Some(10.0),
                },
            ],
        };
        let csv = r.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "case,vdsc,hd,ravd");
        assert_eq!(lines[1], "05,80.00,1.23,undefined");
        assert_eq!(lines[3], "# mean,85.00,1.62,10.00");
        assert_eq!(lines[4], "# sd,7.07,0.54,0.00");
        assert!(r.to_text().contains("85.00 ± 7.07"));
    }
}
