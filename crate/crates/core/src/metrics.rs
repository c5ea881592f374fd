//! Estimators, diagnostics and trace records.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParameterBox, ParameterVector};
use crate::nested::PosteriorSnapshot;

/// Maximum number of test functions kept in a default [`OmegaSet`].
pub const OMEGA_TRUNCATION: usize = 16;

/// Weighted posterior mean `sum_i w_i theta_i`.
pub fn posterior_mean(snapshot: &PosteriorSnapshot) -> ParameterVector {
    let d = snapshot.thetas.first().map_or(0, ParameterVector::dim);
    let mut m = vec![0.0; d];
    for (t, w) in snapshot.thetas.iter().zip(&snapshot.weights) {
        for (a, v) in m.iter_mut().zip(t.coords()) {
            *a += w * v;
        }
    }
    ParameterVector(m)
}

/// Normalised posterior standard deviation: the weighted standard deviation
/// of each coordinate divided by the magnitude of the true value.
pub fn nstd(snapshot: &PosteriorSnapshot, truth: &ParameterVector) -> Result<Vec<f64>> {
    if let Some(k) = truth.coords().iter().position(|&v| v == 0.0) {
        return Err(Error::invalid(format!("true parameter coordinate {k} is zero")));
    }
    let mean = posterior_mean(snapshot);
    Ok((0..truth.dim())
        .map(|k| {
            let var: f64 = snapshot
                .thetas
                .iter()
                .zip(&snapshot.weights)
                .map(|(t, w)| {
                    let d = t.coords()[k] - mean.coords()[k];
                    w * d * d
                })
                .sum();
            var.max(0.0).sqrt() / truth.coords()[k].abs()
        })
        .collect())
}

/// Effective sample size `1 / sum w^2` of normalised weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// State estimate `sum_i w_i (1/M) sum_j x_ij`.
pub fn state_estimate(snapshot: &PosteriorSnapshot) -> Vec<f64> {
    let d = snapshot.state_means.first().map_or(0, Vec::len);
    let mut m = vec![0.0; d];
    for (sm, w) in snapshot.state_means.iter().zip(&snapshot.weights) {
        for (a, v) in m.iter_mut().zip(sm) {
            *a += w * v;
        }
    }
    m
}

/// A probability measure on parameter space that test functions can be
/// integrated against.
#[derive(Clone, Copy, Debug)]
pub enum Measure<'a> {
    Weighted { points: &'a [ParameterVector], weights: &'a [f64] },
    Uniform(&'a [ParameterVector]),
    PointMass(&'a ParameterVector),
}

impl<'a> Measure<'a> {
    pub fn integrate(&self, h: &dyn Fn(&[f64]) -> f64) -> f64 {
        match *self {
            Measure::Weighted { points, weights } => points.iter().zip(weights).map(|(p, w)| w * h(p.coords())).sum(),
            Measure::Uniform(points) => {
                points.iter().map(|p| h(p.coords())).sum::<f64>() / points.len().max(1) as f64
            }
            Measure::PointMass(p) => h(p.coords()),
        }
    }
}

impl PosteriorSnapshot {
    pub fn as_measure(&self) -> Measure<'_> {
        Measure::Weighted { points: &self.thetas, weights: &self.weights }
    }
}

type TestFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A finite family of test functions bounded by 1, weighted `2^-i` for
/// `i = 1, 2, ...`.
pub struct OmegaSet {
    functions: Vec<TestFn>,
}

impl fmt::Debug for OmegaSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OmegaSet").field("len", &self.functions.len()).finish()
    }
}

impl OmegaSet {
    /// Each function must map into `[-1, 1]`.
    pub fn new(functions: Vec<TestFn>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::invalid("test-function family is empty"));
        }
        Ok(OmegaSet { functions })
    }

    /// `h_k(theta) = clip((theta_k - m_k) / r_k, -1, 1)` for the box midpoint
    /// `m` and half-widths `r`, followed by the products `h_k h_l`, `k <= l`,
    /// truncated at [`OMEGA_TRUNCATION`] functions.
    pub fn default_for_box(bounds: &ParameterBox) -> Self {
        let mid = bounds.midpoint();
        let half = bounds.half_widths();
        let d = bounds.dim();
        let clip = move |k: usize| {
            let (m, r) = (mid[k], half[k]);
            move |t: &[f64]| ((t[k] - m) / r).clamp(-1.0, 1.0)
        };
        let mut functions: Vec<TestFn> = (0..d).map(|k| Box::new(clip.clone()(k)) as TestFn).collect();
        'outer: for k in 0..d {
            for l in k..d {
                if functions.len() >= OMEGA_TRUNCATION {
                    break 'outer;
                }
                let (hk, hl) = (clip.clone()(k), clip.clone()(l));
                functions.push(Box::new(move |t: &[f64]| hk(t) * hl(t)));
            }
        }
        functions.truncate(OMEGA_TRUNCATION);
        OmegaSet { functions }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

/// `sum_i 2^-i |(h_i, alpha) - (h_i, beta)|` over the family; lies in `[0, 2]`.
pub fn d_omega(alpha: Measure<'_>, beta: Measure<'_>, omega: &OmegaSet) -> f64 {
    let mut weight = 1.0;
    omega
        .functions
        .iter()
        .map(|h| {
            weight *= 0.5;
            weight * (alpha.integrate(h.as_ref()) - beta.integrate(h.as_ref())).abs()
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares fit of `log(error) = intercept + slope * log(N)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::invalid(format!("rate fit needs at least 3 distinct N, got {}", distinct.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(Error::invalid(format!("rate fit needs positive N and errors, got {p:?}")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(RateFit { slope, intercept: my - slope * mx })
}

/// Ground truth and settings used to fill the optional trace columns.
#[derive(Debug, Default)]
pub struct TraceContext {
    pub true_params: Option<ParameterVector>,
    /// True hidden state at each observation time, indexed by step (entry 0
    /// is the initial state).
    pub true_states: Option<Vec<Vec<f64>>>,
    /// Continuous time elapsed per observation step; steps are used when 0.
    pub time_per_step: f64,
    pub omega: Option<OmegaSet>,
}

/// Summary statistics of one filter step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub theta_hat: Vec<f64>,
    pub nstd: Option<Vec<f64>>,
    pub state_error: Option<Vec<f64>>,
    pub ess: f64,
    pub log_evidence_increment: f64,
    pub d_omega: Option<f64>,
    /// Caller-supplied columns, named by [`RunTrace::extra_columns`].
    #[serde(default)]
    pub extra: Vec<f64>,
}

impl StepRecord {
    pub fn from_snapshot(snapshot: &PosteriorSnapshot, log_evidence_increment: f64, ctx: &TraceContext) -> Result<Self> {
        let theta_hat = posterior_mean(snapshot);
        let nstd = ctx.true_params.as_ref().map(|t| nstd(snapshot, t)).transpose()?;
        let state_error = ctx.true_states.as_ref().and_then(|xs| xs.get(snapshot.step)).map(|truth| {
            state_estimate(snapshot).iter().zip(truth).map(|(e, x)| e - x).collect()
        });
        let d_omega = match (&ctx.omega, &ctx.true_params) {
            (Some(omega), Some(t)) => Some(d_omega(snapshot.as_measure(), Measure::PointMass(t), omega)),
            _ => None,
        };
        let time = if ctx.time_per_step > 0.0 { snapshot.step as f64 * ctx.time_per_step } else { snapshot.step as f64 };
        Ok(StepRecord {
            step: snapshot.step,
            time,
            theta_hat: theta_hat.0,
            nstd,
            state_error,
            ess: ess(&snapshot.weights),
            log_evidence_increment,
            d_omega,
            extra: Vec::new(),
        })
    }
}

/// Per-step records of a nested filter run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<StepRecord>,
    #[serde(default)]
    pub extra_columns: Vec<String>,
}

impl RunTrace {
    /// Column names, derived from the first record.
    pub fn header(&self) -> Vec<String> {
        let mut cols = vec!["step".to_string(), "time".to_string()];
        let Some(first) = self.records.first() else { return cols };
        cols.extend((0..first.theta_hat.len()).map(|k| format!("theta_hat_{k}")));
        if let Some(v) = &first.nstd {
            cols.extend((0..v.len()).map(|k| format!("nstd_{k}")));
        }
        if let Some(v) = &first.state_error {
            cols.extend((0..v.len()).map(|k| format!("state_error_{k}")));
        }
        cols.push("ess".into());
        cols.push("log_evidence_increment".into());
        if first.d_omega.is_some() {
            cols.push("d_omega".into());
        }
        cols.extend(self.extra_columns.iter().cloned());
        cols
    }

    /// Writes the trace as comma-separated text after `#`-prefixed comment
    /// lines carrying `meta`.
    pub fn write_csv<W: Write>(&self, mut out: W, meta: &[(String, String)]) -> Result<()> {
        for (k, v) in meta {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for r in &self.records {
            let mut row = vec![r.step.to_string(), r.time.to_string()];
            row.extend(r.theta_hat.iter().map(f64::to_string));
            if let Some(v) = &r.nstd {
                row.extend(v.iter().map(f64::to_string));
            }
            if let Some(v) = &r.state_error {
                row.extend(v.iter().map(f64::to_string));
            }
            row.push(r.ess.to_string());
            row.push(r.log_evidence_increment.to_string());
            if let Some(d) = r.d_omega {
                row.push(d.to_string());
            }
            row.extend(r.extra.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
