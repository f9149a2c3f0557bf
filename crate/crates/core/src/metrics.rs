//! Evaluation metrics and trace analytics: solution quality, average
//! pairwise distance, area under the optimization curve, regret curves with
//! sqrt-horizon fits, entropy traces, watershed and discovery rounds.
//! Everything here is a pure function of the serialized trace.

use serde::{Deserialize, Serialize};

use crate::beliefs::{map_principle, PrincipleId};
use crate::error::{Error, Result};
use crate::trace::{principles_at, ObservationRecord, Trace};
use crate::Real;

/// Reference maxima shipped as metric presets for the original benchmark
/// tasks (optical chirality, bio-activity, critical temperature,
/// polarizability).
pub const MU_REF_NHO: Real = 2.0;
pub const MU_REF_MBO: Real = 6.5;
pub const MU_REF_SPO: Real = 298.5;
pub const MU_REF_TMC: Real = 493.8;

pub const DEFAULT_DISCOVERY_DOT: Real = 0.95;

pub fn mu_ref_preset(name: &str) -> Option<Real> {
    match name {
        "nho" => Some(MU_REF_NHO),
        "mbo" => Some(MU_REF_MBO),
        "spo" => Some(MU_REF_SPO),
        "tmc" => Some(MU_REF_TMC),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sq_percent: Real,
    pub apd: Option<Real>,
    pub auoc_percent: Real,
    pub regret_series: Vec<Real>,
    pub regret_coefficient: Real,
    pub regret_alpha: Real,
    pub regret_fit_residual: Real,
    pub entropy_series: Vec<Real>,
    pub map_mass_series: Vec<Real>,
    pub best_so_far_series: Vec<Real>,
    pub watershed_round: Option<usize>,
    pub discovery_round: Option<usize>,
    pub mu_ref: Real,
    pub v_star: Real,
}

fn outcomes(trace: &Trace) -> Vec<Real> {
    trace.rounds.iter().map(|r| r.observation.outcome).collect()
}

/// Maximum outcome over the trajectory, normalized by the reference maximum.
/// Failed observations participate at their recorded outcome.
pub fn solution_quality(trace: &Trace, mu_ref: Real) -> Result<Real> {
    if trace.rounds.is_empty() {
        return Err(Error::validation("metrics need a nonempty trace"));
    }
    if mu_ref <= 0.0 {
        return Err(Error::validation("mu_ref must be > 0"));
    }
    let best = outcomes(trace)
        .into_iter()
        .fold(Real::NEG_INFINITY, Real::max);
    Ok(100.0 * best / mu_ref)
}

/// Average pairwise Euclidean distance over the featurized valid (non-failed)
/// executed hypotheses. Undefined (None) below two valid points.
pub fn apd_with<F>(trace: &Trace, featurize: F) -> Result<Option<Real>>
where
    F: Fn(&ObservationRecord) -> Vec<Real>,
{
    if trace.rounds.is_empty() {
        return Err(Error::validation("metrics need a nonempty trace"));
    }
    let feats: Vec<Vec<Real>> = trace
        .rounds
        .iter()
        .filter(|r| !r.observation.failed)
        .map(|r| featurize(&r.observation))
        .collect();
    let m = feats.len();
    if m < 2 {
        return Ok(None);
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let d = feats[i]
                .iter()
                .zip(&feats[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<Real>()
                .sqrt();
            total += d;
        }
    }
    Ok(Some(2.0 * total / (m as Real * (m as Real - 1.0))))
}

/// Default featurizer: the hypothesis embedding.
pub fn apd(trace: &Trace) -> Result<Option<Real>> {
    apd_with(trace, |o| o.embedding.as_slice().to_vec())
}

/// Mean running-maximum outcome over the executed budget, normalized.
pub fn auoc(trace: &Trace, mu_ref: Real) -> Result<Real> {
    if trace.rounds.is_empty() {
        return Err(Error::validation("metrics need a nonempty trace"));
    }
    if mu_ref <= 0.0 {
        return Err(Error::validation("mu_ref must be > 0"));
    }
    let ys = outcomes(trace);
    let t = ys.len() as Real;
    let mut best = Real::NEG_INFINITY;
    let mut total = 0.0;
    for y in ys {
        best = best.max(y);
        total += best;
    }
    Ok(100.0 * total / (t * mu_ref))
}

/// Cumulative regret series R(t) = sum_{s<=t} (v* - y_s), one entry per round.
pub fn regret_series(trace: &Trace, v_star: Real) -> Vec<Real> {
    let mut acc = 0.0;
    outcomes(trace)
        .into_iter()
        .map(|y| {
            acc += v_star - y;
            acc
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretFit {
    pub series: Vec<Real>,
    /// Least-squares c in R(t) ~ c sqrt(t), fit over rounds [2, T].
    pub coefficient: Real,
    /// Log-log slope of R(t) vs t over the second half of the run.
    pub alpha: Real,
    pub fit_residual: Real,
}

pub fn regret_fit(trace: &Trace, v_star: Real) -> RegretFit {
    let series = regret_series(trace, v_star);
    let t_max = series.len();
    // c = sum R sqrt(t) / sum t over t in [2, T] (t = 1 is degenerate)
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, r) in series.iter().enumerate() {
        let t = (i + 1) as Real;
        if t >= 2.0 {
            num += r * t.sqrt();
            den += t;
        }
    }
    let coefficient = if den > 0.0 { num / den } else { 0.0 };
    let fit_residual = if den > 0.0 {
        let mut sq = 0.0;
        let mut n = 0usize;
        for (i, r) in series.iter().enumerate() {
            let t = (i + 1) as Real;
            if t >= 2.0 {
                let e = r - coefficient * t.sqrt();
                sq += e * e;
                n += 1;
            }
        }
        (sq / n as Real).sqrt()
    } else {
        0.0
    };

    // alpha: least-squares slope of ln R on ln t over the second half,
    // positive-regret points only
    let start = t_max / 2;
    let pts: Vec<(Real, Real)> = series
        .iter()
        .enumerate()
        .skip(start.saturating_sub(1))
        .filter(|(_, r)| **r > 0.0)
        .map(|(i, r)| (((i + 1) as Real).ln(), r.ln()))
        .collect();
    let alpha = if pts.len() < 2 {
        0.0
    } else {
        let n = pts.len() as Real;
        let mx = pts.iter().map(|(x, _)| x).sum::<Real>() / n;
        let my = pts.iter().map(|(_, y)| y).sum::<Real>() / n;
        let sxx: Real = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        let sxy: Real = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    };
    RegretFit {
        series,
        coefficient,
        alpha,
        fit_residual,
    }
}

/// The MAP principle at every round, with the registry rebuilt from the
/// trace so tie-breaks see creation rounds.
pub fn map_sequence(trace: &Trace) -> Result<Vec<PrincipleId>> {
    trace
        .rounds
        .iter()
        .map(|rt| {
            let reg = principles_at(trace, rt.round)?;
            map_principle(&rt.beliefs, &reg)
        })
        .collect()
}

/// Earliest round r such that the MAP principle is constant from r on and
/// differs from the MAP at r-1; absent when the MAP never changes or never
/// stabilizes. A switch on the final round alone does not count as
/// stabilization: the constant tail must span at least two rounds.
pub fn watershed(trace: &Trace) -> Result<Option<usize>> {
    let maps = map_sequence(trace)?;
    let mut last_change = None;
    for i in 1..maps.len() {
        if maps[i] != maps[i - 1] {
            last_change = Some(i);
        }
    }
    Ok(last_change.filter(|r| maps.len() - r >= 2))
}

/// Earliest round whose working set contains a principle within `eps_dot`
/// embedding alignment of the true principle's center.
pub fn discovery_round(trace: &Trace, eps_dot: Real) -> Result<Option<usize>> {
    let center = &trace.header.world_summary.true_center;
    let near = |p: &crate::beliefs::Principle| -> bool {
        p.embedding
            .dot(center)
            .map(|d| d >= eps_dot)
            .unwrap_or(false)
    };
    if trace.header.initial_principles.iter().any(near) {
        return Ok(Some(0));
    }
    for rt in &trace.rounds {
        if let Some(p) = &rt.principle_added {
            if near(p) {
                return Ok(Some(rt.round));
            }
        }
    }
    Ok(None)
}

/// Assemble the full report. `mu_ref` defaults to the world's brute-force
/// optimum recorded in the header.
pub fn report(trace: &Trace, mu_ref: Option<Real>, eps_dot: Real) -> Result<MetricReport> {
    let v_star = trace.header.world_summary.v_star;
    let mu = mu_ref.unwrap_or(v_star);
    let fit = regret_fit(trace, v_star);
    let maps = map_sequence(trace)?;
    let map_mass_series: Vec<Real> = trace
        .rounds
        .iter()
        .zip(&maps)
        .map(|(rt, id)| rt.beliefs.mass_of(id).unwrap_or(0.0))
        .collect();
    let mut best = Real::NEG_INFINITY;
    let best_so_far_series: Vec<Real> = outcomes(trace)
        .into_iter()
        .map(|y| {
            best = best.max(y);
            best
        })
        .collect();
    Ok(MetricReport {
        sq_percent: solution_quality(trace, mu)?,
        apd: apd(trace)?,
        auoc_percent: auoc(trace, mu)?,
        regret_series: fit.series,
        regret_coefficient: fit.coefficient,
        regret_alpha: fit.alpha,
        regret_fit_residual: fit.fit_residual,
        entropy_series: trace.rounds.iter().map(|r| r.beliefs.entropy).collect(),
        map_mass_series,
        best_so_far_series,
        watershed_round: watershed(trace)?,
        discovery_round: discovery_round(trace, eps_dot)?,
        mu_ref: mu,
        v_star,
    })
}

/// Flat CSV of the per-round series, suitable for external plotting.
pub fn series_csv(trace: &Trace) -> Result<String> {
    let report = report(trace, None, DEFAULT_DISCOVERY_DOT)?;
    let mut out = String::from("round,outcome,best_so_far,regret,entropy,map_mass\n");
    for (i, rt) in trace.rounds.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rt.round,
            rt.observation.outcome,
            report.best_so_far_series[i],
            report.regret_series[i],
            report.entropy_series[i],
            report.map_mass_series[i],
        ));
    }
    Ok(out)
}
