//! Closed-form bound evaluators: threshold temperature, CMI decay bounds,
//! surface regions, recovery error and the long-range tail sum.

use std::f64::consts::E;

use serde::Serialize;

use crate::ed::exact_gibbs;
use crate::error::{Error, Result};
use crate::spin_model::{Hamiltonian, InteractionClass, SpinGraph, UNREACHABLE};

/// A bound value together with its inputs and whether the hypotheses hold.
/// The value is reported even when the hypotheses fail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub inputs: Vec<(String, f64)>,
    pub value: f64,
    pub valid: bool,
    pub reason: Option<String>,
}

/// `β_c = 1 / (8 e³ k)`. A model without terms (`k = 0`) has no threshold.
pub fn critical_beta(k: usize) -> f64 {
    1.0 / (8.0 * E.powi(3) * k as f64)
}

/// `∂L_l = {v ∈ L : d(v, L^c) ≤ l}`. With `L = V` the complement is empty and the
/// surface is empty for every `l`.
pub fn surface_region(g: &SpinGraph, region: &[usize], l: usize) -> Vec<usize> {
    let complement = g.complement(region);
    let mut out: Vec<usize> = region
        .iter()
        .copied()
        .filter(|&v| {
            let d = g.set_distance(&[v], &complement);
            d != UNREACHABLE && d <= l
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn distance_input(d: usize) -> f64 {
    if d == UNREACHABLE {
        f64::INFINITY
    } else {
        d as f64
    }
}

/// `e · minsurf · (β/β_c)^{d_AC/r} / (1 − β/β_c)`, valid iff `β < β_c`.
pub fn markov_decay_bound(minsurf: usize, beta: f64, beta_c: f64, d_ac: usize, r: usize) -> BoundReport {
    let x = beta / beta_c;
    let d = distance_input(d_ac);
    let value = if d.is_infinite() && x < 1.0 {
        0.0
    } else {
        E * minsurf as f64 * x.powf(d / r.max(1) as f64) / (1.0 - x)
    };
    let valid = beta < beta_c;
    BoundReport {
        name: "markov-decay".into(),
        inputs: vec![
            ("minsurf".into(), minsurf as f64),
            ("beta".into(), beta),
            ("beta_c".into(), beta_c),
            ("d_ac".into(), d),
            ("r".into(), r as f64),
        ],
        value,
        valid,
        reason: (!valid).then(|| "beta >= beta_c".to_string()),
    }
}

/// The finite-range decay bound for concrete regions of a model, with
/// `minsurf = min(|∂A_r|, |∂C_r|)`.
pub fn markov_decay_for_regions(h: &Hamiltonian, a: &[usize], c: &[usize]) -> BoundReport {
    let g = h.graph();
    let r = h.range();
    let minsurf = surface_region(g, a, r).len().min(surface_region(g, c, r).len());
    markov_decay_bound(minsurf, h.beta(), critical_beta(h.k()), g.set_distance(a, c), r)
}

/// `β · minAC · C_β / d_AC^α` with `C_β = (11 e^{1/k}/β_c)/(1 − 11β/β_c)`;
/// valid iff `β < β_c/11` and `d_AC ≥ 2α`.
pub fn power_law_decay_bound(min_ac: usize, beta: f64, k: usize, alpha: f64, d_ac: usize) -> BoundReport {
    let beta_c = critical_beta(k);
    let c_beta = (11.0 * E.powf(1.0 / k as f64) / beta_c) / (1.0 - 11.0 * beta / beta_c);
    let d = distance_input(d_ac);
    let value = beta * min_ac as f64 * c_beta / d.powf(alpha);
    let mut reasons = Vec::new();
    if beta >= beta_c / 11.0 {
        reasons.push("beta >= beta_c/11");
    }
    if d < 2.0 * alpha {
        reasons.push("d_ac < 2 alpha");
    }
    BoundReport {
        name: "power-law-decay".into(),
        inputs: vec![
            ("min_ac".into(), min_ac as f64),
            ("beta".into(), beta),
            ("k".into(), k as f64),
            ("alpha".into(), alpha),
            ("d_ac".into(), d),
        ],
        value,
        valid: reasons.is_empty(),
        reason: (!reasons.is_empty()).then(|| reasons.join("; ")),
    }
}

/// `√(cmi · log 2)`, the trace-norm error of the best recovery map.
pub fn fawzi_renner_recovery_error(cmi: f64) -> Result<f64> {
    if !(cmi >= 0.0) {
        return Err(Error::InvalidArgument(format!("conditional mutual information must be non-negative, got {cmi}")));
    }
    Ok((cmi * std::f64::consts::LN_2).sqrt())
}

/// One slice of an area-law saturation series.
#[derive(Clone, Debug, Serialize)]
pub struct SaturationRow {
    pub slice: usize,
    /// `I(A:B_1…B_l) − I(A:B_1…B_{l−1})`, equal to `I(A:B_l | B_1…B_{l−1})`.
    pub increment: f64,
    pub bound: BoundReport,
}

/// Exact mutual-information increments as slices are added, each paired with the
/// finite-range decay bound for `C = B_l` conditioned on the earlier slices.
pub fn area_law_saturation_series(
    h: &Hamiltonian,
    a: &[usize],
    slices: &[Vec<usize>],
    ed_limit: usize,
) -> Result<Vec<SaturationRow>> {
    let st = exact_gibbs(h, ed_limit)?;
    let mut rows = Vec::with_capacity(slices.len());
    let mut prefix: Vec<usize> = Vec::new();
    let mut previous = 0.0;
    for (i, slice) in slices.iter().enumerate() {
        prefix.extend_from_slice(slice);
        prefix.sort_unstable();
        let mi = st.mutual_information(a, &prefix)?;
        rows.push(SaturationRow { slice: i + 1, increment: mi - previous, bound: markov_decay_for_regions(h, a, slice) });
        previous = mi;
    }
    Ok(rows)
}

/// Exhaustive long-range tail sum against `11^m · l₀^{−α}`.
#[derive(Clone, Debug, Serialize)]
pub struct TailSumReport {
    pub m: usize,
    pub l0: usize,
    pub measured: f64,
    pub bound: f64,
    pub valid: bool,
    pub reason: Option<String>,
}

impl TailSumReport {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound
    }
}

/// `Σ_{l_1+…+l_m ≥ l₀} Π_j g̃_{l_j}` over `l_j ∈ 1..=max diameter`.
pub fn tail_sum_check(h: &Hamiltonian, m: usize, l0: usize) -> TailSumReport {
    let g = h.locality_profile();
    fn rec(g: &[f64], left: usize, sum: usize, prod: f64, l0: usize) -> f64 {
        if left == 0 {
            return if sum >= l0 { prod } else { 0.0 };
        }
        (1..g.len()).map(|l| rec(g, left - 1, sum + l, prod * g[l], l0)).sum()
    }
    let measured = if m == 0 { 0.0 } else { rec(&g, m, 0, 1.0, l0) };
    let (bound, reason) = match h.class() {
        InteractionClass::PowerLaw(alpha) => {
            let b = 11f64.powi(m as i32) * (l0 as f64).powf(-alpha);
            (b, ((l0 as f64) < 2.0 * alpha).then(|| "l0 < 2 alpha".to_string()))
        }
        InteractionClass::FiniteRange(_) => (f64::INFINITY, Some("finite-range model has no power-law exponent".into())),
    };
    TailSumReport { m, l0, measured, bound, valid: reason.is_none(), reason }
}
