//! Seeded verification suites comparing the expansion, the bounds and the
//! derivative methods against exact diagonalization.
//!
//! Every suite is a pure function of its [`VerifyConfig`]: instances are drawn from
//! per-index seeds, evaluated in parallel and collected in index order, and the
//! report carries no timings, so equal configurations give identical reports.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    area_law_saturation_series, critical_beta, markov_decay_for_regions, power_law_decay_bound, tail_sum_check,
};
use crate::cluster::{connected_clusters, count_bound_check, Cluster};
use crate::derivative::{cluster_derivative, DerivativeMethod, DerivativeOptions};
use crate::ed::exact_gibbs;
use crate::ensembles::{random_local, random_observable, random_power_law_chain, rng};
use crate::error::{Error, Result};
use crate::expansion::{cmi_cluster_operator, effective_hamiltonian, log_partition_function, ExpansionConfig};
use crate::operator::SupportedOperator;
use crate::spin_model::{to_model_json, Hamiltonian, SpinGraph};

/// Fractions of `β_c` used by the finite-range suites.
pub const BETA_FRACTIONS: [f64; 3] = [0.25, 0.5, 0.9];
/// Absolute slack added to certificate comparisons.
pub const CERTIFICATE_SLACK: f64 = 1e-9;
/// Relative agreement required between the exact-coefficient and extended-space methods.
pub const EXTENDED_TOLERANCE: f64 = 1e-10;
/// Absolute agreement required of finite differences.
pub const FD_TOLERANCE: f64 = 1e-7;
/// Absolute size of an operator that counts as zero for the exact methods.
pub const VANISHING_TOLERANCE: f64 = 1e-10;
/// Floor below which both sides of a relative comparison are treated as zero.
const RELATIVE_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Derivatives,
    Certificates,
    Counting,
    Bounds,
    Longrange,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Derivatives, Suite::Certificates, Suite::Counting, Suite::Bounds, Suite::Longrange];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Derivatives => "derivatives",
            Suite::Certificates => "certificates",
            Suite::Counting => "counting",
            Suite::Bounds => "bounds",
            Suite::Longrange => "longrange",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    pub instances: usize,
    pub ed_limit: usize,
    /// Step and ceilings for the derivative methods; the method field is ignored.
    pub derivative: DerivativeOptions,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 0, instances: 20, ed_limit: 10, derivative: DerivativeOptions::default() }
    }
}

/// One comparison `measured ≤ bound`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub instance: usize,
    pub case: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

/// A failed check with the model needed to replay it.
#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub check: String,
    pub instance: usize,
    pub case: String,
    pub model: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub instances: usize,
    pub checks: usize,
    pub passed: usize,
    pub ok: bool,
    pub records: Vec<CheckRecord>,
    pub failures: Vec<Failure>,
}

impl SuiteReport {
    /// Records of one check kind.
    pub fn records_of<'a>(&'a self, check: &'a str) -> impl Iterator<Item = &'a CheckRecord> + 'a {
        self.records.iter().filter(move |r| r.check == check)
    }
}

/// Records for one instance plus the model they were computed on.
struct Outcome {
    records: Vec<CheckRecord>,
    models: Vec<(String, Hamiltonian)>,
}

impl Outcome {
    fn new() -> Self {
        Self { records: Vec::new(), models: Vec::new() }
    }

    fn push(&mut self, check: &str, instance: usize, case: String, measured: f64, bound: f64, model_key: &str) {
        let passed = measured <= bound;
        self.records.push(CheckRecord { check: check.into(), instance, case: format!("{model_key}: {case}"), measured, bound, passed });
    }

    fn model(&mut self, key: String, h: &Hamiltonian) {
        self.models.push((key, h.clone()));
    }
}

/// SplitMix64 step, so neighbouring indices give unrelated streams.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Lattice shape of the `index`-th finite-range instance: chains of 4 to 8 sites
/// alternate with 2×3, 2×4 and 3×3-minus-a-corner patches.
pub fn instance_graph(index: usize) -> Result<SpinGraph> {
    if index % 2 == 0 {
        return SpinGraph::chain(4 + (index / 2) % 5, 2);
    }
    match (index / 2) % 3 {
        0 => SpinGraph::grid(2, 3, 2),
        1 => SpinGraph::grid(2, 4, 2),
        _ => {
            let cells: Vec<_> = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).filter(|&p| p != (2, 2)).collect();
            SpinGraph::grid_cells(&cells, 2)
        }
    }
}

/// Random two-local qubit model with fields on [`instance_graph`], at `β = fraction · β_c`.
pub fn local_instance(seed: u64, index: usize, fraction: f64) -> Result<Hamiltonian> {
    let h = random_local(instance_graph(index)?, instance_seed(seed, index), true, 1.0)?;
    let beta_c = critical_beta(h.k());
    h.with_beta(fraction * beta_c)
}

/// Contiguous window of about half the vertex ids, at a random offset.
fn half_region<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let size = n / 2;
    let start = rng.random_range(0..=n - size);
    (start..start + size).collect()
}

fn random_subset<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).filter(|_| rng.random_bool(0.5)).collect()
}

fn diff_norm(a: &SupportedOperator, b: &SupportedOperator) -> Result<f64> {
    Ok(a.add_scaled(b, -1.0)?.op_norm())
}

fn relative_gap(a: &SupportedOperator, b: &SupportedOperator) -> Result<f64> {
    let scale = a.op_norm().max(b.op_norm());
    let gap = diff_norm(a, b)?;
    Ok(if scale < RELATIVE_FLOOR { gap } else { gap / scale })
}

/// Evaluates `f` with the extended-space method, mapping a cost-ceiling refusal to `None`.
fn extended<T>(f: impl FnOnce() -> Result<T>) -> Result<Option<T>> {
    match f() {
        Ok(v) => Ok(Some(v)),
        Err(Error::CostCeiling { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn cluster_label(w: &Cluster, region: &[usize]) -> String {
    format!("w={:?} L={:?}", w.terms(), region)
}

fn derivative_case(cfg: &VerifyConfig, index: usize) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut rng = rng(instance_seed(cfg.seed, index));
    let opts = |method| DerivativeOptions { method, ..cfg.derivative };
    let taylor = opts(DerivativeMethod::BetaTaylor);
    let ext = opts(DerivativeMethod::ExtendedSpace);
    let fd = opts(DerivativeMethod::FiniteDifference);

    // cross-validation on a random connected cluster of a 4-qubit model
    let graph = if index % 2 == 0 { SpinGraph::chain(4, 2)? } else { SpinGraph::grid(2, 2, 2)? };
    let beta = rng.random_range(0.1..=1.0);
    let h = random_local(graph, rng.random(), true, beta)?;
    let m = 1 + index % 3;
    let clusters: Vec<Cluster> = connected_clusters(&h, m).filter(|w| w.vertices(&h).len() <= 4).collect();
    let w = clusters.choose(&mut rng).expect("every model has connected clusters").clone();
    let key = format!("cross-{index}");
    out.model(key.clone(), &h);
    let (mut region, mut e) = (Vec::new(), None);
    for _ in 0..32 {
        region = random_subset(&mut rng, h.num_vertices());
        e = extended(|| cluster_derivative(&h, &w, &region, &ext))?;
        if e.is_some() {
            break;
        }
    }
    let t = cluster_derivative(&h, &w, &region, &taylor)?;
    let f = cluster_derivative(&h, &w, &region, &fd)?;
    let label = cluster_label(&w, &region);
    if let Some(e) = e {
        out.push("taylor-vs-extended", index, label.clone(), relative_gap(&t, &e)?, EXTENDED_TOLERANCE, &key);
    }
    out.push("taylor-vs-fd", index, label, diff_norm(&t, &f)?, FD_TOLERANCE, &key);

    // a disconnected cluster of a 6-site chain
    let h = random_local(SpinGraph::chain(6, 2)?, rng.random(), true, rng.random_range(0.1..=1.0))?;
    let key = format!("vanish-{index}");
    out.model(key.clone(), &h);
    let n_terms = h.terms().len();
    let (i, j) = loop {
        let i = rng.random_range(0..n_terms);
        let j = rng.random_range(0..n_terms);
        if h.term(i).support().iter().all(|v| !h.term(j).support().contains(v)) {
            break (i, j);
        }
    };
    let w = Cluster::new(match rng.random_range(0..3) {
        0 => vec![i, j],
        1 => vec![i, i, j],
        _ => vec![i, j, j],
    });
    let region = random_subset(&mut rng, h.num_vertices());
    let label = cluster_label(&w, &region);
    out.push("vanish-disconnected-taylor", index, label.clone(), cluster_derivative(&h, &w, &region, &taylor)?.op_norm(), VANISHING_TOLERANCE, &key);
    if let Some(e) = extended(|| cluster_derivative(&h, &w, &region, &ext))? {
        out.push("vanish-disconnected-extended", index, label.clone(), e.op_norm(), VANISHING_TOLERANCE, &key);
    }
    out.push("vanish-disconnected-fd", index, label, cluster_derivative(&h, &w, &region, &fd)?.op_norm(), FD_TOLERANCE, &key);

    // a connected cluster that does not link A and C contributes nothing to the CMI operator
    let a_end = rng.random_range(1..=3);
    let b_end = rng.random_range(a_end + 1..=5);
    let (a, b, c): (Vec<usize>, Vec<usize>, Vec<usize>) = ((0..a_end).collect(), (a_end..b_end).collect(), (b_end..6).collect());
    let m = 1 + rng.random_range(0..3);
    let candidates: Vec<Cluster> = connected_clusters(&h, m).filter(|w| !(w.touches(&h, &a) && w.touches(&h, &c))).collect();
    if let Some(w) = candidates.choose(&mut rng) {
        let label = format!("w={:?} A={a:?} B={b:?} C={c:?}", w.terms());
        let k = cmi_cluster_operator(&h, w, &a, &b, &c, &taylor)?;
        out.push("vanish-nonlinking-taylor", index, label.clone(), k.op_norm(), VANISHING_TOLERANCE, &key);
        if let Some(e) = extended(|| cmi_cluster_operator(&h, w, &a, &b, &c, &ext))? {
            out.push("vanish-nonlinking-extended", index, label.clone(), e.op_norm(), VANISHING_TOLERANCE, &key);
        }
        let f = cmi_cluster_operator(&h, w, &a, &b, &c, &fd)?;
        out.push("vanish-nonlinking-fd", index, label, f.op_norm(), FD_TOLERANCE, &key);
    }
    Ok(out)
}

fn certificate_case(cfg: &VerifyConfig, index: usize) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut rng = rng(instance_seed(cfg.seed, index) ^ 1);
    let econf = ExpansionConfig { derivative: DerivativeOptions { method: DerivativeMethod::BetaTaylor, ..cfg.derivative }, ed_limit: cfg.ed_limit };
    for fraction in BETA_FRACTIONS {
        let h = local_instance(cfg.seed, index, fraction)?;
        let key = format!("{index}@{fraction}");
        out.model(key.clone(), &h);
        let region = half_region(&mut rng, h.num_vertices());
        let st = exact_gibbs(&h, cfg.ed_limit)?;
        let exact_phi = st.effective_hamiltonian(&region)?.add_scaled(&h.restricted(&region)?, -1.0)?;
        let result = effective_hamiltonian(&h, &region, 3, &econf)?;
        for m0 in 0..=3 {
            let err = diff_norm(&exact_phi, &result.phi_at(m0)?)?;
            let cert = result.certificate_at(m0).value;
            out.push("phi-certificate", index, format!("L={region:?} m0={m0}"), err, cert + CERTIFICATE_SLACK, &key);
        }
        let violations = result.support_violations(&h).len() as f64;
        out.push("support-locality", index, format!("L={region:?}"), violations, 0.0, &key);
        let lz = log_partition_function(&h, 3, &econf)?;
        let err = (lz.value - st.log_partition_function()).abs();
        out.push("logz-certificate", index, "m0=3".into(), err, lz.certificate.value + CERTIFICATE_SLACK, &key);
    }
    Ok(out)
}

fn counting_case(cfg: &VerifyConfig, index: usize) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut rng = rng(instance_seed(cfg.seed, index) ^ 2);
    let h = random_local(instance_graph(index)?, instance_seed(cfg.seed, index), index % 3 != 0, 1e-3)?;
    let key = format!("{index}");
    out.model(key.clone(), &h);
    let mut complement = random_subset(&mut rng, h.num_vertices());
    if complement.is_empty() {
        complement.push(rng.random_range(0..h.num_vertices()));
    }
    for m in 1..=4 {
        let c = count_bound_check(&h, &complement, m);
        out.push("count-bound", index, format!("Lc={complement:?} m={m}"), c.measured as f64, c.bound, &key);
    }
    Ok(out)
}

fn pairs_at_distance(g: &SpinGraph, d: usize) -> Vec<(usize, usize)> {
    let n = g.num_vertices();
    (0..n).flat_map(|a| (a + 1..n).map(move |c| (a, c))).filter(|&(a, c)| g.distance(a, c) == d).collect()
}

fn bounds_case(cfg: &VerifyConfig, index: usize) -> Result<Outcome> {
    let mut out = Outcome::new();
    let mut rng = rng(instance_seed(cfg.seed, index) ^ 3);
    for fraction in BETA_FRACTIONS {
        let h = local_instance(cfg.seed, index, fraction)?;
        let key = format!("{index}@{fraction}");
        out.model(key.clone(), &h);
        let st = exact_gibbs(&h, cfg.ed_limit)?;
        for d in 1..=3 {
            let Some(&(a, c)) = pairs_at_distance(h.graph(), d).choose(&mut rng) else { continue };
            let b: Vec<usize> = (0..h.num_vertices()).filter(|&v| v != a && v != c).collect();
            let cmi = st.cmi(&[a], &b, &[c])?;
            let bound = markov_decay_for_regions(&h, &[a], &[c]);
            let case = format!("A=[{a}] C=[{c}] d={d}");
            out.push("ssa", index, case.clone(), -cmi, 1e-10, &key);
            out.push("markov-decay", index, case, cmi, if bound.valid { bound.value } else { f64::NEG_INFINITY }, &key);
        }
        let n = h.num_vertices();
        let a = rng.random_range(0..n);
        let c = (a + rng.random_range(1..n)) % n;
        let oa = random_observable(&mut rng, &[a], 2);
        let oc = random_observable(&mut rng, &[c], 2);
        let cor = st.correlation(&oa, &oc)?;
        let mi = st.mutual_information(&[a], &[c])?;
        out.push("correlation", index, format!("A=[{a}] B=[{c}]"), cor * cor, 2.0 * mi + 1e-9, &key);
    }
    // area-law saturation on an 8-site chain at β_c/4
    if index < 5 {
        let h = random_local(SpinGraph::chain(8, 2)?, instance_seed(cfg.seed, index) ^ 4, true, 1.0)?;
        let h = h.with_beta(critical_beta(h.k()) / 4.0)?;
        let key = format!("saturation-{index}");
        out.model(key.clone(), &h);
        let slices: Vec<Vec<usize>> = (2..8).map(|v| vec![v]).collect();
        let rows = area_law_saturation_series(&h, &[0, 1], &slices, cfg.ed_limit)?;
        for (i, row) in rows.iter().enumerate() {
            let case = format!("A=[0, 1] l={}", row.slice);
            out.push("saturation-bound", index, case.clone(), row.increment, row.bound.value, &key);
            if i > 0 {
                out.push("saturation-envelope", index, case, row.bound.value, rows[i - 1].bound.value, &key);
            }
        }
    }
    Ok(out)
}

fn longrange_case(cfg: &VerifyConfig, index: usize) -> Result<Outcome> {
    let mut out = Outcome::new();
    let n = 5 + index % 4;
    let alpha = if index % 2 == 0 { 1.0 } else { 2.0 };
    for fraction in BETA_FRACTIONS {
        let h = random_power_law_chain(n, alpha, instance_seed(cfg.seed, index), 1.0)?;
        let h = h.with_beta(fraction * critical_beta(h.k()) / 11.0)?;
        let key = format!("{index}@{fraction}");
        out.model(key.clone(), &h);
        let st = exact_gibbs(&h, cfg.ed_limit)?;
        for d in (2.0 * alpha) as usize..n {
            let b: Vec<usize> = (1..n).filter(|&v| v != d).collect();
            let cmi = st.cmi(&[0], &b, &[d])?;
            let bound = power_law_decay_bound(1, h.beta(), h.k(), alpha, d);
            out.push("power-law-decay", index, format!("A=[0] C=[{d}]"), cmi, if bound.valid { bound.value } else { f64::NEG_INFINITY }, &key);
        }
        if fraction == BETA_FRACTIONS[0] {
            for m in 1..=3 {
                for l0 in (2.0 * alpha) as usize..=m * (n - 1) {
                    let t = tail_sum_check(&h, m, l0);
                    out.push("tail-sum", index, format!("m={m} l0={l0}"), t.measured, if t.valid { t.bound } else { f64::NEG_INFINITY }, &key);
                }
            }
        }
    }
    Ok(out)
}

/// Runs one suite on `cfg.instances` seeded instances.
pub fn run_suite(suite: Suite, cfg: &VerifyConfig) -> Result<SuiteReport> {
    let case = match suite {
        Suite::Derivatives => derivative_case,
        Suite::Certificates => certificate_case,
        Suite::Counting => counting_case,
        Suite::Bounds => bounds_case,
        Suite::Longrange => longrange_case,
    };
    let outcomes: Vec<Result<Outcome>> = (0..cfg.instances).into_par_iter().map(|i| case(cfg, i)).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        let outcome = outcome?;
        for r in &outcome.records {
            if !r.passed {
                let key = r.case.split(':').next().unwrap_or_default();
                let model = outcome
                    .models
                    .iter()
                    .find(|(k, _)| k == key)
                    .map(|(_, h)| serde_json::from_str(&to_model_json(h)).expect("model json is valid"))
                    .unwrap_or(serde_json::Value::Null);
                failures.push(Failure { check: r.check.clone(), instance: r.instance, case: r.case.clone(), model });
            }
        }
        records.extend(outcome.records);
    }
    let passed = records.iter().filter(|r| r.passed).count();
    Ok(SuiteReport {
        suite,
        seed: cfg.seed,
        instances: cfg.instances,
        checks: records.len(),
        passed,
        ok: failures.is_empty(),
        records,
        failures,
    })
}
