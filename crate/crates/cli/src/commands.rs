use std::time::Instant;

use anyhow::{bail, Context, Result};
use qmarkov::bounds::{
    area_law_saturation_series, critical_beta, fawzi_renner_recovery_error, markov_decay_bound, markov_decay_for_regions,
    power_law_decay_bound, surface_region, tail_sum_check, BoundReport,
};
use qmarkov::cluster::{clusters_connected_to, count_bound_check};
use qmarkov::ed::{exact_gibbs, ExactGibbs};
use qmarkov::expansion::{
    cmi_expansion, effective_hamiltonian, local_entropy, local_observable, log_partition_function, order_for_epsilon,
    reduced_state, ExpansionConfig,
};
use qmarkov::operator::pauli_string;
use qmarkov::spin_model::{load_model, NormalizationPolicy};
use qmarkov::verify::{run_suite, Suite, SuiteReport, VerifyConfig};
use qmarkov::{DerivativeMethod, DerivativeOptions, Hamiltonian, SupportedOperator};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{BoundCommand, Cli, Command, ModelArgs, OrderArgs};

/// Configuration echo attached to every JSON report.
#[derive(Serialize)]
struct Provenance {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelProvenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// `(name, rigorous)` for every certificate or bound in the result.
    validity: Vec<(String, bool)>,
}

#[derive(Serialize)]
struct ModelProvenance {
    path: String,
    beta: f64,
    beta_c: f64,
    rescale_factor: f64,
    method: DerivativeMethod,
    fd_step: f64,
    ed_limit: usize,
}

struct Loaded {
    h: Hamiltonian,
    config: ExpansionConfig,
    provenance: ModelProvenance,
}

fn load(args: &ModelArgs) -> Result<Loaded> {
    let policy = if args.rescale { NormalizationPolicy::Rescale } else { NormalizationPolicy::Strict };
    let loaded = load_model(&args.model, policy).with_context(|| format!("loading {}", args.model.display()))?;
    let mut h = loaded.hamiltonian;
    if let Some(beta) = args.beta {
        h = h.with_beta(beta * loaded.rescale_factor)?;
    }
    let derivative = DerivativeOptions { method: args.method.into(), fd_step: args.fd_step, ..DerivativeOptions::default() };
    let provenance = ModelProvenance {
        path: args.model.display().to_string(),
        beta: h.beta(),
        beta_c: critical_beta(h.k()),
        rescale_factor: loaded.rescale_factor,
        method: derivative.method,
        fd_step: args.fd_step,
        ed_limit: args.ed_limit,
    };
    Ok(Loaded { h, config: ExpansionConfig { derivative, ed_limit: args.ed_limit }, provenance })
}

pub fn parse_region(s: &str) -> Result<Vec<usize>> {
    let mut v = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().with_context(|| format!("bad vertex '{t}'")))
        .collect::<Result<Vec<_>>>()?;
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

fn parse_regions(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';').map(parse_region).collect()
}

fn resolve_order(h: &Hamiltonian, region: &[usize], order: &OrderArgs) -> Result<usize> {
    match (order.order, order.epsilon) {
        (Some(m), _) => Ok(m),
        (None, Some(eps)) => Ok(order_for_epsilon(h, region, eps)?),
        (None, None) => Ok(3),
    }
}

fn ed_if_small(h: &Hamiltonian, limit: usize) -> Result<Option<ExactGibbs>> {
    Ok(if h.num_vertices() <= limit { Some(exact_gibbs(h, limit)?) } else { None })
}

fn bound_row(b: &BoundReport) -> String {
    let reason = b.reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default();
    format!("{:<16} {:>14.6e}  valid={}{}", b.name, b.value, b.valid, reason)
}

/// Output of one command: JSON body, human table and success flag.
struct Outcome {
    command: &'static str,
    model: Option<ModelProvenance>,
    seed: Option<u64>,
    validity: Vec<(String, bool)>,
    body: Value,
    table: Vec<String>,
    ok: bool,
}

impl Outcome {
    fn new(command: &'static str, body: Value, table: Vec<String>) -> Self {
        Self { command, model: None, seed: None, validity: Vec::new(), body, table, ok: true }
    }

    fn with_model(mut self, m: ModelProvenance) -> Self {
        self.model = Some(m);
        self
    }
}

pub fn run(cli: &Cli) -> Result<bool> {
    let outcome = dispatch(&cli.command)?;
    let report = json!({
        "provenance": Provenance {
            tool: "qmarkov",
            version: env!("CARGO_PKG_VERSION"),
            command: outcome.command,
            threads: rayon::current_num_threads(),
            model: outcome.model,
            seed: outcome.seed,
            validity: outcome.validity,
        },
        "result": outcome.body,
    });
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &cli.out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    if cli.json {
        println!("{text}");
    } else {
        for line in &outcome.table {
            println!("{line}");
        }
    }
    Ok(outcome.ok)
}

fn dispatch(command: &Command) -> Result<Outcome> {
    match command {
        Command::Clusters { model, anchors, max_order } => clusters(model, anchors.as_deref(), *max_order),
        Command::Effham { model, order, region } => effham(model, order, region),
        Command::Logz { model, order } => logz(model, *order),
        Command::Reduced { model, order, region } => reduced(model, order, region),
        Command::Observable { model, order, pauli, support, padding } => observable(model, order, pauli, support, *padding),
        Command::Entropy { model, order, region } => entropy(model, order, region),
        Command::Cmi { model, order, a, b, c } => cmi(model, *order, a, b, c),
        Command::Bound { which } => bound(which),
        Command::Verify { suite, seed, instances, ed_limit, fd_step } => verify(suite, *seed, *instances, *ed_limit, *fd_step),
    }
}

fn clusters(args: &ModelArgs, anchors: Option<&str>, max_order: usize) -> Result<Outcome> {
    let l = load(args)?;
    let anchors = match anchors {
        Some(s) => parse_regions(s)?,
        None => l.h.graph().vertices().into_iter().map(|v| vec![v]).collect(),
    };
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut all_hold = true;
    let mut table =
        vec![format!("{:<12} {:>3} {:>10} {:>10} {:>14} {:>6}", "anchor", "m", "attached", "touching", "bound", "holds")];
    for anchor in &anchors {
        for m in 1..=max_order {
            let count = clusters_connected_to(&l.h, anchor, m).count();
            // the bound covers connected clusters touching the anchor
            let check = count_bound_check(&l.h, anchor, m);
            all_hold &= check.holds();
            table.push(format!(
                "{:<12} {:>3} {:>10} {:>10} {:>14.6e} {:>6}",
                format!("{anchor:?}"),
                m,
                count,
                check.measured,
                check.bound,
                check.holds()
            ));
            rows.push(json!({
                "anchor": anchor, "order": m, "count": count,
                "touching": check.measured, "bound": check.bound, "holds": check.holds(),
            }));
        }
    }
    let wall = start.elapsed().as_secs_f64();
    table.push(format!("wall time {wall:.3}s"));
    let mut o = Outcome::new("clusters", json!({ "rows": rows, "wall_seconds": wall }), table).with_model(l.provenance);
    o.validity.push(("count-bound".into(), all_hold));
    o.ok = all_hold;
    Ok(o)
}

fn effham(args: &ModelArgs, order: &OrderArgs, region: &str) -> Result<Outcome> {
    let l = load(args)?;
    let region = parse_region(region)?;
    let m0 = resolve_order(&l.h, &region, order)?;
    let result = effective_hamiltonian(&l.h, &region, m0, &l.config)?;
    let summary = result.summary()?;
    let exact = match ed_if_small(&l.h, args.ed_limit)? {
        Some(st) => {
            let phi = st.effective_hamiltonian(&result.region)?.add_scaled(&l.h.restricted(&result.region)?, -1.0)?;
            Some((0..=m0).map(|m| Ok(phi.add_scaled(&result.phi_at(m)?, -1.0)?.op_norm())).collect::<Result<Vec<f64>>>()?)
        }
        None => None,
    };
    let mut table = vec![
        format!("region {:?}  order {}  beta {:.6e}  beta_c {:.6e}", result.region, m0, result.beta, result.beta_c),
        format!("{:>3} {:>8} {:>14} {:>14} {:>14} {:>14}", "m", "clusters", "|sum|", "sum|h_w|", "certificate", "ED error"),
    ];
    for m in 0..=m0 {
        let (clusters, ns, sn) = match m {
            0 => (0, 0.0, 0.0),
            _ => {
                let o = &summary.per_order[m - 1];
                (o.clusters, o.norm_of_sum, o.sum_of_norms)
            }
        };
        let ed = exact.as_ref().map(|e| format!("{:.6e}", e[m])).unwrap_or_else(|| "-".into());
        table.push(format!(
            "{:>3} {:>8} {:>14.6e} {:>14.6e} {:>14.6e} {:>14}",
            m,
            clusters,
            ns,
            sn,
            result.certificate_at(m).value,
            ed
        ));
    }
    table.push(format!("scalar part {:.12e} ({:?})", result.scalar_part, result.scalar_source));
    if !result.truncation.rigorous {
        table.push("certificate: non-rigorous (beta >= beta_c)".into());
    }
    let mut o = Outcome::new("effham", json!({ "expansion": summary, "ed_errors": exact }), table);
    o.validity.push(("truncation".into(), result.truncation.rigorous));
    Ok(o.with_model(l.provenance))
}

fn logz(args: &ModelArgs, order: usize) -> Result<Outcome> {
    let l = load(args)?;
    let series = log_partition_function(&l.h, order, &l.config)?;
    let exact = ed_if_small(&l.h, args.ed_limit)?.map(|st| st.log_partition_function());
    let mut table = vec![
        format!("log Z (order {order}) = {:.12e}", series.value),
        format!("certificate {:.6e} (per site {:.6e}), rigorous={}", series.certificate.value, series.per_site_certificate.value, series.certificate.rigorous),
    ];
    if let Some(e) = exact {
        table.push(format!("exact log Z = {e:.12e}, error {:.6e}", (e - series.value).abs()));
    }
    let mut o = Outcome::new("logz", json!({ "series": series, "exact": exact }), table);
    o.validity.push(("log_z".into(), series.certificate.rigorous));
    Ok(o.with_model(l.provenance))
}

fn matrix_json(op: &SupportedOperator) -> Value {
    let m = op.matrix();
    let n = m.nrows();
    json!({
        "support": op.support(),
        "local_dim": op.local_dim(),
        "entries": (0..n).flat_map(|r| (0..n).map(move |c| [m[(r, c)].re, m[(r, c)].im])).collect::<Vec<_>>(),
    })
}

fn reduced(args: &ModelArgs, order: &OrderArgs, region: &str) -> Result<Outcome> {
    let l = load(args)?;
    let region = parse_region(region)?;
    let m0 = resolve_order(&l.h, &region, order)?;
    let rs = reduced_state(&l.h, &region, m0, &l.config)?;
    let exact = match ed_if_small(&l.h, args.ed_limit)? {
        Some(st) => Some(st.reduced(rs.state.support())?.add_scaled(&rs.state, -1.0)?.trace_norm()),
        None => None,
    };
    let eigs = rs.state.eigenvalues()?;
    let mut table = vec![
        format!("reduced state on {:?}, order {m0}", rs.state.support()),
        format!("spectrum [{}]", eigs.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(", ")),
        format!("trace-distance bound {:.6e} (Pinsker conversion of the operator-norm certificate)", rs.trace_distance_bound),
    ];
    if let Some(e) = exact {
        table.push(format!("exact trace distance {e:.6e}"));
    }
    let mut o = Outcome::new(
        "reduced",
        json!({
            "order": m0,
            "state": matrix_json(&rs.state),
            "spectrum": eigs,
            "trace_distance_bound": rs.trace_distance_bound,
            "conversion": "||rho - sigma||_1 <= min(2, 2 sqrt(beta delta))",
            "exact_trace_distance": exact,
        }),
        table,
    );
    o.validity.push(("trace_distance".into(), rs.expansion.truncation.rigorous));
    Ok(o.with_model(l.provenance))
}

fn observable(args: &ModelArgs, order: &OrderArgs, pauli: &str, support: &str, padding: usize) -> Result<Outcome> {
    let l = load(args)?;
    let support: Vec<usize> = support.split(',').map(|t| t.trim().parse()).collect::<std::result::Result<_, _>>()?;
    if support.len() != pauli.chars().count() {
        bail!("Pauli string '{pauli}' does not match support {support:?}");
    }
    let o = SupportedOperator::from_ordered(support, 2, pauli_string(pauli)?)?;
    let region = l.h.graph().ball(o.support(), padding);
    let m0 = resolve_order(&l.h, &region, order)?;
    let est = local_observable(&l.h, &o, m0, padding, &l.config)?;
    let exact = ed_if_small(&l.h, args.ed_limit)?.map(|st| st.expectation(&o)).transpose()?;
    let mut table = vec![format!("<{pauli}> on {:?} = {:.12e} +- {:.6e} (region {:?}, order {m0})", o.support(), est.value, est.error_bound, est.region)];
    if let Some(e) = exact {
        table.push(format!("exact {e:.12e}, error {:.6e}", (e - est.value).abs()));
    }
    let mut out = Outcome::new("observable", json!({ "order": m0, "estimate": est, "exact": exact }), table);
    out.validity.push(("error_bound".into(), est.error_bound.is_finite()));
    Ok(out.with_model(l.provenance))
}

fn entropy(args: &ModelArgs, order: &OrderArgs, region: &str) -> Result<Outcome> {
    let l = load(args)?;
    let region = parse_region(region)?;
    let m0 = resolve_order(&l.h, &region, order)?;
    let est = local_entropy(&l.h, &region, m0, &l.config)?;
    let exact = ed_if_small(&l.h, args.ed_limit)?.map(|st| st.entropy(&region)).transpose()?;
    let mut table = vec![format!("S({region:?}) = {:.12e} +- {:.6e} nats (order {m0})", est.value, est.error_bound)];
    if let Some(e) = exact {
        table.push(format!("exact {e:.12e}, error {:.6e}", (e - est.value).abs()));
    }
    let mut out = Outcome::new("entropy", json!({ "order": m0, "estimate": est, "exact": exact }), table);
    out.validity.push(("error_bound".into(), est.error_bound.is_finite()));
    Ok(out.with_model(l.provenance))
}

fn cmi(args: &ModelArgs, order: usize, a: &str, b: &str, c: &str) -> Result<Outcome> {
    let l = load(args)?;
    let (a, b, c) = (parse_region(a)?, parse_region(b)?, parse_region(c)?);
    let st = ed_if_small(&l.h, args.ed_limit)?;
    let series = cmi_expansion(&l.h, &a, &b, &c, order, &l.config, st.as_ref())?;
    let bound = markov_decay_for_regions(&l.h, &a, &c);
    let exact = st.as_ref().map(|s| s.cmi(&a, &b, &c)).transpose()?;
    let recovery = exact.map(|x| fawzi_renner_recovery_error(x.max(0.0))).transpose()?;
    let mut table = vec![
        format!("A={a:?} B={b:?} C={c:?} order {order}"),
        format!("{:>3} {:>8} {:>14} {:>14}", "m", "clusters", "|sum|", "sum|K_w|"),
    ];
    for o in &series.per_order {
        table.push(format!("{:>3} {:>8} {:>14.6e} {:>14.6e}", o.order, o.clusters, o.norm_of_sum, o.sum_of_norms));
    }
    table.push(format!("series norm {:.6e}, tail certificate {:.6e}", series.operator_norm, series.truncation.value));
    if let Some(t) = series.trace_estimate {
        table.push(format!("tr(rho K) = {t:.6e}"));
    }
    table.push(bound_row(&bound));
    if let (Some(e), Some(r)) = (exact, recovery) {
        table.push(format!("exact I(A:C|B) = {e:.6e}, recovery error {r:.6e}"));
    }
    let mut o = Outcome::new(
        "cmi",
        json!({ "series": series.summary(), "bound": bound, "exact": exact, "recovery_error": recovery }),
        table,
    );
    o.validity.push(("series".into(), series.truncation.rigorous));
    o.validity.push((bound.name.clone(), bound.valid));
    Ok(o.with_model(l.provenance))
}

fn report_outcome(b: BoundReport) -> Outcome {
    let table = vec![bound_row(&b)];
    let validity = vec![(b.name.clone(), b.valid)];
    let mut o = Outcome::new("bound", serde_json::to_value(&b).expect("bound reports serialize"), table);
    o.validity = validity;
    o
}

fn bound(which: &BoundCommand) -> Result<Outcome> {
    Ok(match which {
        BoundCommand::Critical { k } => {
            if *k == 0 {
                bail!("k must be at least 1");
            }
            let v = critical_beta(*k);
            Outcome::new("bound", json!({ "name": "critical-beta", "k": k, "value": v }), vec![format!("beta_c(k={k}) = {v:.6e}")])
        }
        BoundCommand::Markov { minsurf, beta, beta_c, k, d_ac, r } => {
            report_outcome(markov_decay_bound(*minsurf, *beta, beta_c.unwrap_or_else(|| critical_beta(*k)), *d_ac, *r))
        }
        BoundCommand::PowerLaw { min_ac, beta, k, alpha, d_ac } => report_outcome(power_law_decay_bound(*min_ac, *beta, *k, *alpha, *d_ac)),
        BoundCommand::Recovery { cmi } => {
            let v = fawzi_renner_recovery_error(*cmi)?;
            Outcome::new("bound", json!({ "name": "recovery", "cmi": cmi, "value": v }), vec![format!("recovery error {v:.6e}")])
        }
        BoundCommand::Surface { model, region, l } => {
            let m = load(model)?;
            let s = surface_region(m.h.graph(), &parse_region(region)?, *l);
            Outcome::new("bound", json!({ "name": "surface", "l": l, "surface": s }), vec![format!("surface {s:?}")]).with_model(m.provenance)
        }
        BoundCommand::TailSum { model, m, l0 } => {
            let md = load(model)?;
            let t = tail_sum_check(&md.h, *m, *l0);
            let row = format!("tail sum {:.6e} <= {:.6e}: {} valid={}", t.measured, t.bound, t.holds(), t.valid);
            let mut o = Outcome::new("bound", serde_json::to_value(&t)?, vec![row]);
            o.validity.push(("tail-sum".into(), t.valid));
            o.ok = t.holds() || !t.valid;
            o.with_model(md.provenance)
        }
        BoundCommand::Saturation { model, a, slices } => {
            let md = load(model)?;
            let rows = area_law_saturation_series(&md.h, &parse_region(a)?, &parse_regions(slices)?, model.ed_limit)?;
            let mut table = vec![format!("{:>3} {:>14} {:>14} {:>6}", "l", "increment", "bound", "valid")];
            for r in &rows {
                table.push(format!("{:>3} {:>14.6e} {:>14.6e} {:>6}", r.slice, r.increment, r.bound.value, r.bound.valid));
            }
            let mut o = Outcome::new("bound", serde_json::to_value(&rows)?, table);
            o.validity = rows.iter().map(|r| (format!("slice-{}", r.slice), r.bound.valid)).collect();
            o.with_model(md.provenance)
        }
    })
}

fn verify(suite: &str, seed: u64, instances: usize, ed_limit: usize, fd_step: f64) -> Result<Outcome> {
    let suites: Vec<Suite> = if suite == "all" { Suite::ALL.to_vec() } else { vec![suite.parse()?] };
    let cfg = VerifyConfig { seed, instances, ed_limit, derivative: DerivativeOptions { fd_step, ..DerivativeOptions::default() } };
    let reports: Vec<SuiteReport> = suites.iter().map(|&s| run_suite(s, &cfg)).collect::<qmarkov::Result<_>>()?;
    let mut table = vec![format!("{:<14} {:>8} {:>8} {:>6}", "suite", "checks", "passed", "ok")];
    for r in &reports {
        table.push(format!("{:<14} {:>8} {:>8} {:>6}", r.suite.name(), r.checks, r.passed, r.ok));
        for f in &r.failures {
            table.push(format!("  FAIL {} [{}] {}", f.check, f.instance, f.case));
        }
    }
    let ok = reports.iter().all(|r| r.ok);
    let mut o = Outcome::new("verify", serde_json::to_value(&reports)?, table);
    o.seed = Some(seed);
    o.ok = ok;
    o.validity = reports.iter().map(|r| (r.suite.name().to_string(), r.ok)).collect();
    Ok(o)
}
