//! Reference values computed independently of the library: brute-force cluster
//! enumeration, closed forms and exact diagonalization.

use std::collections::BTreeSet;
use std::f64::consts::{E, FRAC_1_SQRT_2, LN_2};

use itertools::Itertools;
use qmarkov::bounds::{critical_beta, tail_sum_check};
use qmarkov::cluster::{
    clusters_connected_to, connected_clusters, count_bound_check, connected_clusters_within, linking_clusters, Cluster,
};
use qmarkov::ed::{exact_gibbs, state_cmi};
use qmarkov::ensembles::{random_local, random_power_law_chain, tfim_chain};
use qmarkov::expansion::{
    cmi_expansion, effective_hamiltonian, local_entropy, local_observable, reduced_state, truncation_certificate,
    ExpansionConfig,
};
use qmarkov::operator::{kron, pauli, pauli_string, spectral_map, Matrix, C64};
use qmarkov::{Hamiltonian, InteractionClass, SpinGraph, SupportedOperator};

fn op(support: &[usize], p: &str, c: f64) -> SupportedOperator {
    SupportedOperator::new(support.to_vec(), 2, pauli_string(p).unwrap().scale(c)).unwrap()
}

/// Connectivity by breadth-first search over intersecting supports.
fn brute_connected(h: &Hamiltonian, w: &[usize]) -> bool {
    let mut seen = vec![false; w.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..w.len() {
            let meets = h.term(w[i]).support().iter().any(|v| h.term(w[j]).support().contains(v));
            if !seen[j] && meets {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Def: no split `w = w1 ⊔ w2` with `w2` disjoint from both the region and `w1`.
/// Equivalently every term is reachable from the region through overlapping supports.
fn anchor_connected(h: &Hamiltonian, w: &[usize], region: &[usize]) -> bool {
    let mut seen: Vec<bool> = w.iter().map(|&t| touches(h, &[t], region)).collect();
    let mut stack: Vec<usize> = (0..w.len()).filter(|&i| seen[i]).collect();
    while let Some(i) = stack.pop() {
        for j in 0..w.len() {
            let meets = h.term(w[i]).support().iter().any(|v| h.term(w[j]).support().contains(v));
            if !seen[j] && meets {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn touches(h: &Hamiltonian, w: &[usize], region: &[usize]) -> bool {
    w.iter().any(|&t| h.term(t).support().iter().any(|v| region.contains(v)))
}

fn brute<F: Fn(&[usize]) -> bool>(h: &Hamiltonian, m: usize, keep: F) -> BTreeSet<Vec<usize>> {
    (0..h.terms().len()).combinations_with_replacement(m).filter(|w| brute_connected(h, w) && keep(w)).collect()
}

fn as_set(it: impl Iterator<Item = Cluster>) -> BTreeSet<Vec<usize>> {
    let v: Vec<Vec<usize>> = it.map(|w| w.terms().to_vec()).collect();
    let set: BTreeSet<_> = v.iter().cloned().collect();
    assert_eq!(set.len(), v.len(), "enumeration produced duplicates");
    set
}

#[test]
fn path_anchor_counts() {
    let g = SpinGraph::chain(3, 2).unwrap();
    let h = Hamiltonian::new(g, vec![op(&[0, 1], "ZZ", 0.5), op(&[1, 2], "XX", 0.5)], InteractionClass::FiniteRange(1), 1.0)
        .unwrap();
    let counts: Vec<usize> = (1..=2).map(|m| clusters_connected_to(&h, &[0], m).count()).collect();
    assert_eq!(counts, vec![1, 2]);
}

#[test]
fn empty_hamiltonian_has_no_clusters() {
    let h = Hamiltonian::new(SpinGraph::chain(3, 2).unwrap(), vec![], InteractionClass::FiniteRange(1), 1.0).unwrap();
    for m in 1..=3 {
        assert_eq!(connected_clusters(&h, m).count(), 0);
    }
}

#[test]
fn grid_enumeration_matches_brute_force() {
    let h = random_local(SpinGraph::grid(3, 3, 2).unwrap(), 1, true, 1.0).unwrap();
    let region = [0, 1, 3];
    let (a, c) = ([0], [8]);
    for m in 1..=3 {
        assert_eq!(as_set(connected_clusters(&h, m)), brute(&h, m, |_| true), "m={m}");
        let anchored: BTreeSet<Vec<usize>> = (0..h.terms().len())
            .combinations_with_replacement(m)
            .filter(|w| anchor_connected(&h, w, &region))
            .collect();
        assert_eq!(as_set(clusters_connected_to(&h, &region, m)), anchored);
        let inside = brute(&h, m, |w| w.iter().all(|&t| h.term(t).support().iter().all(|v| region.contains(v))));
        assert_eq!(as_set(connected_clusters_within(&h, &region, m)), inside);
        let linking = brute(&h, m, |w| touches(&h, w, &a) && touches(&h, w, &c));
        assert_eq!(as_set(linking_clusters(&h, &a, &c, m)), linking);
    }
    // corner to corner is four bonds apart
    assert_eq!(linking_clusters(&h, &a, &c, 3).count(), 0);
}

#[test]
fn grid_center_anchor_at_order_three() {
    let h = random_local(SpinGraph::grid(3, 3, 2).unwrap(), 5, true, 1.0).unwrap();
    let anchored: BTreeSet<Vec<usize>> =
        (0..h.terms().len()).combinations_with_replacement(3).filter(|w| anchor_connected(&h, w, &[4])).collect();
    assert_eq!(as_set(clusters_connected_to(&h, &[4], 3)), anchored);
}

#[test]
fn six_chain_end_to_end_linking_at_order_five() {
    let h = tfim_chain(6, 0.3, 0.4, 1.0).unwrap();
    let got = as_set(linking_clusters(&h, &[0], &[5], 5));
    assert_eq!(got, brute(&h, 5, |w| touches(&h, w, &[0]) && touches(&h, w, &[5])));
    // five bonds, each used once
    assert_eq!(got.len(), 1);
    assert!(linking_clusters(&h, &[0], &[5], 4).next().is_none());
}

#[test]
fn count_bound_examples() {
    let h = tfim_chain(4, 0.3, 0.4, 1.0).unwrap();
    let check = count_bound_check(&h, &[0, 1], 2);
    let measured = brute(&h, 2, |w| touches(&h, w, &[0, 1])).len() as u64;
    assert_eq!(check.measured, measured);
    // k = 2, d_G = 2, r = 1
    assert_eq!(check.bound, 2.0 * (3.0 * 4.0 * 4.0f64).powi(2));
    assert!(check.holds());

    let g = random_local(SpinGraph::grid(3, 3, 2).unwrap(), 2, true, 1.0).unwrap();
    let row = [3, 4, 5];
    let check = count_bound_check(&g, &row, 3);
    assert_eq!(check.measured, brute(&g, 3, |w| touches(&g, w, &row)).len() as u64);
    assert!(check.holds());
}

#[test]
fn chain_linking_matches_brute_force_at_order_four() {
    let h = tfim_chain(6, 0.3, 0.4, 1.0).unwrap();
    let (a, c) = ([0, 1], [4]);
    let got = as_set(linking_clusters(&h, &a, &c, 4));
    assert_eq!(got, brute(&h, 4, |w| touches(&h, w, &a) && touches(&h, w, &c)));
    assert!(!got.is_empty());
}

#[test]
fn overlap_counts_sum_is_even_so_pattern_2_1_2_2_4_cannot_occur() {
    // N_{X|w} counts the other elements meeting X, so Σ_s N_{X_s|w} counts every
    // intersecting pair twice.
    assert_eq!([2, 1, 2, 2, 4].iter().sum::<usize>() % 2, 1);
    let h = random_local(SpinGraph::grid(2, 3, 2).unwrap(), 4, true, 1.0).unwrap();
    for m in 1..=5 {
        for w in connected_clusters(&h, m).take(2000) {
            let n = w.overlap_counts(&h);
            assert_eq!(n.iter().sum::<usize>() % 2, 0, "{w:?}");
        }
    }
}

#[test]
fn multiplicity_counts_distinct_orderings() {
    for terms in [vec![0, 0, 1], vec![0, 1, 2], vec![2, 2, 2, 5], vec![1, 1, 3, 3]] {
        let w = Cluster::new(terms.clone());
        let distinct: BTreeSet<Vec<usize>> = terms.iter().copied().permutations(terms.len()).collect();
        assert_eq!(w.multiplicity() as usize, distinct.len());
    }
}

#[test]
fn certificate_arithmetic_examples() {
    // 4×2 ladder, L = left column: every vertex of L borders L^c, |∂L_1| = 4
    let h = random_local(SpinGraph::grid(4, 2, 2).unwrap(), 2, true, 1.0).unwrap();
    let bc = critical_beta(2);
    let h = h.with_beta(bc / 2.0).unwrap();
    let c = truncation_certificate(&h, &[0, 2, 4, 6], 1).unwrap();
    assert!((c - E / bc).abs() < 1e-12 * c);
    // chain, L = {2, 3}, β = 1e-3, m₀ = 2, |∂L_1| = 2
    let h = tfim_chain(6, 0.3, 0.4, 1e-3).unwrap();
    let x: f64 = 1e-3 / bc;
    let expected = E / (4.0 * 1e-3) * x.powi(3) / (1.0 - x) * 2.0;
    assert!((truncation_certificate(&h, &[2, 3], 2).unwrap() - expected).abs() < 1e-12 * expected);
    let tail: Vec<f64> = (0..40).map(|m| truncation_certificate(&h, &[2, 3], m).unwrap()).collect();
    assert!(tail.windows(2).all(|p| p[1] < p[0]) && tail[39] < 1e-15);
}

#[test]
fn zero_hamiltonian_gives_scalar_effective_hamiltonian() {
    let h = Hamiltonian::new(SpinGraph::chain(4, 2).unwrap(), vec![], InteractionClass::FiniteRange(1), 0.5).unwrap();
    let r = effective_hamiltonian(&h, &[1], 3, &ExpansionConfig::default()).unwrap();
    assert!((r.scalar_part + 3.0 * LN_2 / 0.5).abs() < 1e-12);
    assert!(r.boundary_terms.iter().all(Vec::is_empty));
}

#[test]
fn single_coupling_converges_within_certificate() {
    let bc = critical_beta(2);
    let g = SpinGraph::chain(2, 2).unwrap();
    let terms = vec![
        SupportedOperator::new(vec![0, 1], 2, pauli_string("XZ").unwrap().scale(0.5) + pauli_string("YY").unwrap().scale(0.5))
            .unwrap(),
    ];
    let h = Hamiltonian::new(g, terms, InteractionClass::FiniteRange(1), bc / 2.0).unwrap();
    // ED oracle: −β⁻¹ log tr₁ e^{−βh} on site 0
    let full = h.full().unwrap();
    let rho = full.expm_hermitian(-h.beta()).unwrap();
    let exact = rho.partial_trace(&[0]).unwrap().logm_posdef().unwrap().scale(-1.0 / h.beta());
    let r = effective_hamiltonian(&h, &[0], 3, &ExpansionConfig::default()).unwrap();
    for m0 in 0..=3 {
        let err = exact.add_scaled(&r.phi_at(m0).unwrap(), -1.0).unwrap().op_norm();
        assert!(err <= r.certificate_at(m0).value, "m0={m0}: {err} > {}", r.certificate_at(m0).value);
    }
}

#[test]
fn effective_hamiltonian_of_whole_system_is_h() {
    let h = random_local(SpinGraph::chain(4, 2).unwrap(), 9, true, 0.7).unwrap();
    let st = exact_gibbs(&h, 12).unwrap();
    let all = h.graph().vertices();
    let diff = st.effective_hamiltonian(&all).unwrap().add_scaled(&h.full().unwrap(), -1.0).unwrap();
    assert!(diff.op_norm() < 1e-10);
}

#[test]
fn ghz_state_has_one_bit_of_cmi() {
    // (|000⟩ + |111⟩)/√2: S(AB) = S(BC) = S(B) = ln 2, S(ABC) = 0
    let mut psi = Matrix::zeros(8, 1);
    psi[(0, 0)] = C64::new(FRAC_1_SQRT_2, 0.0);
    psi[(7, 0)] = C64::new(FRAC_1_SQRT_2, 0.0);
    let rho = SupportedOperator::new(vec![0, 1, 2], 2, &psi * psi.adjoint()).unwrap();
    assert!((state_cmi(&rho, &[0], &[1], &[2]).unwrap() - LN_2).abs() < 1e-12);
    assert!((state_cmi(&rho, &[0], &[], &[2]).unwrap() - LN_2).abs() < 1e-12);
}

#[test]
fn classical_ghz_mixture_is_markov() {
    // −½(Z₀Z₁ + Z₁Z₂) at large β is (|000⟩⟨000| + |111⟩⟨111|)/2 up to e^{−β}:
    // conditioning on the middle spin removes the correlation
    let g = SpinGraph::chain(3, 2).unwrap();
    let h = Hamiltonian::new(g, vec![op(&[0, 1], "ZZ", -0.5), op(&[1, 2], "ZZ", -0.5)], InteractionClass::FiniteRange(1), 60.0)
        .unwrap();
    let st = exact_gibbs(&h, 12).unwrap();
    assert!(st.cmi(&[0], &[1], &[2]).unwrap().abs() < 1e-10);
    assert!((st.mutual_information(&[0], &[2]).unwrap() - LN_2).abs() < 1e-10);
}

#[test]
fn product_hamiltonian_reduced_state_is_product_of_gibbs_factors() {
    let g = SpinGraph::chain(3, 2).unwrap();
    let fields = [("X", 0.4), ("Z", -0.7), ("Y", 0.9)];
    let terms = fields.iter().enumerate().map(|(v, (p, c))| op(&[v], p, *c)).collect();
    let beta = 0.8;
    let h = Hamiltonian::new(g, terms, InteractionClass::FiniteRange(1), beta).unwrap();
    let rs = reduced_state(&h, &[0, 1], 2, &ExpansionConfig::default()).unwrap();
    let factor = |p: &str, c: f64| {
        let m = spectral_map(&pauli(p.chars().next().unwrap()).unwrap().scale(c), |x| (-beta * x).exp());
        let z = m.trace();
        m.unscale(z.re)
    };
    let expected = kron(&factor("X", 0.4), &factor("Z", -0.7));
    assert!((rs.state.matrix() - expected).norm() < 1e-12);
}

#[test]
fn single_site_closed_forms() {
    // h = 0.6 Z on one site of a two-site model without couplings
    let g = SpinGraph::chain(2, 2).unwrap();
    let beta = 0.9;
    let h = Hamiltonian::new(g, vec![op(&[0], "Z", 0.6)], InteractionClass::FiniteRange(1), beta).unwrap();
    let cfg = ExpansionConfig::default();
    let z = op(&[0], "Z", 1.0);
    let got = local_observable(&h, &z, 2, 0, &cfg).unwrap().value;
    assert!((got + (beta * 0.6).tanh()).abs() < 1e-12);
    let id = SupportedOperator::identity(vec![0], 2);
    assert!((local_observable(&h, &id, 2, 1, &cfg).unwrap().value - 1.0).abs() < 1e-12);
    let p = (-beta * 0.6f64).exp() / (2.0 * (beta * 0.6f64).cosh());
    let binary = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
    assert!((local_entropy(&h, &[0], 2, &cfg).unwrap().value - binary).abs() < 1e-12);
    let empty = Hamiltonian::new(SpinGraph::chain(3, 2).unwrap(), vec![], InteractionClass::FiniteRange(1), 1.0).unwrap();
    assert!((local_entropy(&empty, &[0, 2], 1, &cfg).unwrap().value - 2.0 * LN_2).abs() < 1e-12);
}

#[test]
fn cmi_series_on_four_site_chain_brackets_exact_value() {
    let h = random_local(SpinGraph::chain(4, 2).unwrap(), 12, false, 1.0).unwrap();
    let bc = critical_beta(h.k());
    let h = h.with_beta(bc / 4.0).unwrap();
    let st = exact_gibbs(&h, 12).unwrap();
    let (a, b, c) = ([0], [1, 2], [3]);
    let r = cmi_expansion(&h, &a, &b, &c, 3, &ExpansionConfig::default(), Some(&st)).unwrap();
    let exact = st.cmi(&a, &b, &c).unwrap();
    assert_eq!(r.per_order.iter().map(|o| o.clusters).collect::<Vec<_>>()[..2], [0, 0]);
    assert!(r.per_order[2].clusters > 0);
    let estimate = r.trace_estimate.unwrap();
    assert!((estimate - exact).abs() <= r.truncation.value, "{estimate} vs {exact}");
    // exchange symmetry of I(A:C|B)
    let swapped = cmi_expansion(&h, &c, &b, &a, 3, &ExpansionConfig::default(), Some(&st)).unwrap();
    assert!((swapped.trace_estimate.unwrap() - estimate).abs() < 1e-10);
    // per-order sums against e·minsurf·(β/β_c)^m
    for o in &r.per_order {
        assert!(o.sum_of_norms <= E * 0.25f64.powi(o.order as i32));
    }
}

#[test]
fn cmi_is_zero_below_linking_order() {
    let h = random_local(SpinGraph::chain(6, 2).unwrap(), 3, true, 1e-3).unwrap();
    let r = cmi_expansion(&h, &[0], &[1, 2, 3], &[4, 5], 3, &ExpansionConfig::default(), None).unwrap();
    assert_eq!(r.operator_norm, 0.0);
}

#[test]
fn power_law_tail_sum_by_double_loop() {
    let h = random_power_law_chain(8, 2.0, 5, 1.0).unwrap();
    // g̃_l recomputed from the terms: on a chain the diameter is max − min
    let mut g = vec![0.0; 8];
    for v in 0..8 {
        let mut per_l = vec![0.0; 8];
        for t in h.terms().iter().filter(|t| t.support().contains(&v)) {
            let s = t.support();
            per_l[s[s.len() - 1] - s[0]] += t.norm;
        }
        for l in 0..8 {
            g[l] = f64::max(g[l], per_l[l]);
        }
    }
    let mut measured = 0.0;
    for l1 in 1..8 {
        for l2 in 1..8 {
            if l1 + l2 >= 5 {
                measured += g[l1] * g[l2];
            }
        }
    }
    let report = tail_sum_check(&h, 2, 5);
    assert!((report.measured - measured).abs() < 1e-12);
    assert_eq!(report.bound, 121.0 / 25.0);
    assert!(report.valid && report.holds());
    // single-order tail stays under l₀^{-α}
    let one = tail_sum_check(&h, 1, 4);
    assert!(one.measured <= 4f64.powi(-2) * (1.0 + 1e-12));
}

#[test]
fn finite_range_tail_sum_vanishes_beyond_reach() {
    let h = tfim_chain(6, 0.3, 0.4, 1.0).unwrap();
    let r = tail_sum_check(&h, 2, 3);
    assert_eq!(r.measured, 0.0);
    assert!(!r.valid);
}
