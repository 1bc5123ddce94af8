use std::collections::BTreeSet;

use itertools::Itertools;
use proptest::prelude::*;
use qmarkov::bounds::{critical_beta, markov_decay_bound, surface_region};
use qmarkov::cluster::{clusters_connected_to, connected_clusters, linking_clusters, Cluster};
use qmarkov::derivative::{cluster_derivative, derivative_norm_bound};
use qmarkov::ed::exact_gibbs;
use qmarkov::ensembles::{random_hermitian, random_local, random_observable, rng};
use qmarkov::expansion::{cmi_cluster_operator, truncation_certificate};
use qmarkov::spin_model::{parse_model, to_model_json, NormalizationPolicy};
use qmarkov::{DerivativeOptions, Hamiltonian, SpinGraph, SupportedOperator};
use rand::seq::SliceRandom;

/// Connected graph on `n` vertices: a random spanning tree plus a few extra edges.
fn graph_strategy(max_n: usize) -> impl Strategy<Value = SpinGraph> {
    (2..=max_n)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|v| (0..v).boxed()).collect();
            (Just(n), parents, prop::collection::vec((0..n, 0..n), 0..3))
        })
        .prop_map(|(n, parents, extra)| {
            let mut edges: BTreeSet<(usize, usize)> = parents.into_iter().enumerate().map(|(i, p)| (p, i + 1)).collect();
            for (u, v) in extra {
                if u != v {
                    edges.insert((u.min(v), u.max(v)));
                }
            }
            let edges: Vec<_> = edges.into_iter().collect();
            SpinGraph::new(n, 2, &edges).unwrap()
        })
}

fn model_strategy(max_n: usize) -> impl Strategy<Value = Hamiltonian> {
    (graph_strategy(max_n), any::<u64>(), any::<bool>(), 0.05..2.0f64)
        .prop_map(|(g, seed, fields, beta)| random_local(g, seed, fields, beta).unwrap())
}

fn sub_region(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(0..n, 1..=n).prop_map(|s| s.into_iter().collect())
}

fn connected(h: &Hamiltonian, w: &[usize]) -> bool {
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

fn touches(h: &Hamiltonian, w: &[usize], region: &[usize]) -> bool {
    w.iter().any(|&t| h.term(t).support().iter().any(|v| region.contains(v)))
}

fn listed(it: impl Iterator<Item = Cluster>) -> BTreeSet<Vec<usize>> {
    it.map(|w| w.terms().to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn surface_is_inside_region_and_grows_with_l((h, region) in model_strategy(7).prop_flat_map(|h| {
        let n = h.num_vertices();
        (Just(h), sub_region(n))
    })) {
        let g = h.graph();
        let mut previous: Vec<usize> = Vec::new();
        for l in 0..5 {
            let s = surface_region(g, &region, l);
            prop_assert!(s.iter().all(|v| region.contains(v)));
            prop_assert!(previous.iter().all(|v| s.contains(v)));
            previous = s;
        }
        if region.len() == h.num_vertices() {
            prop_assert!(previous.is_empty());
        }
    }

    #[test]
    fn markov_bound_is_monotone(minsurf in 1usize..20, frac in 0.01..0.95f64, d in 1usize..12, r in 1usize..3, k in 1usize..5) {
        let bc = critical_beta(k);
        let b = markov_decay_bound(minsurf, frac * bc, bc, d, r);
        let farther = markov_decay_bound(minsurf, frac * bc, bc, d + 1, r);
        let hotter = markov_decay_bound(minsurf, frac * bc * 0.9, bc, d, r);
        prop_assert!(b.valid && farther.valid && hotter.valid);
        prop_assert!(farther.value <= b.value);
        prop_assert!(hotter.value <= b.value);
        prop_assert!(!markov_decay_bound(minsurf, bc, bc, d, r).valid);
    }

    #[test]
    fn certificate_decreases_with_order((h, region) in model_strategy(6).prop_flat_map(|h| {
        let n = h.num_vertices();
        (Just(h), sub_region(n))
    }), frac in 0.05..0.95f64) {
        let h = h.with_beta(frac * critical_beta(h.k())).unwrap();
        let mut previous = f64::INFINITY;
        for m0 in 0..6 {
            let c = truncation_certificate(&h, &region, m0).unwrap();
            prop_assert!(c >= 0.0 && c <= previous);
            previous = c;
        }
    }

    #[test]
    fn embed_then_partial_trace_scales_by_dimension(seed in any::<u64>(), extra in 1usize..3) {
        let mut r = rng(seed);
        let a = SupportedOperator::new(vec![1], 2, random_hermitian(&mut r, 2)).unwrap();
        let target: Vec<usize> = (0..=extra + 1).collect();
        let big = a.embed(&target).unwrap();
        prop_assert!((big.trace() - a.trace() * 2f64.powi(target.len() as i32 - 1)).norm() < 1e-12);
        let back = big.partial_trace(&[1]).unwrap();
        prop_assert!((back.matrix() - a.matrix().scale(2f64.powi(target.len() as i32 - 1))).norm() < 1e-12);
        prop_assert!((big.op_norm() - a.op_norm()).abs() < 1e-12);
    }

    #[test]
    fn model_json_roundtrips(h in model_strategy(6)) {
        let text = to_model_json(&h);
        let back = parse_model(&text, NormalizationPolicy::Strict).unwrap().hamiltonian;
        prop_assert_eq!(&back, &h);
        prop_assert_eq!(to_model_json(&back), text);
    }

    #[test]
    fn strong_subadditivity_and_correlation_bound(h in model_strategy(6), seed in any::<u64>()) {
        let n = h.num_vertices();
        let st = exact_gibbs(&h, 12).unwrap();
        let mut r = rng(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let (a, rest) = perm.split_at(1);
        let (c, b) = rest.split_at(1);
        let (mut a, mut b, mut c) = (a.to_vec(), b.to_vec(), c.to_vec());
        a.sort_unstable();
        b.sort_unstable();
        c.sort_unstable();
        prop_assert!(st.cmi(&a, &b, &c).unwrap() >= -1e-10);
        let oa = random_observable(&mut r, &a, 2);
        let oc = random_observable(&mut r, &c, 2);
        let (oa, oc) = (oa.scale(1.0 / oa.op_norm()), oc.scale(1.0 / oc.op_norm()));
        let cor = st.correlation(&oa, &oc).unwrap();
        prop_assert!(cor * cor <= 2.0 * st.mutual_information(&a, &c).unwrap() + 1e-9);
    }

    #[test]
    fn multiplicities_count_all_sequences(terms in 1usize..6, m in 1usize..5) {
        let total: u64 = (0..terms).combinations_with_replacement(m).map(|w| Cluster::new(w).multiplicity()).sum();
        prop_assert_eq!(total, (terms as u64).pow(m as u32));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn enumeration_matches_brute_force((h, a, c) in model_strategy(5).prop_flat_map(|h| {
        let n = h.num_vertices();
        (Just(h), 0..n, 0..n)
    })) {
        prop_assume!(a != c);
        for m in 1..=3 {
            let all: Vec<Vec<usize>> = (0..h.terms().len())
                .combinations_with_replacement(m)
                .filter(|w| connected(&h, w))
                .collect();
            let got = listed(connected_clusters(&h, m));
            prop_assert_eq!(&got, &all.iter().cloned().collect::<BTreeSet<_>>());
            let linking: BTreeSet<_> =
                all.iter().filter(|w| touches(&h, w, &[a]) && touches(&h, w, &[c])).cloned().collect();
            prop_assert_eq!(listed(linking_clusters(&h, &[a], &[c], m)), linking);
            // every cluster attached to a region touches it
            for w in clusters_connected_to(&h, &[a], m) {
                prop_assert!(w.touches(&h, &[a]));
            }
        }
    }

    #[test]
    fn connected_derivatives_obey_norm_bound((h, region) in model_strategy(4).prop_flat_map(|h| {
        let n = h.num_vertices();
        (Just(h), sub_region(n))
    })) {
        let opts = DerivativeOptions::default();
        let n = h.num_vertices();
        let (a, c) = (vec![0], vec![n - 1]);
        let b: Vec<usize> = (1..n - 1).collect();
        for m in 2..=3 {
            for w in connected_clusters(&h, m).take(40) {
                let bound = derivative_norm_bound(&h, &w);
                let d = cluster_derivative(&h, &w, &region, &opts).unwrap();
                prop_assert!(d.op_norm() <= bound + 1e-9, "{:?}: {} > {}", w, d.op_norm(), bound);
                let k = cmi_cluster_operator(&h, &w, &a, &b, &c, &opts).unwrap();
                prop_assert!(k.op_norm() <= 4.0 * bound + 1e-9, "{:?}: {} > {}", w, k.op_norm(), 4.0 * bound);
            }
        }
    }
}
