//! Clusters (multisets of interaction terms) and their enumeration.
//!
//! Enumeration grows connected sets of distinct terms with the ESU algorithm on the
//! term-overlap graph, optionally extended by a virtual anchor node standing for a
//! region `L`, and then distributes the order `m` over the chosen terms as positive
//! multiplicities. The output order is deterministic but not lexicographic.

use serde::Serialize;

use crate::spin_model::Hamiltonian;

/// A multiset of term indices, stored sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Cluster {
    terms: Vec<usize>,
}

impl Cluster {
    pub fn new(mut terms: Vec<usize>) -> Self {
        terms.sort_unstable();
        Self { terms }
    }

    /// Term indices with repetition, ascending.
    pub fn terms(&self) -> &[usize] {
        &self.terms
    }

    /// `|w|`.
    pub fn order(&self) -> usize {
        self.terms.len()
    }

    /// Distinct terms with their multiplicities.
    pub fn distinct(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &t in &self.terms {
            match out.last_mut() {
                Some((last, mult)) if *last == t => *mult += 1,
                _ => out.push((t, 1)),
            }
        }
        out
    }

    /// `n_w = m! / Π_j μ_j!`, the number of distinct orderings.
    pub fn multiplicity(&self) -> u64 {
        let mut n = factorial(self.order());
        for (_, mult) in self.distinct() {
            n /= factorial(mult);
        }
        n
    }

    /// `V_w`, the union of supports, ascending.
    pub fn vertices(&self, h: &Hamiltonian) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms.iter().flat_map(|&t| h.term(t).support().iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Whether `V_w` meets `region`.
    pub fn touches(&self, h: &Hamiltonian, region: &[usize]) -> bool {
        self.terms.iter().any(|&t| h.term(t).support().iter().any(|v| region.contains(v)))
    }

    /// Connectivity of the overlap graph on the elements of `w`.
    pub fn is_connected(&self, h: &Hamiltonian) -> bool {
        let distinct: Vec<usize> = self.distinct().into_iter().map(|(t, _)| t).collect();
        if distinct.is_empty() {
            return false;
        }
        let mut seen = vec![false; distinct.len()];
        seen[0] = true;
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            for j in 0..distinct.len() {
                if !seen[j] && overlaps(h, distinct[i], distinct[j]) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// `N_{X_s|w}` for every element in storage order: the number of other elements
    /// of the multiset (repeated copies included) whose support meets `X_s`.
    pub fn overlap_counts(&self, h: &Hamiltonian) -> Vec<usize> {
        (0..self.terms.len())
            .map(|s| (0..self.terms.len()).filter(|&t| t != s && overlaps(h, self.terms[s], self.terms[t])).count())
            .collect()
    }
}

pub(crate) fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

fn overlaps(h: &Hamiltonian, a: usize, b: usize) -> bool {
    let (x, y) = (h.term(a).support(), h.term(b).support());
    x.iter().any(|v| y.contains(v))
}

/// Term-overlap graph: `i ~ j` when the supports of terms `i` and `j` intersect.
pub fn overlap_graph(h: &Hamiltonian) -> Vec<Vec<usize>> {
    let n = h.terms().len();
    (0..n).map(|i| (0..n).filter(|&j| j != i && overlaps(h, i, j)).collect()).collect()
}

type Admit<'a> = Box<dyn Fn(&[usize]) -> bool + 'a>;

struct Frame {
    sub: Vec<usize>,
    ext: Vec<usize>,
}

/// ESU enumeration of connected vertex subsets of size `≤ max_size` that contain one
/// of `roots` as their smallest element. `admit` may reject a subset, which also
/// discards every subset grown from it.
struct Esu<'a> {
    adj: Vec<Vec<usize>>,
    roots: Vec<usize>,
    next_root: usize,
    max_size: usize,
    stack: Vec<Frame>,
    admit: Admit<'a>,
}

impl<'a> Esu<'a> {
    fn new(adj: Vec<Vec<usize>>, roots: Vec<usize>, max_size: usize, admit: Admit<'a>) -> Self {
        Self { adj, roots, next_root: 0, max_size, stack: Vec::new(), admit }
    }
}

impl Iterator for Esu<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        loop {
            if let Some(frame) = self.stack.last_mut() {
                if frame.sub.len() >= self.max_size || frame.ext.is_empty() {
                    self.stack.pop();
                    continue;
                }
                let w = frame.ext.pop().expect("checked non-empty");
                let root = frame.sub[0];
                let sub = &frame.sub;
                let mut ext = frame.ext.clone();
                for &u in &self.adj[w] {
                    let excluded = u <= root
                        || sub.contains(&u)
                        || ext.contains(&u)
                        || sub.iter().any(|&s| self.adj[s].contains(&u));
                    if !excluded {
                        ext.push(u);
                    }
                }
                let mut grown = sub.clone();
                grown.push(w);
                if !(self.admit)(&grown) {
                    continue;
                }
                self.stack.push(Frame { sub: grown.clone(), ext });
                return Some(grown);
            }
            let root = *self.roots.get(self.next_root)?;
            self.next_root += 1;
            let start = vec![root];
            if !(self.admit)(&start) {
                continue;
            }
            let ext = self.adj[root].iter().copied().filter(|&u| u > root).collect();
            self.stack.push(Frame { sub: start.clone(), ext });
            return Some(start);
        }
    }
}

/// All ways to write `m` as an ordered sum of `parts` positive integers, in
/// lexicographic order.
pub fn compositions(m: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(m);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 1..=m - (parts - 1) {
            prefix.push(first);
            rec(m - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts >= 1 && parts <= m {
        rec(m, parts, &mut Vec::new(), &mut out);
    }
    out
}

fn expand_multiplicities(distinct: Vec<usize>, m: usize) -> impl Iterator<Item = Cluster> {
    compositions(m, distinct.len()).into_iter().map(move |mult| {
        let terms = distinct.iter().zip(&mult).flat_map(|(&t, &k)| std::iter::repeat_n(t, k)).collect();
        Cluster::new(terms)
    })
}

fn support_union(h: &Hamiltonian, terms: &[usize]) -> Vec<usize> {
    Cluster::new(terms.to_vec()).vertices(h)
}

fn is_connected_set(h: &Hamiltonian, terms: &[usize]) -> bool {
    Cluster::new(terms.to_vec()).is_connected(h)
}

/// Connected clusters of order `m` (every term may appear).
pub fn connected_clusters(h: &Hamiltonian, m: usize) -> Box<dyn Iterator<Item = Cluster> + '_> {
    let all: Vec<usize> = (0..h.terms().len()).collect();
    restricted_connected(h, all, m)
}

/// Connected clusters of order `m` with `V_w ⊆ region`.
pub fn connected_clusters_within<'a>(h: &'a Hamiltonian, region: &[usize], m: usize) -> Box<dyn Iterator<Item = Cluster> + 'a> {
    restricted_connected(h, h.terms_within(region), m)
}

fn restricted_connected(h: &Hamiltonian, allowed: Vec<usize>, m: usize) -> Box<dyn Iterator<Item = Cluster> + '_> {
    if m == 0 {
        return Box::new(std::iter::empty());
    }
    let full = overlap_graph(h);
    let local: Vec<Vec<usize>> = allowed
        .iter()
        .map(|&t| full[t].iter().filter_map(|u| allowed.iter().position(|a| a == u)).collect())
        .collect();
    let roots = (0..allowed.len()).collect();
    let esu = Esu::new(local, roots, m, Box::new(|_| true));
    Box::new(esu.flat_map(move |set| {
        let terms = set.iter().map(|&i| allowed[i]).collect();
        expand_multiplicities(terms, m)
    }))
}

/// Anchor-rooted enumeration: node 0 stands for `anchor`, node `i + 1` for term `i`.
/// Yields distinct-term sets whose union with the anchor is connected.
fn anchored_sets<'a>(
    h: &'a Hamiltonian,
    anchor: &[usize],
    m: usize,
    prune_target: Option<Vec<usize>>,
) -> impl Iterator<Item = Vec<usize>> + 'a {
    let terms = h.terms().len();
    let base = overlap_graph(h);
    let mut adj = vec![Vec::new(); terms + 1];
    for i in 0..terms {
        if h.term(i).support().iter().any(|v| anchor.contains(v)) {
            adj[0].push(i + 1);
            adj[i + 1].push(0);
        }
        adj[i + 1].extend(base[i].iter().map(|&j| j + 1));
    }
    let anchor_vec = anchor.to_vec();
    let range = h.range();
    let admit: Admit<'a> = match prune_target {
        None => Box::new(|_| true),
        Some(target) => Box::new(move |set: &[usize]| {
            let chosen: Vec<usize> = set.iter().filter(|&&n| n > 0).map(|&n| n - 1).collect();
            let mut reach = support_union(h, &chosen);
            reach.extend_from_slice(&anchor_vec);
            let remaining = (m + 1).saturating_sub(set.len());
            let dist = h.graph().set_distance(&reach, &target);
            dist == 0 || (dist != crate::spin_model::UNREACHABLE && dist <= range * remaining)
        }),
    };
    let anchored = !anchor.is_empty();
    Esu::new(adj, if anchored { vec![0] } else { vec![] }, m + 1, admit)
        .filter(|set| set.len() > 1)
        .map(|set| set.iter().skip(1).map(|&n| n - 1).collect())
}

/// Clusters of order `m` connected to `region` (every element reaches `region`
/// through overlapping elements).
pub fn clusters_connected_to<'a>(h: &'a Hamiltonian, region: &[usize], m: usize) -> Box<dyn Iterator<Item = Cluster> + 'a> {
    if m == 0 {
        return Box::new(std::iter::empty());
    }
    Box::new(anchored_sets(h, region, m, None).flat_map(move |set| expand_multiplicities(set, m)))
}

/// Connected clusters of order `m` whose support meets both `a` and `c`.
pub fn linking_clusters<'a>(h: &'a Hamiltonian, a: &[usize], c: &[usize], m: usize) -> Box<dyn Iterator<Item = Cluster> + 'a> {
    if m == 0 || c.is_empty() {
        return Box::new(std::iter::empty());
    }
    let target = c.to_vec();
    let filter_target = target.clone();
    Box::new(
        anchored_sets(h, a, m, Some(target))
            .filter(move |set| {
                is_connected_set(h, set) && set.iter().any(|&t| h.term(t).support().iter().any(|v| filter_target.contains(v)))
            })
            .flat_map(move |set| expand_multiplicities(set, m)),
    )
}

/// Connected clusters of order `m` whose support meets `region`.
pub fn connected_clusters_touching<'a>(h: &'a Hamiltonian, region: &[usize], m: usize) -> Box<dyn Iterator<Item = Cluster> + 'a> {
    linking_clusters(h, region, region, m)
}

/// Measured cluster count against the combinatorial bound `|L^c| (3·2^k·d_G^{rk})^m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountCheck {
    pub order: usize,
    pub measured: u64,
    pub bound: f64,
}

impl CountCheck {
    pub fn holds(&self) -> bool {
        (self.measured as f64) <= self.bound
    }
}

/// Counts connected order-`m` clusters touching `complement` (those inside it plus
/// those linking it to its complement) and compares with the counting bound.
pub fn count_bound_check(h: &Hamiltonian, complement: &[usize], m: usize) -> CountCheck {
    let measured = connected_clusters_touching(h, complement, m).count() as u64;
    let k = h.k() as i32;
    let per_order = 3.0 * 2f64.powi(k) * (h.graph().max_degree() as f64).powi(h.range() as i32 * k);
    CountCheck { order: m, measured, bound: complement.len() as f64 * per_order.powi(m as i32) }
}
