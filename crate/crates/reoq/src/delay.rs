//! Delay-sequences: the precedence structure of flows inside one transition.
//!
//! A composed transition fires several data-flows, each with its own delay.
//! The flows are not simultaneous: a flow that reads from nodes another flow
//! delivers to must wait for it. This module extracts that precedence from
//! the tuples' node sets, keeps it canonically as a partial order
//! ([`DelayPoset`]), and renders it as a series-parallel expression
//! ([`DelaySeq`]) where possible. The poset is what the Markov-chain
//! translation consumes: its downward-closed subsets are exactly the partial
//! completions a transition can be in.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::guard::NodeName;
use crate::stoch::FlowTuple;

/// Errors raised when extracting precedence structure.
#[derive(Debug, Error, PartialEq)]
pub enum DelayError {
    /// The flows' read/deliver sets form a cycle: no firing order exists.
    #[error("cyclic flow dependency involving {0}")]
    CyclicDependency(String),
    /// A precedence pair names a tuple outside the poset's tuple set.
    #[error("precedence pair references tuple {0}, which is not in the set")]
    UnknownTuple(String),
}

/// A strict partial order over a set of flow tuples: `(before, after)` in
/// `precedence` means `before`'s flow must complete first. The relation is
/// kept transitively closed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayPoset {
    pub tuples: BTreeSet<FlowTuple>,
    pub precedence: BTreeSet<(FlowTuple, FlowTuple)>,
}

impl DelayPoset {
    /// Builds a poset from direct precedence pairs, taking the transitive
    /// closure and rejecting cycles.
    pub fn new(
        tuples: BTreeSet<FlowTuple>,
        pairs: impl IntoIterator<Item = (FlowTuple, FlowTuple)>,
    ) -> Result<Self, DelayError> {
        let mut precedence = BTreeSet::new();
        for (before, after) in pairs {
            for t in [&before, &after] {
                if !tuples.contains(t) {
                    return Err(DelayError::UnknownTuple(t.to_string()));
                }
            }
            precedence.insert((before, after));
        }
        // transitive closure by iteration; tuple sets are small
        loop {
            let mut added = false;
            let pairs: Vec<_> = precedence.iter().cloned().collect();
            for (a, b) in &pairs {
                for (c, d) in &pairs {
                    if b == c && precedence.insert((a.clone(), d.clone())) {
                        added = true;
                    }
                }
            }
            if !added {
                break;
            }
        }
        if let Some((t, _)) = precedence.iter().find(|(a, b)| a == b) {
            return Err(DelayError::CyclicDependency(t.to_string()));
        }
        Ok(DelayPoset { tuples, precedence })
    }

    /// True iff `before` must complete before `after`.
    pub fn precedes(&self, before: &FlowTuple, after: &FlowTuple) -> bool {
        self.precedence
            .contains(&(before.clone(), after.clone()))
    }

    /// The tuples that nothing precedes — the flows that can start first.
    pub fn minimal_elements(&self) -> BTreeSet<FlowTuple> {
        self.tuples
            .iter()
            .filter(|t| !self.precedence.iter().any(|(_, after)| after == *t))
            .cloned()
            .collect()
    }

    /// The strict predecessors of a tuple.
    pub fn predecessors(&self, t: &FlowTuple) -> BTreeSet<FlowTuple> {
        self.precedence
            .iter()
            .filter(|(_, after)| after == t)
            .map(|(before, _)| before.clone())
            .collect()
    }

    /// True iff the set is downward closed: it contains every predecessor
    /// of each of its members.
    pub fn is_downward_closed(&self, set: &BTreeSet<FlowTuple>) -> bool {
        set.iter()
            .all(|t| self.predecessors(t).is_subset(set))
    }

    /// All downward-closed subsets, from the empty set to the full set.
    /// These are precisely the partial completions of the transition.
    pub fn down_sets(&self) -> Vec<BTreeSet<FlowTuple>> {
        let mut out = vec![BTreeSet::new()];
        // grow down-sets one element at a time; each down-set is reached
        // once because sets are deduplicated
        let mut seen: BTreeSet<BTreeSet<FlowTuple>> = out.iter().cloned().collect();
        let mut frontier = out.clone();
        while let Some(current) = frontier.pop() {
            for t in self.tuples.iter() {
                if current.contains(t) || !self.predecessors(t).is_subset(&current) {
                    continue;
                }
                let mut next = current.clone();
                next.insert(t.clone());
                if seen.insert(next.clone()) {
                    out.push(next.clone());
                    frontier.push(next);
                }
            }
        }
        out.sort();
        out
    }

    /// All orders in which the flows can complete (every linear extension).
    pub fn linear_extensions(&self) -> Vec<Vec<FlowTuple>> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        let mut fired = BTreeSet::new();
        self.extend_linear(&mut prefix, &mut fired, &mut out);
        out
    }

    fn extend_linear(
        &self,
        prefix: &mut Vec<FlowTuple>,
        fired: &mut BTreeSet<FlowTuple>,
        out: &mut Vec<Vec<FlowTuple>>,
    ) {
        if prefix.len() == self.tuples.len() {
            out.push(prefix.clone());
            return;
        }
        let candidates: Vec<FlowTuple> = self
            .tuples
            .iter()
            .filter(|t| !fired.contains(*t) && self.predecessors(t).is_subset(fired))
            .cloned()
            .collect();
        for t in candidates {
            prefix.push(t.clone());
            fired.insert(t.clone());
            self.extend_linear(prefix, fired, out);
            prefix.pop();
            fired.remove(&t);
        }
    }

    /// All nodes touched by the poset's tuples.
    pub fn nodes(&self) -> BTreeSet<NodeName> {
        self.tuples.iter().flat_map(FlowTuple::nodes).collect()
    }

    /// The sub-poset induced by a subset of the tuples.
    fn restrict(&self, subset: &BTreeSet<FlowTuple>) -> DelayPoset {
        DelayPoset {
            tuples: subset.clone(),
            precedence: self
                .precedence
                .iter()
                .filter(|(a, b)| subset.contains(a) && subset.contains(b))
                .cloned()
                .collect(),
        }
    }

    /// Connected components of the comparability graph: tuples in different
    /// components are mutually unordered and share no ordering constraints
    /// even transitively.
    pub fn components(&self) -> Vec<BTreeSet<FlowTuple>> {
        let mut remaining: BTreeSet<FlowTuple> = self.tuples.clone();
        let mut out = Vec::new();
        while let Some(seed) = remaining.iter().next().cloned() {
            let mut component = BTreeSet::from([seed.clone()]);
            let mut frontier = vec![seed];
            while let Some(t) = frontier.pop() {
                let neighbours: Vec<FlowTuple> = self
                    .precedence
                    .iter()
                    .filter_map(|(a, b)| {
                        if *a == t {
                            Some(b.clone())
                        } else if *b == t {
                            Some(a.clone())
                        } else {
                            None
                        }
                    })
                    .collect();
                for n in neighbours {
                    if component.insert(n.clone()) {
                        frontier.push(n);
                    }
                }
            }
            remaining.retain(|t| !component.contains(t));
            out.push(component);
        }
        out
    }
}

/// Extracts the delay poset of a tuple set: flow `θ′` precedes flow `θ`
/// exactly when `θ′` delivers to a node `θ` reads from (`o(θ′) ∩ i(θ) ≠ ∅`),
/// closed transitively. A cyclic dependency has no valid firing order and is
/// an error.
pub fn ext(tuples: &BTreeSet<FlowTuple>) -> Result<DelayPoset, DelayError> {
    let mut pairs = Vec::new();
    for before in tuples {
        for after in tuples {
            if !before.outputs.is_disjoint(&after.inputs) {
                if before == after {
                    return Err(DelayError::CyclicDependency(before.to_string()));
                }
                pairs.push((before.clone(), after.clone()));
            }
        }
    }
    DelayPoset::new(tuples.clone(), pairs)
}

/// A series-parallel expression over flow tuples: `;` sequences two
/// sub-expressions, `|` runs them independently. Each tuple occurs at most
/// once in an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DelaySeq {
    /// The empty sequence — identity for both operators.
    Epsilon,
    /// A single flow.
    Tuple(FlowTuple),
    /// Left completes entirely before right starts.
    Seq(Box<DelaySeq>, Box<DelaySeq>),
    /// Independent interleaving.
    Par(Box<DelaySeq>, Box<DelaySeq>),
}

impl DelaySeq {
    pub fn tuple(t: FlowTuple) -> Self {
        DelaySeq::Tuple(t)
    }

    /// Sequences two expressions. Panics if they share a tuple — an
    /// expression describes one transition's flows, each of which fires once.
    pub fn seq(first: DelaySeq, then: DelaySeq) -> Self {
        assert!(
            first.tuples().is_disjoint(&then.tuples()),
            "a flow tuple may appear only once in a delay-sequence"
        );
        DelaySeq::Seq(Box::new(first), Box::new(then))
    }

    /// Parallel composition. Panics if the operands share a tuple.
    pub fn par(left: DelaySeq, right: DelaySeq) -> Self {
        assert!(
            left.tuples().is_disjoint(&right.tuples()),
            "a flow tuple may appear only once in a delay-sequence"
        );
        DelaySeq::Par(Box::new(left), Box::new(right))
    }

    /// All tuples in the expression.
    pub fn tuples(&self) -> BTreeSet<FlowTuple> {
        match self {
            DelaySeq::Epsilon => BTreeSet::new(),
            DelaySeq::Tuple(t) => BTreeSet::from([t.clone()]),
            DelaySeq::Seq(l, r) | DelaySeq::Par(l, r) => {
                l.tuples().union(&r.tuples()).cloned().collect()
            }
        }
    }

    /// All nodes touched by the expression's tuples.
    pub fn nodes(&self) -> BTreeSet<NodeName> {
        self.tuples().iter().flat_map(FlowTuple::nodes).collect()
    }

    /// The precedence the expression imposes: under `;`, everything on the
    /// left precedes everything on the right; under `|`, nothing is added.
    pub fn induced_poset(&self) -> DelayPoset {
        let mut pairs = Vec::new();
        self.collect_pairs(&mut pairs);
        DelayPoset::new(self.tuples(), pairs)
            .expect("series-parallel expressions cannot induce cycles")
    }

    fn collect_pairs(&self, pairs: &mut Vec<(FlowTuple, FlowTuple)>) {
        match self {
            DelaySeq::Epsilon | DelaySeq::Tuple(_) => {}
            DelaySeq::Seq(l, r) => {
                for a in l.tuples() {
                    for b in r.tuples() {
                        pairs.push((a.clone(), b.clone()));
                    }
                }
                l.collect_pairs(pairs);
                r.collect_pairs(pairs);
            }
            DelaySeq::Par(l, r) => {
                l.collect_pairs(pairs);
                r.collect_pairs(pairs);
            }
        }
    }

    /// Renders with full tuple bodies, e.g. `({a},{b,c},γab);({b,c},∅,γcF)`.
    pub fn render_tuples(&self) -> String {
        self.render_with(&|t| t.to_string())
    }

    fn render_with(&self, leaf: &impl Fn(&FlowTuple) -> String) -> String {
        match self {
            DelaySeq::Epsilon => "ε".to_string(),
            DelaySeq::Tuple(t) => leaf(t),
            DelaySeq::Seq(_, _) => self.render_chain(';', leaf),
            DelaySeq::Par(_, _) => self.render_chain('|', leaf),
        }
    }

    /// Flattens a same-operator chain (the operators are associative) and
    /// parenthesises composite operands.
    fn render_chain(&self, op: char, leaf: &impl Fn(&FlowTuple) -> String) -> String {
        let mut operands = Vec::new();
        self.flatten(op, &mut operands);
        operands
            .iter()
            .map(|child| match child {
                DelaySeq::Seq(_, _) | DelaySeq::Par(_, _) => {
                    format!("({})", child.render_with(leaf))
                }
                _ => child.render_with(leaf),
            })
            .collect::<Vec<_>>()
            .join(&op.to_string())
    }

    fn flatten<'a>(&'a self, op: char, out: &mut Vec<&'a DelaySeq>) {
        match (op, self) {
            (';', DelaySeq::Seq(l, r)) | ('|', DelaySeq::Par(l, r)) => {
                l.flatten(op, out);
                r.flatten(op, out);
            }
            _ => out.push(self),
        }
    }
}

impl fmt::Display for DelaySeq {
    /// Renders tuples by their rate names, e.g. `((θ2;θ3)|(θ8;θ9));(θ4|θ10|θ11)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_with(&|t| t.rate_name.clone()))
    }
}

/// True iff two expressions describe the same flow behaviour: same tuples
/// and the same completion orders, i.e. equal induced posets. This folds in
/// commutativity/associativity of `|`, associativity of `;`, and the
/// identity laws of `ε`.
pub fn equivalent(a: &DelaySeq, b: &DelaySeq) -> bool {
    a.induced_poset() == b.induced_poset()
}

/// The result of rendering a poset back into an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub expr: DelaySeq,
    /// Whether the expression's induced poset equals the input exactly.
    /// Posets that are not series-parallel get a best-effort layering whose
    /// expression over-constrains; the poset stays authoritative.
    pub exact: bool,
}

/// Renders a poset as a series-parallel expression.
///
/// Unordered components render in parallel; a component splits sequentially
/// wherever a full cut exists (every earlier tuple precedes every later
/// one). Parallel operands are ordered by their first tuple, so renderings
/// are deterministic and read in rate-name order.
pub fn render(p: &DelayPoset) -> Rendered {
    let expr = render_subset(p, &p.tuples);
    let exact = expr.induced_poset() == *p;
    Rendered { expr, exact }
}

fn render_subset(p: &DelayPoset, subset: &BTreeSet<FlowTuple>) -> DelaySeq {
    if subset.is_empty() {
        return DelaySeq::Epsilon;
    }
    if subset.len() == 1 {
        return DelaySeq::Tuple(subset.first().unwrap().clone());
    }
    let sub = p.restrict(subset);

    // parallel split: mutually unordered components
    let components = sub.components();
    if components.len() > 1 {
        return components
            .into_iter()
            .map(|c| render_subset(p, &c))
            .reduce(DelaySeq::par)
            .unwrap();
    }

    // series split: scan prefixes of a predecessor-count order for a cut
    // where every earlier tuple precedes every later one; any existing cut
    // shows up as such a prefix because members of its lower part have
    // strictly fewer predecessors than members of its upper part
    let mut ordered: Vec<FlowTuple> = subset.iter().cloned().collect();
    ordered.sort_by_key(|t| sub.predecessors(t).len());
    for k in 1..ordered.len() {
        let (lower, upper) = ordered.split_at(k);
        if lower
            .iter()
            .all(|l| upper.iter().all(|u| sub.precedes(l, u)))
        {
            let lower: BTreeSet<_> = lower.iter().cloned().collect();
            let upper: BTreeSet<_> = upper.iter().cloned().collect();
            return DelaySeq::seq(render_subset(p, &lower), render_subset(p, &upper));
        }
    }

    // not series-parallel: layer by minimal elements (over-constrained;
    // render() flags the result as inexact)
    let minimals = sub.minimal_elements();
    let rest: BTreeSet<FlowTuple> = subset.difference(&minimals).cloned().collect();
    let layer = minimals
        .into_iter()
        .map(DelaySeq::Tuple)
        .reduce(DelaySeq::par)
        .unwrap();
    DelaySeq::seq(layer, render_subset(p, &rest))
}
