//! Translation of a stochastic connector into a continuous-time Markov chain.
//!
//! The chain's states track two things: the connector's configuration
//! (which buffers are full) and the set of boundary nodes with a pending
//! request. Arrivals add pending requests one node at a time. When the
//! pending set satisfies a transition's guard, the transition's flows fire —
//! not atomically, but one flow at a time, each taking an exponentially
//! distributed processing delay. The flows' delay poset is unfolded into
//! micro-steps: one intermediate state per partial completion.
//!
//! An optional merge pass identifies a partial completion with a structural
//! state when the flows fired so far form complete, independent groups —
//! the buffers they touch have already reached their new configuration, so
//! the connector is indistinguishable from one that arrived there directly.
//! Merging changes which requests the remaining flows compete with (the
//! structural state offers its own transitions); where that makes merged and
//! unmerged chains diverge, the build reports it as a warning.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::automaton::StateId;
use crate::delay::{ext, DelayError, DelayPoset};
use crate::guard::{Atom, NodeName};
use crate::stoch::{FlowTuple, Rate, StochasticReoAutomaton};

/// Errors raised while building the chain.
#[derive(Debug, Error, PartialEq)]
pub enum CtmcError {
    /// Extracting a transition's delay poset failed.
    #[error(transparent)]
    Delay(#[from] DelayError),
    /// A guard mentions a node with no arrival rate: the connector is not
    /// fully composed, or a boundary node was left unrated.
    #[error("guard mentions `{0}`, which has no arrival rate; join the node or give it one")]
    UnsynchronizedGuard(NodeName),
    /// Merging needs to know each flow's configuration effect.
    #[error("tuple {0} lacks effect provenance; its micro states cannot be merged")]
    MissingEffect(String),
}

/// A state of the derived chain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum CtmcState {
    /// The connector sits in a configuration with some requests pending.
    Structural {
        config: StateId,
        pending: BTreeSet<NodeName>,
    },
    /// A transition from `macro_source` is under way: the flows in `fired`
    /// (a downward-closed set of the transition's poset) have completed.
    Micro {
        macro_source: StateId,
        fired: BTreeSet<FlowTuple>,
        pending: BTreeSet<NodeName>,
    },
}

impl CtmcState {
    pub fn structural(config: StateId, pending: BTreeSet<NodeName>) -> Self {
        CtmcState::Structural { config, pending }
    }

    /// The pending request set.
    pub fn pending(&self) -> &BTreeSet<NodeName> {
        match self {
            CtmcState::Structural { pending, .. } | CtmcState::Micro { pending, .. } => pending,
        }
    }

    /// The configuration: the settled one, or the one the in-flight
    /// transition started from.
    pub fn config(&self) -> &StateId {
        match self {
            CtmcState::Structural { config, .. } => config,
            CtmcState::Micro { macro_source, .. } => macro_source,
        }
    }

    /// True for partial-completion states.
    pub fn is_micro(&self) -> bool {
        matches!(self, CtmcState::Micro { .. })
    }
}

impl fmt::Display for CtmcState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CtmcState::Structural { config, pending } => {
                write!(f, "({config},{})", crate::stoch::render_node_set(pending))
            }
            CtmcState::Micro {
                macro_source,
                fired,
                pending,
            } => {
                let names: Vec<&str> = fired.iter().map(|t| t.rate_name.as_str()).collect();
                write!(
                    f,
                    "({macro_source}[{}],{})",
                    names.join(","),
                    crate::stoch::render_node_set(pending)
                )
            }
        }
    }
}

/// What a chain transition is: one request arriving, or one flow completing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Arrival(NodeName),
    Flow(FlowTuple),
}

impl Provenance {
    /// The event-class label: the node name for arrivals, the rate name for
    /// flows. Metrics and exports group by this.
    pub fn label(&self) -> &str {
        match self {
            Provenance::Arrival(n) => n.as_str(),
            Provenance::Flow(t) => &t.rate_name,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One exponential transition of the chain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CtmcTransition {
    pub source: CtmcState,
    pub target: CtmcState,
    pub rate: Rate,
    pub provenance: Provenance,
}

/// The derived chain. Transitions are unique per
/// (source, target, provenance) and sorted; construction is deterministic.
#[derive(Debug, Clone)]
pub struct Ctmc {
    pub states: BTreeSet<CtmcState>,
    pub transitions: Vec<CtmcTransition>,
    pub initial: CtmcState,
    /// Every flow event class of the source connector — including classes
    /// whose transitions turned out unreachable (their metrics are zero).
    pub flow_rate_names: BTreeSet<String>,
    /// The source connector's arrival rates (event classes keyed by node).
    pub arrival_rates: BTreeMap<NodeName, Rate>,
    /// Non-fatal observations from the build, e.g. merges that drop
    /// continuation flows and may therefore shift metrics.
    pub warnings: Vec<String>,
}

impl Ctmc {
    /// The transitions leaving a state.
    pub fn outgoing<'a>(
        &'a self,
        s: &'a CtmcState,
    ) -> impl Iterator<Item = &'a CtmcTransition> + 'a {
        self.transitions.iter().filter(move |t| t.source == *s)
    }

    /// Graphviz rendering: micro states dashed, edges labelled
    /// `class (rate)`. Deterministic output.
    pub fn to_dot(&self) -> String {
        let mut out =
            String::from("digraph ctmc {\n  rankdir=LR;\n  node [shape=ellipse];\n");
        out.push_str("  __start [shape=point];\n");
        for s in &self.states {
            if s.is_micro() {
                out.push_str(&format!("  \"{s}\" [style=dashed];\n"));
            } else {
                out.push_str(&format!("  \"{s}\";\n"));
            }
        }
        out.push_str(&format!("  __start -> \"{}\";\n", self.initial));
        for t in &self.transitions {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}={}\"];\n",
                t.source,
                t.target,
                t.provenance.label(),
                t.rate
            ));
        }
        out.push_str("}\n");
        out
    }
}

/// One enabled automaton transition instantiated at a pending set: the
/// source and target (configuration, pending) pairs with the delay poset of
/// the flows that must run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacroTransition {
    pub source: (StateId, BTreeSet<NodeName>),
    pub poset: DelayPoset,
    pub target: (StateId, BTreeSet<NodeName>),
}

/// Build options for [`build_ctmc`]. The default builds the unmerged,
/// reachability-driven chain.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Identify complete-group partial completions with structural states.
    pub merge: bool,
    /// Seed the construction with every structural state instead of only
    /// the initial one, and keep unreachable states. For conformance
    /// checking; reachability-driven construction is the default.
    pub exhaustive: bool,
}

/// All structural states: every configuration crossed with every subset of
/// the rated boundary nodes. Exponential in the boundary size — intended
/// for small connectors and conformance tests; the builder explores
/// reachable states instead.
pub fn structural_states(s: &StochasticReoAutomaton) -> BTreeSet<CtmcState> {
    let nodes: Vec<NodeName> = s.arrival_rates.keys().cloned().collect();
    let mut out = BTreeSet::new();
    for config in &s.automaton.states {
        for mask in 0u64..(1 << nodes.len()) {
            let pending: BTreeSet<NodeName> = nodes
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, n)| n.clone())
                .collect();
            out.insert(CtmcState::structural(config.clone(), pending));
        }
    }
    out
}

/// Arrival transitions among structural states: each state gains one edge
/// per rated node not yet pending, at that node's arrival rate.
pub fn arrival_transitions_pre(
    states: &BTreeSet<CtmcState>,
    arrival_rates: &BTreeMap<NodeName, Rate>,
) -> Vec<CtmcTransition> {
    let mut out = Vec::new();
    for s in states {
        let CtmcState::Structural { config, pending } = s else {
            continue;
        };
        for (node, rate) in arrival_rates {
            if pending.contains(node) {
                continue;
            }
            let mut grown = pending.clone();
            grown.insert(node.clone());
            out.push(CtmcTransition {
                source: s.clone(),
                target: CtmcState::structural(config.clone(), grown),
                rate: *rate,
                provenance: Provenance::Arrival(node.clone()),
            });
        }
    }
    out
}

/// Checks every guard stays inside the rated boundary and extracts each
/// transition's delay poset. Shared by [`macro_transitions`] and the builder.
fn transition_posets(
    s: &StochasticReoAutomaton,
) -> Result<Vec<DelayPoset>, CtmcError> {
    let rated: BTreeSet<NodeName> = s.arrival_rates.keys().cloned().collect();
    let mut posets = Vec::new();
    for (t, tuples) in s.entries() {
        if let Some(n) = t.guard.vars().into_iter().find(|n| !rated.contains(n)) {
            return Err(CtmcError::UnsynchronizedGuard(n));
        }
        if let Some(n) = t.firing.iter().find(|n| !rated.contains(*n)) {
            return Err(CtmcError::UnsynchronizedGuard(n.clone()));
        }
        posets.push(ext(tuples)?);
    }
    Ok(posets)
}

/// True iff the pending set's induced atom (pending nodes true, all other
/// rated nodes false) satisfies the guard. Absent requests are genuinely
/// absent: a guard demanding a node's absence is only enabled while the
/// node is not pending.
fn pending_enables(
    pending: &BTreeSet<NodeName>,
    rated: &BTreeSet<NodeName>,
    guard: &crate::guard::Guard,
) -> bool {
    let atom = Atom::from_true_set(rated, pending);
    atom.satisfies(guard)
        .expect("guards checked against the rated boundary")
}

/// Every enabled instantiation of every automaton transition: one macro
/// transition per (transition, pending set) pair whose atom satisfies the
/// guard. Enumerates all pending subsets — conformance-test scale only.
pub fn macro_transitions(
    s: &StochasticReoAutomaton,
) -> Result<Vec<MacroTransition>, CtmcError> {
    let posets = transition_posets(s)?;
    let rated: BTreeSet<NodeName> = s.arrival_rates.keys().cloned().collect();
    let nodes: Vec<NodeName> = rated.iter().cloned().collect();
    let mut out = Vec::new();
    for (i, t) in s.automaton.transitions.iter().enumerate() {
        for mask in 0u64..(1 << nodes.len()) {
            let pending: BTreeSet<NodeName> = nodes
                .iter()
                .enumerate()
                .filter(|(j, _)| mask & (1 << j) != 0)
                .map(|(_, n)| n.clone())
                .collect();
            if !pending_enables(&pending, &rated, &t.guard) {
                continue;
            }
            out.push(MacroTransition {
                source: (t.source.clone(), pending.clone()),
                poset: posets[i].clone(),
                target: (
                    t.target.clone(),
                    pending.difference(&t.firing).cloned().collect(),
                ),
            });
        }
    }
    Ok(out)
}

/// Divides a macro transition into micro-steps: one state per proper
/// nonempty downward-closed subset of the poset, one edge per single-flow
/// completion. The empty and full subsets are the structural endpoints.
pub fn divide(m: &MacroTransition) -> (BTreeSet<CtmcState>, Vec<CtmcTransition>) {
    let mut states = BTreeSet::new();
    let mut transitions = Vec::new();
    let all = &m.poset.tuples;
    let resolve = |fired: &BTreeSet<FlowTuple>| -> CtmcState {
        if fired.is_empty() {
            CtmcState::structural(m.source.0.clone(), m.source.1.clone())
        } else if fired == all {
            CtmcState::structural(m.target.0.clone(), m.target.1.clone())
        } else {
            CtmcState::Micro {
                macro_source: m.source.0.clone(),
                fired: fired.clone(),
                pending: remaining_pending(&m.source.1, fired),
            }
        }
    };
    for fired in m.poset.down_sets() {
        let source = resolve(&fired);
        if source.is_micro() {
            states.insert(source.clone());
        }
        for tuple in all.iter() {
            if fired.contains(tuple) || !m.poset.predecessors(tuple).is_subset(&fired) {
                continue;
            }
            let mut next = fired.clone();
            next.insert(tuple.clone());
            transitions.push(CtmcTransition {
                source: source.clone(),
                target: resolve(&next),
                rate: tuple.rate,
                provenance: Provenance::Flow(tuple.clone()),
            });
        }
    }
    (states, transitions)
}

/// The pending set after some flows fired: their nodes' requests are served.
fn remaining_pending(
    pending: &BTreeSet<NodeName>,
    fired: &BTreeSet<FlowTuple>,
) -> BTreeSet<NodeName> {
    let served: BTreeSet<NodeName> = fired.iter().flat_map(FlowTuple::nodes).collect();
    pending.difference(&served).cloned().collect()
}

/// True iff the fired set is a union of complete components of the poset —
/// no flow group is caught mid-way.
fn is_complete_union(poset: &DelayPoset, fired: &BTreeSet<FlowTuple>) -> bool {
    poset.components().iter().all(|c| {
        let overlap = c.intersection(fired).count();
        overlap == 0 || overlap == c.len()
    })
}

/// Applies the fired flows' configuration effects, in poset order.
fn apply_effects(
    poset: &DelayPoset,
    fired: &BTreeSet<FlowTuple>,
    config: &StateId,
) -> Result<StateId, CtmcError> {
    let mut order: Vec<FlowTuple> = fired.iter().cloned().collect();
    order.sort_by(|a, b| {
        if poset.precedes(a, b) {
            std::cmp::Ordering::Less
        } else if poset.precedes(b, a) {
            std::cmp::Ordering::Greater
        } else {
            a.cmp(b)
        }
    });
    let mut current = config.clone();
    for t in order {
        if t.effect.is_empty() {
            return Err(CtmcError::MissingEffect(t.to_string()));
        }
        current = current.replace_leaves(&t.effect_map());
    }
    Ok(current)
}

/// Builds the chain reachable from the connector's initial configuration
/// with nothing pending.
///
/// With `merge` on, a partial completion whose fired flows form complete
/// groups becomes the structural state those flows' effects lead to;
/// its incoming edges are re-targeted there and its continuation edges are
/// dropped — the structural state's own transitions take over. Every
/// dropped continuation that the structural state does not offer
/// identically is reported in the result's warnings.
pub fn build_ctmc(
    s: &StochasticReoAutomaton,
    options: BuildOptions,
) -> Result<Ctmc, CtmcError> {
    let posets = transition_posets(s)?;
    let rated: BTreeSet<NodeName> = s.arrival_rates.keys().cloned().collect();
    let initial = CtmcState::structural(s.automaton.initial.clone(), BTreeSet::new());

    let mut edges: BTreeMap<(CtmcState, CtmcState, Provenance), Rate> = BTreeMap::new();
    let mut states: BTreeSet<CtmcState> = BTreeSet::new();
    // continuation edges dropped by merging, to re-check after assembly
    let mut dropped: Vec<(CtmcState, CtmcState, Provenance)> = Vec::new();
    let mut queue: VecDeque<CtmcState> = VecDeque::new();
    let mut seen: BTreeSet<CtmcState> = BTreeSet::new();

    let enqueue = |state: CtmcState,
                       states: &mut BTreeSet<CtmcState>,
                       queue: &mut VecDeque<CtmcState>| {
        states.insert(state.clone());
        if !state.is_micro() {
            queue.push_back(state);
        }
    };

    enqueue(initial.clone(), &mut states, &mut queue);
    if options.exhaustive {
        for st in structural_states(s) {
            enqueue(st, &mut states, &mut queue);
        }
    }

    while let Some(state) = queue.pop_front() {
        if !seen.insert(state.clone()) {
            continue;
        }
        let CtmcState::Structural { config, pending } = &state else {
            continue;
        };
        // arrivals
        for (node, rate) in &s.arrival_rates {
            if pending.contains(node) {
                continue;
            }
            let mut grown = pending.clone();
            grown.insert(node.clone());
            let target = CtmcState::structural(config.clone(), grown);
            edges.insert(
                (state.clone(), target.clone(), Provenance::Arrival(node.clone())),
                *rate,
            );
            enqueue(target, &mut states, &mut queue);
        }
        // enabled transitions, divided into micro-steps
        for (i, t) in s.automaton.transitions.iter().enumerate() {
            if t.source != *config || !pending_enables(pending, &rated, &t.guard) {
                continue;
            }
            let m = MacroTransition {
                source: (config.clone(), pending.clone()),
                poset: posets[i].clone(),
                target: (
                    t.target.clone(),
                    pending.difference(&t.firing).cloned().collect(),
                ),
            };
            let all = &m.poset.tuples;
            // resolve a fired set to its state, merging complete groups
            let resolve = |fired: &BTreeSet<FlowTuple>| -> Result<(CtmcState, bool), CtmcError> {
                if fired.is_empty() {
                    return Ok((state.clone(), false));
                }
                if fired == all {
                    return Ok((
                        CtmcState::structural(m.target.0.clone(), m.target.1.clone()),
                        false,
                    ));
                }
                if options.merge && is_complete_union(&m.poset, fired) {
                    let config = apply_effects(&m.poset, fired, &m.source.0)?;
                    return Ok((
                        CtmcState::structural(config, remaining_pending(&m.source.1, fired)),
                        true,
                    ));
                }
                Ok((
                    CtmcState::Micro {
                        macro_source: m.source.0.clone(),
                        fired: fired.clone(),
                        pending: remaining_pending(&m.source.1, fired),
                    },
                    false,
                ))
            };
            for fired in m.poset.down_sets() {
                if fired == *all {
                    continue;
                }
                let (source, source_merged) = resolve(&fired)?;
                for tuple in all.iter() {
                    if fired.contains(tuple) || !m.poset.predecessors(tuple).is_subset(&fired) {
                        continue;
                    }
                    let mut next = fired.clone();
                    next.insert(tuple.clone());
                    let (target, _) = resolve(&next)?;
                    let provenance = Provenance::Flow(tuple.clone());
                    if source_merged {
                        // the merged state's own transitions take over;
                        // remember what was dropped for the divergence check
                        dropped.push((source.clone(), target, provenance));
                    } else {
                        edges.insert((source.clone(), target.clone(), provenance), tuple.rate);
                        enqueue(source.clone(), &mut states, &mut queue);
                        enqueue(target, &mut states, &mut queue);
                    }
                }
            }
        }
    }

    // arrivals between surviving partial completions of the same lane
    let micro_states: Vec<CtmcState> = states.iter().filter(|s| s.is_micro()).cloned().collect();
    for m in &micro_states {
        let CtmcState::Micro {
            macro_source,
            fired,
            pending,
        } = m
        else {
            unreachable!();
        };
        for (node, rate) in &s.arrival_rates {
            if pending.contains(node) {
                continue;
            }
            let mut grown = pending.clone();
            grown.insert(node.clone());
            let target = CtmcState::Micro {
                macro_source: macro_source.clone(),
                fired: fired.clone(),
                pending: grown,
            };
            if states.contains(&target) {
                edges.insert(
                    (m.clone(), target, Provenance::Arrival(node.clone())),
                    *rate,
                );
            }
        }
    }

    // divergence check: a dropped continuation is harmless only if the
    // structural state offers the identical move
    let mut warnings: Vec<String> = Vec::new();
    for (source, target, provenance) in dropped {
        if !edges.contains_key(&(source.clone(), target.clone(), provenance.clone())) {
            warnings.push(format!(
                "merging {source} dropped its continuation --{provenance}--> {target}; \
                 the state's own transitions take over, so metrics may differ from the \
                 unmerged chain"
            ));
        }
    }
    warnings.sort();
    warnings.dedup();

    // prune states unreachable from the initial state (merging can strand
    // nothing in practice, but re-targeted edges are checked, not trusted)
    if !options.exhaustive {
        let mut adjacency: BTreeMap<&CtmcState, Vec<&CtmcState>> = BTreeMap::new();
        for (src, tgt, _) in edges.keys() {
            adjacency.entry(src).or_default().push(tgt);
        }
        let mut reachable = BTreeSet::from([initial.clone()]);
        let mut frontier = vec![&initial];
        while let Some(st) = frontier.pop() {
            for tgt in adjacency.get(st).into_iter().flatten() {
                if reachable.insert((*tgt).clone()) {
                    frontier.push(*tgt);
                }
            }
        }
        states.retain(|s| reachable.contains(s));
        edges.retain(|(src, tgt, _), _| reachable.contains(src) && reachable.contains(tgt));
    }

    let transitions: Vec<CtmcTransition> = edges
        .into_iter()
        .map(|((source, target, provenance), rate)| CtmcTransition {
            source,
            target,
            rate,
            provenance,
        })
        .collect();
    let flow_rate_names = s
        .tuples
        .iter()
        .flatten()
        .map(|t| t.rate_name.clone())
        .collect();
    Ok(Ctmc {
        states,
        transitions,
        initial,
        flow_rate_names,
        arrival_rates: s.arrival_rates.clone(),
        warnings,
    })
}
