//! Guarded automata for channel-based connectors.
//!
//! A connector is an automaton over an alphabet of node names. Each
//! transition carries a guard (which pending requests enable it) and a
//! firing set (which nodes exchange data when it is taken). Primitive
//! channels are small fixed automata; circuits arise by taking products of
//! primitives and then synchronising the node pairs that are plugged
//! together. Composition never consults the data flowing through the
//! connector — only the synchronisation constraints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::guard::{atoms, hat, Atom, Guard, NodeName};

/// Errors raised by automaton construction and composition.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum AutomatonError {
    /// A transition endpoint or the initial state is not in the state set.
    #[error("state `{0}` is not in the state set")]
    UnknownState(String),
    /// A guard or firing set mentions a name outside the alphabet.
    #[error("name `{0}` is not in the alphabet")]
    NameOutsideAlphabet(NodeName),
    /// Product operands must have disjoint alphabets.
    #[error("alphabets overlap on `{0}`; product operands must be disjoint")]
    AlphabetsOverlap(NodeName),
    /// Synchronising a node with itself is meaningless.
    #[error("cannot synchronise node `{0}` with itself")]
    SynchronizeSameNode(NodeName),
    /// Bisimilarity is only defined between automata over the same alphabet.
    #[error("cannot compare automata over different alphabets")]
    AlphabetMismatch,
}

/// Identity of the primitive channel a state belongs to.
///
/// Distinct channels of the same kind reuse state names (`e`, `f`, …); the
/// channel tag keeps their states distinct once circuits are composed, which
/// matters when buffer effects are applied to composed configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId(pub usize);

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A state identity: a named leaf (optionally tagged with its channel) or a
/// pair of component states produced by a product.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StateId {
    /// A primitive channel's own state.
    Prim {
        /// The owning channel, when the state comes from an instantiated circuit.
        channel: Option<ChannelId>,
        /// The state's name within its channel (`q`, `e`, `f`, …).
        name: String,
    },
    /// A product state, pairing one state of each operand.
    Pair(Box<StateId>, Box<StateId>),
}

impl StateId {
    /// An untagged leaf state.
    pub fn atom(name: impl Into<String>) -> Self {
        StateId::Prim {
            channel: None,
            name: name.into(),
        }
    }

    /// A leaf state owned by a channel.
    pub fn channel_atom(channel: ChannelId, name: impl Into<String>) -> Self {
        StateId::Prim {
            channel: Some(channel),
            name: name.into(),
        }
    }

    /// A product state.
    pub fn pair(left: StateId, right: StateId) -> Self {
        StateId::Pair(Box::new(left), Box::new(right))
    }

    /// All leaf states of the pair tree, left to right.
    pub fn leaves(&self) -> Vec<&StateId> {
        match self {
            StateId::Prim { .. } => vec![self],
            StateId::Pair(l, r) => {
                let mut out = l.leaves();
                out.extend(r.leaves());
                out
            }
        }
    }

    /// Rewrites leaves through a map, leaving unmapped leaves in place.
    ///
    /// This is how buffer effects are applied to a composed configuration:
    /// each effect names the leaf states of its own channel.
    pub fn replace_leaves(&self, map: &BTreeMap<StateId, StateId>) -> StateId {
        match self {
            StateId::Prim { .. } => map.get(self).unwrap_or(self).clone(),
            StateId::Pair(l, r) => {
                StateId::pair(l.replace_leaves(map), r.replace_leaves(map))
            }
        }
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateId::Prim { channel: None, name } => f.write_str(name),
            StateId::Prim {
                channel: Some(c),
                name,
            } => write!(f, "{name}@{c}"),
            StateId::Pair(l, r) => write!(f, "({l},{r})"),
        }
    }
}

/// One guarded transition: from `source`, when the pending requests satisfy
/// `guard`, the nodes in `firing` exchange data and the automaton moves to
/// `target`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ReoTransition {
    pub source: StateId,
    pub guard: Guard,
    pub firing: BTreeSet<NodeName>,
    pub target: StateId,
}

impl fmt::Display for ReoTransition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} --{}|{}--> {}",
            self.source,
            self.guard.render(),
            render_names(&self.firing),
            self.target
        )
    }
}

/// Renders a name set as concatenated names, `∅` when empty.
pub(crate) fn render_names(names: &BTreeSet<NodeName>) -> String {
    if names.is_empty() {
        return "∅".to_string();
    }
    names.iter().map(NodeName::as_str).collect()
}

/// A guarded automaton over a fixed alphabet, with a distinguished initial
/// state. States unreachable from the initial state are retained; dropping
/// them is left to callers that care.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReoAutomaton {
    pub alphabet: BTreeSet<NodeName>,
    pub states: BTreeSet<StateId>,
    pub initial: StateId,
    pub transitions: Vec<ReoTransition>,
}

/// A well-formedness violation found by [`ReoAutomaton::validate`].
///
/// Violations are reported rather than raised: composing automata that break
/// these conditions is still mechanically possible, and seeing the full list
/// is more useful than stopping at the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The guard does not require its own firing set: some enabling request
    /// set lacks a node that is supposed to fire.
    Reactivity { transition: usize, detail: String },
    /// Some request set covering the firing leaves the source state with no
    /// enabled transition at all — the state would refuse requests it must
    /// serve.
    Uniformity { transition: usize, detail: String },
    /// A boundary node of a stochastic connector has no arrival rate.
    MissingArrivalRate { node: NodeName },
    /// A rate is zero, negative, or non-finite.
    NonPositiveRate { context: String },
    /// A transition of a stochastic connector carries no flow tuples.
    MissingTuples { transition: usize },
    /// A flow tuple reads and delivers at the same node.
    OverlappingTupleNodes { transition: usize, detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Reactivity { transition, detail } => {
                write!(f, "reactivity violated at transition {transition}: {detail}")
            }
            Violation::Uniformity { transition, detail } => {
                write!(f, "uniformity violated at transition {transition}: {detail}")
            }
            Violation::MissingArrivalRate { node } => {
                write!(f, "boundary node `{node}` has no arrival rate")
            }
            Violation::NonPositiveRate { context } => {
                write!(f, "non-positive rate: {context}")
            }
            Violation::MissingTuples { transition } => {
                write!(f, "transition {transition} carries no flow tuples")
            }
            Violation::OverlappingTupleNodes { transition, detail } => {
                write!(
                    f,
                    "transition {transition} has a tuple reading and delivering at the same node: {detail}"
                )
            }
        }
    }
}

/// The outcome of validating an automaton.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    /// True when no violations were found.
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_clean() {
            return f.write_str("ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

impl ReoAutomaton {
    /// Builds an automaton, checking structural well-formedness: the initial
    /// state and all transition endpoints are in the state set, and guards
    /// and firing sets stay inside the alphabet.
    pub fn new(
        alphabet: BTreeSet<NodeName>,
        states: BTreeSet<StateId>,
        initial: StateId,
        transitions: Vec<ReoTransition>,
    ) -> Result<Self, AutomatonError> {
        if !states.contains(&initial) {
            return Err(AutomatonError::UnknownState(initial.to_string()));
        }
        for t in &transitions {
            for s in [&t.source, &t.target] {
                if !states.contains(s) {
                    return Err(AutomatonError::UnknownState(s.to_string()));
                }
            }
            for n in t.guard.vars() {
                if !alphabet.contains(&n) {
                    return Err(AutomatonError::NameOutsideAlphabet(n));
                }
            }
            if let Some(n) = t.firing.iter().find(|n| !alphabet.contains(*n)) {
                return Err(AutomatonError::NameOutsideAlphabet(n.clone()));
            }
        }
        Ok(ReoAutomaton {
            alphabet,
            states,
            initial,
            transitions,
        })
    }

    /// The synchronous channel: one state, data flows from `a` to `b`
    /// atomically whenever both ends are requested.
    pub fn sync(a: impl Into<NodeName>, b: impl Into<NodeName>) -> Self {
        let (a, b) = (a.into(), b.into());
        let q = StateId::atom("q");
        let guard = Guard::var(a.clone()) & Guard::var(b.clone());
        let firing = BTreeSet::from([a.clone(), b.clone()]);
        ReoAutomaton::new(
            BTreeSet::from([a, b]),
            BTreeSet::from([q.clone()]),
            q.clone(),
            vec![ReoTransition {
                source: q.clone(),
                guard,
                firing,
                target: q,
            }],
        )
        .expect("primitive is well-formed")
    }

    /// The lossy synchronous channel: like `sync`, but when only the source
    /// end is requested the data is accepted and lost.
    pub fn lossy_sync(a: impl Into<NodeName>, b: impl Into<NodeName>) -> Self {
        let (a, b) = (a.into(), b.into());
        let q = StateId::atom("q");
        ReoAutomaton::new(
            BTreeSet::from([a.clone(), b.clone()]),
            BTreeSet::from([q.clone()]),
            q.clone(),
            vec![
                ReoTransition {
                    source: q.clone(),
                    guard: Guard::var(a.clone()) & Guard::var(b.clone()),
                    firing: BTreeSet::from([a.clone(), b.clone()]),
                    target: q.clone(),
                },
                ReoTransition {
                    source: q.clone(),
                    guard: Guard::var(a.clone()) & !Guard::var(b),
                    firing: BTreeSet::from([a]),
                    target: q,
                },
            ],
        )
        .expect("primitive is well-formed")
    }

    /// The synchronous drain: both ends must be requested; the data is
    /// consumed on both sides and discarded.
    pub fn sync_drain(a: impl Into<NodeName>, b: impl Into<NodeName>) -> Self {
        // same synchronisation behaviour as `sync`; the two only differ in
        // data flow direction, which the automaton does not record
        ReoAutomaton::sync(a, b)
    }

    /// The one-place buffer: accepts on `a` when empty, emits on `b` when
    /// full. Starts empty.
    pub fn fifo1(a: impl Into<NodeName>, b: impl Into<NodeName>) -> Self {
        let (a, b) = (a.into(), b.into());
        let e = StateId::atom("e");
        let f = StateId::atom("f");
        ReoAutomaton::new(
            BTreeSet::from([a.clone(), b.clone()]),
            BTreeSet::from([e.clone(), f.clone()]),
            e.clone(),
            vec![
                ReoTransition {
                    source: e.clone(),
                    guard: Guard::var(a.clone()),
                    firing: BTreeSet::from([a]),
                    target: f.clone(),
                },
                ReoTransition {
                    source: f,
                    guard: Guard::var(b.clone()),
                    firing: BTreeSet::from([b]),
                    target: e,
                },
            ],
        )
        .expect("primitive is well-formed")
    }

    /// The transitions leaving a state.
    pub fn outgoing<'a>(
        &'a self,
        q: &'a StateId,
    ) -> impl Iterator<Item = &'a ReoTransition> + 'a {
        self.transitions.iter().filter(move |t| t.source == *q)
    }

    /// The guard describing request sets that enable nothing at `q`: the
    /// negated disjunction of all outgoing guards. A state with no outgoing
    /// transitions blocks everything (`Top`).
    pub fn blocked_guard(&self, q: &StateId) -> Guard {
        !Guard::disj(self.outgoing(q).map(|t| t.guard.clone()))
    }

    /// Checks the two behavioural well-formedness conditions and reports
    /// every violation found.
    ///
    /// *Reactivity*: a transition only fires nodes that its guard requests
    /// (`g ≤ f̂`). *Uniformity*: once the firing set's requests are present,
    /// the source state cannot be entirely blocked — additional requests may
    /// change *what* fires, but not whether anything does (`f̂ ∧ blocked(q)`
    /// unsatisfiable).
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (i, t) in self.transitions.iter().enumerate() {
            let f_hat = hat(&t.firing);
            if !t.guard.implies(&f_hat) {
                violations.push(Violation::Reactivity {
                    transition: i,
                    detail: format!("{t}: guard does not imply {}", f_hat.render()),
                });
            }
            let blocked = self.blocked_guard(&t.source);
            if (f_hat & blocked).is_satisfiable() {
                violations.push(Violation::Uniformity {
                    transition: i,
                    detail: format!("{t}: some request set covering the firing blocks {}", t.source),
                });
            }
        }
        ValidationReport { violations }
    }

    /// The product of two automata over disjoint alphabets.
    ///
    /// States are all pairs; the initial state pairs the operands' initials.
    /// Each pair state gets the joint transitions (both operands step
    /// together) and the solo transitions (one operand steps while the
    /// other's current state is blocked). Transitions whose guard is
    /// unsatisfiable are dropped, and semantically duplicate transitions are
    /// kept once.
    pub fn product(&self, other: &ReoAutomaton) -> Result<ReoAutomaton, AutomatonError> {
        if let Some(n) = self.alphabet.intersection(&other.alphabet).next() {
            return Err(AutomatonError::AlphabetsOverlap(n.clone()));
        }
        let alphabet: BTreeSet<_> = self.alphabet.union(&other.alphabet).cloned().collect();
        let mut states = BTreeSet::new();
        for p in &self.states {
            for q in &other.states {
                states.insert(StateId::pair(p.clone(), q.clone()));
            }
        }
        let mut transitions = Vec::new();
        for p in &self.states {
            for q in &other.states {
                let source = StateId::pair(p.clone(), q.clone());
                // both operands fire together
                for t1 in self.outgoing(p) {
                    for t2 in other.outgoing(q) {
                        push_transition(
                            &mut transitions,
                            ReoTransition {
                                source: source.clone(),
                                guard: t1.guard.clone() & t2.guard.clone(),
                                firing: t1.firing.union(&t2.firing).cloned().collect(),
                                target: StateId::pair(t1.target.clone(), t2.target.clone()),
                            },
                        );
                    }
                }
                // left fires alone: the right operand must be blocked
                let right_blocked = other.blocked_guard(q);
                for t1 in self.outgoing(p) {
                    push_transition(
                        &mut transitions,
                        ReoTransition {
                            source: source.clone(),
                            guard: t1.guard.clone() & right_blocked.clone(),
                            firing: t1.firing.clone(),
                            target: StateId::pair(t1.target.clone(), q.clone()),
                        },
                    );
                }
                // right fires alone: the left operand must be blocked
                let left_blocked = self.blocked_guard(p);
                for t2 in other.outgoing(q) {
                    push_transition(
                        &mut transitions,
                        ReoTransition {
                            source: source.clone(),
                            guard: left_blocked.clone() & t2.guard.clone(),
                            firing: t2.firing.clone(),
                            target: StateId::pair(p.clone(), t2.target.clone()),
                        },
                    );
                }
            }
        }
        ReoAutomaton::new(
            alphabet,
            states,
            StateId::pair(self.initial.clone(), other.initial.clone()),
            transitions,
        )
    }

    /// Splits every guard into its normal-form clauses, one transition per
    /// clause. Transitions with unsatisfiable guards disappear. The result
    /// is bisimilar to the input.
    pub fn normalize(&self) -> ReoAutomaton {
        let mut transitions = Vec::new();
        for t in &self.transitions {
            for clause in t.guard.dnf() {
                push_transition(
                    &mut transitions,
                    ReoTransition {
                        source: t.source.clone(),
                        guard: clause.to_guard(),
                        firing: t.firing.clone(),
                        target: t.target.clone(),
                    },
                );
            }
        }
        ReoAutomaton {
            alphabet: self.alphabet.clone(),
            states: self.states.clone(),
            initial: self.initial.clone(),
            transitions,
        }
    }

    /// Synchronises two nodes that are plugged together, making their flow
    /// simultaneous and hiding them from guards and firings.
    ///
    /// Works on the normalised transitions: a transition survives iff its
    /// guard can hold with one of the two nodes requested (`g ≰ ¬a¬b`) and
    /// it fires either both nodes or neither. Surviving transitions lose the
    /// two names from guard and firing set. The alphabet keeps both names:
    /// they are synchronised, not forgotten, and downstream bookkeeping may
    /// still refer to them.
    pub fn synchronize(
        &self,
        a: &NodeName,
        b: &NodeName,
    ) -> Result<ReoAutomaton, AutomatonError> {
        if a == b {
            return Err(AutomatonError::SynchronizeSameNode(a.clone()));
        }
        for n in [a, b] {
            if !self.alphabet.contains(n) {
                return Err(AutomatonError::NameOutsideAlphabet(n.clone()));
            }
        }
        let hidden = BTreeSet::from([a.clone(), b.clone()]);
        let unrequested = !Guard::var(a.clone()) & !Guard::var(b.clone());
        let mut transitions = Vec::new();
        for t in self.normalize().transitions {
            if t.guard.implies(&unrequested) {
                continue;
            }
            if t.firing.contains(a) != t.firing.contains(b) {
                continue;
            }
            let guard = t
                .guard
                .delete_names(&hidden)
                .expect("normalised guards are clauses");
            push_transition(
                &mut transitions,
                ReoTransition {
                    source: t.source,
                    guard,
                    firing: t.firing.difference(&hidden).cloned().collect(),
                    target: t.target,
                },
            );
        }
        Ok(ReoAutomaton {
            alphabet: self.alphabet.clone(),
            states: self.states.clone(),
            initial: self.initial.clone(),
            transitions,
        })
    }

    /// A canonical, render-based view of the transition relation, handy for
    /// comparing composition results against expected transition tables.
    pub fn transition_signatures(&self) -> BTreeSet<(String, String, String, String)> {
        self.transitions
            .iter()
            .map(|t| {
                (
                    t.source.to_string(),
                    t.guard.render(),
                    render_names(&t.firing),
                    t.target.to_string(),
                )
            })
            .collect()
    }

    /// Graphviz rendering: states as circles (initial marked), transitions
    /// labelled `guard|firing`. Output is deterministic.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph connector {\n  rankdir=LR;\n  node [shape=circle];\n");
        out.push_str("  __start [shape=point];\n");
        for s in &self.states {
            out.push_str(&format!("  \"{s}\";\n"));
        }
        out.push_str(&format!("  __start -> \"{}\";\n", self.initial));
        let mut edges: Vec<String> = self
            .transitions
            .iter()
            .map(|t| {
                format!(
                    "  \"{}\" -> \"{}\" [label=\"{}|{}\"];\n",
                    t.source,
                    t.target,
                    t.guard.render(),
                    render_names(&t.firing)
                )
            })
            .collect();
        edges.sort();
        for e in edges {
            out.push_str(&e);
        }
        out.push_str("}\n");
        out
    }

    /// Decides bisimilarity with another automaton over the same alphabet.
    ///
    /// Two states are bisimilar when every request set leads, through
    /// transitions with the same firing set, to bisimilar successor states —
    /// in both directions. Computed by partition refinement over the
    /// disjoint union of the two state sets; the result carries the full
    /// relation between the automata's states, and relatedness of the
    /// initial states separately.
    pub fn bisimilar(&self, other: &ReoAutomaton) -> Result<BisimResult, AutomatonError> {
        if self.alphabet != other.alphabet {
            return Err(AutomatonError::AlphabetMismatch);
        }
        // enumerate atoms over the names that can matter: everything some
        // guard mentions or some transition fires
        let mut relevant = BTreeSet::new();
        for t in self.transitions.iter().chain(&other.transitions) {
            relevant.extend(t.guard.vars());
            relevant.extend(t.firing.iter().cloned());
        }
        let universe = atoms(&relevant);

        // states of the disjoint union, tagged by side
        let union_states: Vec<(bool, &StateId)> = self
            .states
            .iter()
            .map(|s| (false, s))
            .chain(other.states.iter().map(|s| (true, s)))
            .collect();
        let index: BTreeMap<(bool, &StateId), usize> = union_states
            .iter()
            .enumerate()
            .map(|(i, &(side, s))| ((side, s), i))
            .collect();

        let mut block: Vec<usize> = vec![0; union_states.len()];
        loop {
            // a state's signature: which (atom, firing, target-block) moves it offers
            let signature = |i: usize| -> BTreeSet<(Atom, BTreeSet<NodeName>, usize)> {
                let (side, s) = union_states[i];
                let aut = if side { other } else { self };
                let mut sig = BTreeSet::new();
                for t in aut.outgoing(s) {
                    for atom in &universe {
                        if atom.satisfies(&t.guard).expect("atom covers guard vars") {
                            sig.insert((
                                atom.clone(),
                                t.firing.clone(),
                                block[index[&(side, &t.target)]],
                            ));
                        }
                    }
                }
                sig
            };
            let mut next_ids: BTreeMap<(usize, BTreeSet<(Atom, BTreeSet<NodeName>, usize)>), usize> =
                BTreeMap::new();
            let mut next: Vec<usize> = Vec::with_capacity(union_states.len());
            for i in 0..union_states.len() {
                let key = (block[i], signature(i));
                let fresh = next_ids.len();
                next.push(*next_ids.entry(key).or_insert(fresh));
            }
            if next == block {
                break;
            }
            block = next;
        }

        let mut relation = BTreeSet::new();
        for p in &self.states {
            for q in &other.states {
                if block[index[&(false, p)]] == block[index[&(true, q)]] {
                    relation.insert((p.clone(), q.clone()));
                }
            }
        }
        let initials_related =
            block[index[&(false, &self.initial)]] == block[index[&(true, &other.initial)]];
        Ok(BisimResult {
            initials_related,
            relation,
        })
    }
}

/// The outcome of a bisimilarity check: the greatest bisimulation between
/// the two automata's state sets, plus whether the initial states fall into
/// it. Automata whose initial states are related behave identically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BisimResult {
    /// Whether the two initial states are bisimilar.
    pub initials_related: bool,
    /// All bisimilar pairs (left automaton state, right automaton state).
    pub relation: BTreeSet<(StateId, StateId)>,
}

/// Appends a transition unless its guard is unsatisfiable or an equivalent
/// transition (same endpoints and firing, equivalent guard) is present.
fn push_transition(transitions: &mut Vec<ReoTransition>, t: ReoTransition) {
    if !t.guard.is_satisfiable() {
        return;
    }
    let duplicate = transitions.iter().any(|u| {
        u.source == t.source
            && u.target == t.target
            && u.firing == t.firing
            && u.guard.equivalent(&t.guard)
    });
    if !duplicate {
        transitions.push(t);
    }
}
