//! Stochastic annotation of connector automata.
//!
//! A stochastic connector pairs a guarded automaton with two kinds of rates:
//! *arrival rates* at boundary nodes (how often the environment offers or
//! requests data) and *processing rates* carried by flow tuples (how long
//! each data-flow inside a transition takes). A flow tuple `(I, O, rate)`
//! names the nodes its flow reads from and delivers to; a transition carries
//! one tuple per primitive data-flow it involves, so composed transitions
//! accumulate the tuples of their parents. Tuples also record which buffer
//! state change their flow causes — needed later when transitions are
//! divided into micro-steps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::automaton::{
    AutomatonError, ChannelId, ReoAutomaton, ReoTransition, StateId, ValidationReport, Violation,
};
use crate::guard::{atoms, Atom, Guard, NodeName};

/// Errors raised when building or composing stochastic connectors.
#[derive(Debug, Error, PartialEq)]
pub enum StochError {
    /// The underlying automaton operation failed.
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    /// A primitive was given the wrong number of nodes.
    #[error("{kind} takes {expected} nodes, got {got}")]
    BadArity {
        kind: ChannelKind,
        expected: usize,
        got: usize,
    },
    /// A primitive's node names must be distinct.
    #[error("duplicate node `{0}` in primitive")]
    DuplicateNode(NodeName),
    /// A required processing rate was not supplied.
    #[error("{kind} requires a `{key}` rate")]
    MissingRate { kind: ChannelKind, key: String },
    /// A supplied rate key is not used by the primitive.
    #[error("{kind} has no `{key}` rate")]
    UnknownRateKey { kind: ChannelKind, key: String },
    /// An arrival rate was attached to a name outside the alphabet.
    #[error("arrival rate for `{0}`, which is not a node of the connector")]
    ArrivalOutsideAlphabet(NodeName),
    /// The tuple assignment must cover every transition.
    #[error("tuple assignment has {tuples} entries for {transitions} transitions")]
    TupleCountMismatch { transitions: usize, tuples: usize },
}

/// A rate: events per unit time of an exponential distribution.
///
/// Stored as a raw number; positivity and finiteness are checked where
/// rates enter the system (the connector language) and reported by
/// validation, not enforced by construction.
#[derive(Debug, Clone, Copy)]
pub struct Rate(pub f64);

impl Rate {
    /// The numeric value.
    pub fn value(&self) -> f64 {
        self.0
    }

    /// True for the rates validation accepts: positive and finite.
    pub fn is_valid(&self) -> bool {
        self.0.is_finite() && self.0 > 0.0
    }
}

impl PartialEq for Rate {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for Rate {}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl std::hash::Hash for Rate {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A rate together with its display label (e.g. `γab`). Labels identify
/// event classes in metrics, exports, and rendered delay-sequences.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct NamedRate {
    pub name: String,
    pub value: Rate,
}

impl NamedRate {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        NamedRate {
            name: name.into(),
            value: Rate(value),
        }
    }
}

/// The primitive channel kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ChannelKind {
    /// Atomic flow from one end to the other.
    Sync,
    /// Atomic flow, or loss at the source end when the sink is not ready.
    LossySync,
    /// One-place buffer.
    Fifo1,
    /// Consumes data atomically at both ends.
    SyncDrain,
    /// Two inputs exclusively merged into one output.
    Merger,
    /// One input copied to two outputs.
    Replicator,
}

impl ChannelKind {
    /// The number of nodes the kind connects.
    pub fn arity(&self) -> usize {
        match self {
            ChannelKind::Merger | ChannelKind::Replicator => 3,
            _ => 2,
        }
    }

    /// The processing-rate keys the kind requires.
    pub fn rate_keys(&self) -> &'static [&'static str] {
        match self {
            ChannelKind::Sync => &["flow"],
            ChannelKind::LossySync => &["flow", "loss"],
            ChannelKind::Fifo1 => &["in", "out"],
            ChannelKind::SyncDrain => &["drain"],
            ChannelKind::Merger => &["left", "right"],
            ChannelKind::Replicator => &["flow"],
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChannelKind::Sync => "sync",
            ChannelKind::LossySync => "lossysync",
            ChannelKind::Fifo1 => "fifo1",
            ChannelKind::SyncDrain => "syncdrain",
            ChannelKind::Merger => "merger",
            ChannelKind::Replicator => "replicator",
        };
        f.write_str(s)
    }
}

/// One data-flow inside a transition: data enters at `inputs`, is delivered
/// at `outputs`, and the flow's duration is exponential with `rate`.
///
/// `effect` records the buffer state change the flow causes in its owning
/// channel (identity for stateless channels); it drives the recomputation of
/// configurations when transitions are divided into micro-steps.
///
/// Tuples order by rate name (natural comparison: case-insensitive, digit
/// runs numeric), so tuple sets render and iterate in the order a reader
/// expects (`γab` before `γcF`, `θ2` before `θ10`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowTuple {
    pub inputs: BTreeSet<NodeName>,
    pub outputs: BTreeSet<NodeName>,
    pub rate: Rate,
    pub rate_name: String,
    pub effect: BTreeMap<ChannelId, (StateId, StateId)>,
}

impl Ord for FlowTuple {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        natural_cmp(&self.rate_name, &other.rate_name)
            .then_with(|| self.inputs.cmp(&other.inputs))
            .then_with(|| self.outputs.cmp(&other.outputs))
            .then_with(|| self.rate.cmp(&other.rate))
            .then_with(|| self.effect.cmp(&other.effect))
    }
}

impl PartialOrd for FlowTuple {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Human-friendly string order: case-insensitive, with runs of digits
/// compared by numeric value. Falls back to byte order so the result is a
/// total order even between case variants.
pub(crate) fn natural_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let (mut ca, mut cb) = (a.chars().peekable(), b.chars().peekable());
    loop {
        match (ca.peek().copied(), cb.peek().copied()) {
            (None, None) => return a.cmp(b),
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let take_run = |it: &mut std::iter::Peekable<std::str::Chars>| {
                    let mut run = String::new();
                    while let Some(d) = it.peek().copied().filter(char::is_ascii_digit) {
                        run.push(d);
                        it.next();
                    }
                    // strip leading zeros so runs compare by value
                    let stripped = run.trim_start_matches('0');
                    let stripped = if stripped.is_empty() { "0" } else { stripped };
                    (stripped.len(), stripped.to_string())
                };
                let (la, ra) = take_run(&mut ca);
                let (lb, rb) = take_run(&mut cb);
                match la.cmp(&lb).then_with(|| ra.cmp(&rb)) {
                    Ordering::Equal => continue,
                    other => return other,
                }
            }
            (Some(x), Some(y)) => {
                let fold = |c: char| c.to_lowercase().next().unwrap_or(c);
                match fold(x).cmp(&fold(y)) {
                    Ordering::Equal => {
                        ca.next();
                        cb.next();
                    }
                    other => return other,
                }
            }
        }
    }
}

impl FlowTuple {
    /// The nodes the flow touches.
    pub fn nodes(&self) -> BTreeSet<NodeName> {
        self.inputs.union(&self.outputs).cloned().collect()
    }

    /// The effect as a leaf-state rewriting map.
    pub fn effect_map(&self) -> BTreeMap<StateId, StateId> {
        self.effect
            .values()
            .map(|(from, to)| (from.clone(), to.clone()))
            .collect()
    }

    /// Rewrites both node sets for a synchronised pair: a set that touches
    /// either node absorbs both (the joined node fires as one).
    fn synchronized(&self, pair: &BTreeSet<NodeName>) -> FlowTuple {
        let gather = |set: &BTreeSet<NodeName>| -> BTreeSet<NodeName> {
            if set.is_disjoint(pair) {
                set.clone()
            } else {
                set.union(pair).cloned().collect()
            }
        };
        FlowTuple {
            inputs: gather(&self.inputs),
            outputs: gather(&self.outputs),
            rate: self.rate,
            rate_name: self.rate_name.clone(),
            effect: self.effect.clone(),
        }
    }
}

impl fmt::Display for FlowTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            render_node_set(&self.inputs),
            render_node_set(&self.outputs),
            self.rate_name
        )
    }
}

/// Renders a node set as `{a,b}`, or `∅` when empty.
pub fn render_node_set(names: &BTreeSet<NodeName>) -> String {
    if names.is_empty() {
        return "∅".to_string();
    }
    let inner: Vec<&str> = names.iter().map(NodeName::as_str).collect();
    format!("{{{}}}", inner.join(","))
}

/// Renders a tuple set as `{(…),(…)}` in tuple order.
pub fn render_tuple_set(tuples: &BTreeSet<FlowTuple>) -> String {
    let inner: Vec<String> = tuples.iter().map(FlowTuple::to_string).collect();
    format!("{{{}}}", inner.join(","))
}

/// A guarded automaton annotated with arrival rates at boundary nodes and a
/// flow-tuple set per transition (`tuples[i]` belongs to
/// `automaton.transitions[i]`).
///
/// `warnings` accumulates non-fatal structural observations made during
/// composition (e.g. joining two ends of the same direction); they are
/// advisory and do not affect behaviour.
#[derive(Debug, Clone)]
pub struct StochasticReoAutomaton {
    pub automaton: ReoAutomaton,
    pub tuples: Vec<BTreeSet<FlowTuple>>,
    pub arrival_rates: BTreeMap<NodeName, Rate>,
    pub warnings: Vec<String>,
}

impl StochasticReoAutomaton {
    /// Pairs an automaton with its tuple assignment and arrival rates,
    /// checking that the assignment is total and stays inside the alphabet.
    pub fn new(
        automaton: ReoAutomaton,
        tuples: Vec<BTreeSet<FlowTuple>>,
        arrival_rates: BTreeMap<NodeName, Rate>,
    ) -> Result<Self, StochError> {
        if automaton.transitions.len() != tuples.len() {
            return Err(StochError::TupleCountMismatch {
                transitions: automaton.transitions.len(),
                tuples: tuples.len(),
            });
        }
        for set in &tuples {
            for tuple in set {
                for n in tuple.nodes() {
                    if !automaton.alphabet.contains(&n) {
                        return Err(AutomatonError::NameOutsideAlphabet(n).into());
                    }
                }
            }
        }
        for node in arrival_rates.keys() {
            if !automaton.alphabet.contains(node) {
                return Err(StochError::ArrivalOutsideAlphabet(node.clone()));
            }
        }
        Ok(StochasticReoAutomaton {
            automaton,
            tuples,
            arrival_rates,
            warnings: Vec::new(),
        })
    }

    /// Adds arrival rates, checking the nodes exist.
    pub fn with_arrival_rates(
        mut self,
        rates: impl IntoIterator<Item = (NodeName, Rate)>,
    ) -> Result<Self, StochError> {
        for (node, rate) in rates {
            if !self.automaton.alphabet.contains(&node) {
                return Err(StochError::ArrivalOutsideAlphabet(node));
            }
            self.arrival_rates.insert(node, rate);
        }
        Ok(self)
    }

    /// The nodes that still exchange data with the environment: everything
    /// that occurs in some firing set. Synchronised (internal) nodes no
    /// longer fire, so they drop out.
    pub fn boundary_nodes(&self) -> BTreeSet<NodeName> {
        self.automaton
            .transitions
            .iter()
            .flat_map(|t| t.firing.iter().cloned())
            .collect()
    }

    /// The transition/tuple pairs, in transition order.
    pub fn entries(&self) -> impl Iterator<Item = (&ReoTransition, &BTreeSet<FlowTuple>)> {
        self.automaton.transitions.iter().zip(self.tuples.iter())
    }
}

/// Builds a primitive channel's stochastic automaton.
///
/// `nodes` are the channel ends in the kind's order (source ends first);
/// `rates` supplies exactly the kind's processing-rate keys (see
/// [`ChannelKind::rate_keys`]). Arrival rates are attached separately —
/// which nodes are boundary nodes is only known once the circuit is
/// assembled. The `channel` tag keeps this instance's states and effects
/// distinct from other instances in a composed circuit.
pub fn primitive(
    kind: ChannelKind,
    nodes: &[NodeName],
    rates: &BTreeMap<String, NamedRate>,
    channel: ChannelId,
) -> Result<StochasticReoAutomaton, StochError> {
    if nodes.len() != kind.arity() {
        return Err(StochError::BadArity {
            kind,
            expected: kind.arity(),
            got: nodes.len(),
        });
    }
    let mut seen = BTreeSet::new();
    for n in nodes {
        if !seen.insert(n.clone()) {
            return Err(StochError::DuplicateNode(n.clone()));
        }
    }
    for key in kind.rate_keys() {
        if !rates.contains_key(*key) {
            return Err(StochError::MissingRate {
                kind,
                key: (*key).to_string(),
            });
        }
    }
    if let Some(key) = rates.keys().find(|k| !kind.rate_keys().contains(&k.as_str())) {
        return Err(StochError::UnknownRateKey {
            kind,
            key: key.clone(),
        });
    }
    let rate = |key: &str| rates[key].clone();
    let var = |i: usize| Guard::var(nodes[i].clone());
    let fire = |idx: &[usize]| -> BTreeSet<NodeName> {
        idx.iter().map(|&i| nodes[i].clone()).collect()
    };
    let q = StateId::channel_atom(channel, "q");
    let identity = BTreeMap::from([(channel, (q.clone(), q.clone()))]);
    let tuple = |inputs: &[usize], outputs: &[usize], named: NamedRate| FlowTuple {
        inputs: fire(inputs),
        outputs: fire(outputs),
        rate: named.value,
        rate_name: named.name,
        effect: identity.clone(),
    };

    // each arm lists (guard, firing, tuple set) for the single-state kinds;
    // fifo1 is handled separately because of its two states
    let single_state: Vec<(Guard, BTreeSet<NodeName>, BTreeSet<FlowTuple>)> = match kind {
        ChannelKind::Sync => vec![(
            var(0) & var(1),
            fire(&[0, 1]),
            BTreeSet::from([tuple(&[0], &[1], rate("flow"))]),
        )],
        ChannelKind::LossySync => vec![
            (
                var(0) & var(1),
                fire(&[0, 1]),
                BTreeSet::from([tuple(&[0], &[1], rate("flow"))]),
            ),
            (
                var(0) & !var(1),
                fire(&[0]),
                BTreeSet::from([tuple(&[0], &[], rate("loss"))]),
            ),
        ],
        ChannelKind::SyncDrain => vec![(
            var(0) & var(1),
            fire(&[0, 1]),
            BTreeSet::from([tuple(&[0, 1], &[], rate("drain"))]),
        )],
        ChannelKind::Merger => vec![
            (
                var(0) & !var(1) & var(2),
                fire(&[0, 2]),
                BTreeSet::from([tuple(&[0], &[2], rate("left"))]),
            ),
            (
                !var(0) & var(1) & var(2),
                fire(&[1, 2]),
                BTreeSet::from([tuple(&[1], &[2], rate("right"))]),
            ),
        ],
        ChannelKind::Replicator => vec![(
            var(0) & var(1) & var(2),
            fire(&[0, 1, 2]),
            BTreeSet::from([tuple(&[0], &[1, 2], rate("flow"))]),
        )],
        ChannelKind::Fifo1 => {
            let e = StateId::channel_atom(channel, "e");
            let f = StateId::channel_atom(channel, "f");
            let alphabet: BTreeSet<NodeName> = nodes.iter().cloned().collect();
            let in_tuple = FlowTuple {
                inputs: fire(&[0]),
                outputs: BTreeSet::new(),
                rate: rate("in").value,
                rate_name: rate("in").name,
                effect: BTreeMap::from([(channel, (e.clone(), f.clone()))]),
            };
            let out_tuple = FlowTuple {
                inputs: BTreeSet::new(),
                outputs: fire(&[1]),
                rate: rate("out").value,
                rate_name: rate("out").name,
                effect: BTreeMap::from([(channel, (f.clone(), e.clone()))]),
            };
            let automaton = ReoAutomaton::new(
                alphabet,
                BTreeSet::from([e.clone(), f.clone()]),
                e.clone(),
                vec![
                    ReoTransition {
                        source: e.clone(),
                        guard: var(0),
                        firing: fire(&[0]),
                        target: f.clone(),
                    },
                    ReoTransition {
                        source: f,
                        guard: var(1),
                        firing: fire(&[1]),
                        target: e,
                    },
                ],
            )?;
            return StochasticReoAutomaton::new(
                automaton,
                vec![BTreeSet::from([in_tuple]), BTreeSet::from([out_tuple])],
                BTreeMap::new(),
            );
        }
    };

    let alphabet: BTreeSet<NodeName> = nodes.iter().cloned().collect();
    let mut transitions = Vec::new();
    let mut tuple_sets = Vec::new();
    for (guard, firing, tuples) in single_state {
        transitions.push(ReoTransition {
            source: q.clone(),
            guard,
            firing,
            target: q.clone(),
        });
        tuple_sets.push(tuples);
    }
    let automaton = ReoAutomaton::new(
        alphabet,
        BTreeSet::from([q.clone()]),
        q,
        transitions,
    )?;
    StochasticReoAutomaton::new(automaton, tuple_sets, BTreeMap::new())
}

/// A transition paired with its tuple set — the unit the stochastic
/// composition functions manipulate.
type Entry = (ReoTransition, BTreeSet<FlowTuple>);

/// Appends an entry unless the guard is unsatisfiable or an equivalent
/// entry (same endpoints, firing, and tuples, equivalent guard) exists.
fn push_entry(entries: &mut Vec<Entry>, entry: Entry) {
    let (t, tuples) = &entry;
    if !t.guard.is_satisfiable() {
        return;
    }
    let duplicate = entries.iter().any(|(u, utuples)| {
        u.source == t.source
            && u.target == t.target
            && u.firing == t.firing
            && utuples == tuples
            && u.guard.equivalent(&t.guard)
    });
    if !duplicate {
        entries.push(entry);
    }
}

fn assemble(
    alphabet: BTreeSet<NodeName>,
    states: BTreeSet<StateId>,
    initial: StateId,
    entries: Vec<Entry>,
    arrival_rates: BTreeMap<NodeName, Rate>,
    warnings: Vec<String>,
) -> Result<StochasticReoAutomaton, StochError> {
    let (transitions, tuples): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
    let automaton = ReoAutomaton::new(alphabet, states, initial, transitions)?;
    let mut s = StochasticReoAutomaton::new(automaton, tuples, arrival_rates)?;
    s.warnings = warnings;
    Ok(s)
}

/// The product of two stochastic connectors over disjoint alphabets.
///
/// The underlying automaton is the plain product; a joint transition's
/// tuple set is the union of its parents' sets, a solo transition keeps its
/// single parent's set. Arrival-rate maps are unioned (their domains are
/// disjoint along with the alphabets).
pub fn product_s(
    s1: &StochasticReoAutomaton,
    s2: &StochasticReoAutomaton,
) -> Result<StochasticReoAutomaton, StochError> {
    let (a1, a2) = (&s1.automaton, &s2.automaton);
    if let Some(n) = a1.alphabet.intersection(&a2.alphabet).next() {
        return Err(AutomatonError::AlphabetsOverlap(n.clone()).into());
    }
    let alphabet: BTreeSet<_> = a1.alphabet.union(&a2.alphabet).cloned().collect();
    let mut states = BTreeSet::new();
    for p in &a1.states {
        for q in &a2.states {
            states.insert(StateId::pair(p.clone(), q.clone()));
        }
    }
    let outgoing = |s: &StochasticReoAutomaton, state: &StateId| -> Vec<Entry> {
        s.entries()
            .filter(|(t, _)| t.source == *state)
            .map(|(t, tu)| (t.clone(), tu.clone()))
            .collect()
    };
    let mut entries = Vec::new();
    for p in &a1.states {
        for q in &a2.states {
            let source = StateId::pair(p.clone(), q.clone());
            let left = outgoing(s1, p);
            let right = outgoing(s2, q);
            for (t1, tu1) in &left {
                for (t2, tu2) in &right {
                    push_entry(
                        &mut entries,
                        (
                            ReoTransition {
                                source: source.clone(),
                                guard: t1.guard.clone() & t2.guard.clone(),
                                firing: t1.firing.union(&t2.firing).cloned().collect(),
                                target: StateId::pair(t1.target.clone(), t2.target.clone()),
                            },
                            tu1.union(tu2).cloned().collect(),
                        ),
                    );
                }
            }
            let right_blocked = a2.blocked_guard(q);
            for (t1, tu1) in &left {
                push_entry(
                    &mut entries,
                    (
                        ReoTransition {
                            source: source.clone(),
                            guard: t1.guard.clone() & right_blocked.clone(),
                            firing: t1.firing.clone(),
                            target: StateId::pair(t1.target.clone(), q.clone()),
                        },
                        tu1.clone(),
                    ),
                );
            }
            let left_blocked = a1.blocked_guard(p);
            for (t2, tu2) in &right {
                push_entry(
                    &mut entries,
                    (
                        ReoTransition {
                            source: source.clone(),
                            guard: left_blocked.clone() & t2.guard.clone(),
                            firing: t2.firing.clone(),
                            target: StateId::pair(p.clone(), t2.target.clone()),
                        },
                        tu2.clone(),
                    ),
                );
            }
        }
    }
    let mut arrival_rates = s1.arrival_rates.clone();
    arrival_rates.extend(s2.arrival_rates.clone());
    let mut warnings = s1.warnings.clone();
    warnings.extend(s2.warnings.iter().cloned());
    assemble(
        alphabet,
        states,
        StateId::pair(a1.initial.clone(), a2.initial.clone()),
        entries,
        arrival_rates,
        warnings,
    )
}

/// Splits every guard into normal-form clauses, each clause keeping its
/// transition's tuple set.
fn normalize_s(s: &StochasticReoAutomaton) -> Vec<Entry> {
    let mut entries = Vec::new();
    for (t, tuples) in s.entries() {
        for clause in t.guard.dnf() {
            push_entry(
                &mut entries,
                (
                    ReoTransition {
                        source: t.source.clone(),
                        guard: clause.to_guard(),
                        firing: t.firing.clone(),
                        target: t.target.clone(),
                    },
                    tuples.clone(),
                ),
            );
        }
    }
    entries
}

/// Synchronises two plugged-together nodes of a stochastic connector.
///
/// The underlying automaton is synchronised as usual; each surviving
/// transition's tuples gather the joined pair into any node set that
/// touches it, so the pair keeps firing as one unit inside the tuples.
/// Arrival rates for the two nodes are dropped — they are internal now.
///
/// Plugging expects one sink-side end and one source-side end; a join that
/// does not look like that structurally (judged by where the nodes appear
/// across tuple inputs and outputs) is recorded as a warning, not an error:
/// the surviving guards already enforce the semantic constraint.
pub fn synchronize_s(
    s: &StochasticReoAutomaton,
    a: &NodeName,
    b: &NodeName,
) -> Result<StochasticReoAutomaton, StochError> {
    if a == b {
        return Err(AutomatonError::SynchronizeSameNode(a.clone()).into());
    }
    for n in [a, b] {
        if !s.automaton.alphabet.contains(n) {
            return Err(AutomatonError::NameOutsideAlphabet(n.clone()).into());
        }
    }
    let mut warnings = s.warnings.clone();
    let mut input_ends = BTreeSet::new();
    let mut output_ends = BTreeSet::new();
    for set in &s.tuples {
        for tuple in set {
            input_ends.extend(tuple.inputs.iter().cloned());
            output_ends.extend(tuple.outputs.iter().cloned());
        }
    }
    let sink_side = |n: &NodeName| output_ends.contains(n) && !input_ends.contains(n);
    let source_side = |n: &NodeName| input_ends.contains(n) && !output_ends.contains(n);
    if !((sink_side(a) && source_side(b)) || (sink_side(b) && source_side(a))) {
        warnings.push(format!(
            "joining `{a}` and `{b}`: expected one sink-side and one source-side end"
        ));
    }

    let pair = BTreeSet::from([a.clone(), b.clone()]);
    let unrequested = !Guard::var(a.clone()) & !Guard::var(b.clone());
    let mut entries = Vec::new();
    for (t, tuples) in normalize_s(s) {
        if t.guard.implies(&unrequested) {
            continue;
        }
        if t.firing.contains(a) != t.firing.contains(b) {
            continue;
        }
        let guard = t
            .guard
            .delete_names(&pair)
            .expect("normalised guards are clauses");
        push_entry(
            &mut entries,
            (
                ReoTransition {
                    source: t.source,
                    guard,
                    firing: t.firing.difference(&pair).cloned().collect(),
                    target: t.target,
                },
                tuples.iter().map(|t| t.synchronized(&pair)).collect(),
            ),
        );
    }
    let mut arrival_rates = s.arrival_rates.clone();
    arrival_rates.remove(a);
    arrival_rates.remove(b);
    assemble(
        s.automaton.alphabet.clone(),
        s.automaton.states.clone(),
        s.automaton.initial.clone(),
        entries,
        arrival_rates,
        warnings,
    )
}

/// Validates a stochastic connector: the underlying automaton's conditions,
/// plus rate totality and tuple well-formedness. Violations are collected,
/// never raised.
pub fn validate_s(s: &StochasticReoAutomaton) -> ValidationReport {
    let mut report = s.automaton.validate();
    for node in s.boundary_nodes() {
        if !s.arrival_rates.contains_key(&node) {
            report
                .violations
                .push(Violation::MissingArrivalRate { node });
        }
    }
    for (node, rate) in &s.arrival_rates {
        if !rate.is_valid() {
            report.violations.push(Violation::NonPositiveRate {
                context: format!("arrival rate at `{node}` is {rate}"),
            });
        }
    }
    for (i, (t, tuples)) in s.entries().enumerate() {
        if tuples.is_empty() {
            report.violations.push(Violation::MissingTuples { transition: i });
        }
        for tuple in tuples {
            if !tuple.rate.is_valid() {
                report.violations.push(Violation::NonPositiveRate {
                    context: format!("rate {} on transition {i} is {}", tuple.rate_name, tuple.rate),
                });
            }
            if !tuple.inputs.is_disjoint(&tuple.outputs) {
                report.violations.push(Violation::OverlappingTupleNodes {
                    transition: i,
                    detail: format!("{tuple} on {t}"),
                });
            }
        }
    }
    report
}

/// Decides behavioural equivalence of two stochastic connectors: the
/// underlying automata must be bisimilar through states whose matched
/// transitions carry the same observable tuple content — node sets and
/// rate values — and the arrival-rate maps must agree. Rate labels and
/// per-channel effect bookkeeping are presentation, not behaviour: two
/// connectors that differ only in declaration order stay equivalent.
pub fn bisimilar_s(
    s1: &StochasticReoAutomaton,
    s2: &StochasticReoAutomaton,
) -> Result<bool, StochError> {
    let (a1, a2) = (&s1.automaton, &s2.automaton);
    if a1.alphabet != a2.alphabet {
        return Err(AutomatonError::AlphabetMismatch.into());
    }
    if s1.arrival_rates != s2.arrival_rates {
        return Ok(false);
    }
    let mut relevant = BTreeSet::new();
    for t in a1.transitions.iter().chain(&a2.transitions) {
        relevant.extend(t.guard.vars());
        relevant.extend(t.firing.iter().cloned());
    }
    let universe = atoms(&relevant);

    let union_states: Vec<(bool, &StateId)> = a1
        .states
        .iter()
        .map(|s| (false, s))
        .chain(a2.states.iter().map(|s| (true, s)))
        .collect();
    let index: BTreeMap<(bool, &StateId), usize> = union_states
        .iter()
        .enumerate()
        .map(|(i, &(side, s))| ((side, s), i))
        .collect();

    type TupleView = BTreeSet<(BTreeSet<NodeName>, BTreeSet<NodeName>, Rate)>;
    let observe = |tuples: &BTreeSet<FlowTuple>| -> TupleView {
        tuples
            .iter()
            .map(|t| (t.inputs.clone(), t.outputs.clone(), t.rate))
            .collect()
    };
    type Sig = BTreeSet<(Atom, BTreeSet<NodeName>, TupleView, usize)>;
    let mut block: Vec<usize> = vec![0; union_states.len()];
    loop {
        let signature = |i: usize| -> Sig {
            let (side, state) = union_states[i];
            let s = if side { s2 } else { s1 };
            let mut sig = BTreeSet::new();
            for (t, tuples) in s.entries().filter(|(t, _)| t.source == *state) {
                for atom in &universe {
                    if atom.satisfies(&t.guard).expect("atom covers guard vars") {
                        sig.insert((
                            atom.clone(),
                            t.firing.clone(),
                            observe(tuples),
                            block[index[&(side, &t.target)]],
                        ));
                    }
                }
            }
            sig
        };
        let mut next_ids: BTreeMap<(usize, Sig), usize> = BTreeMap::new();
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
    Ok(block[index[&(false, &a1.initial)]] == block[index[&(true, &a2.initial)]])
}

/// Graphviz rendering with tuple sets on the edges. Deterministic output.
pub fn to_dot(s: &StochasticReoAutomaton) -> String {
    let mut out = String::from("digraph connector {\n  rankdir=LR;\n  node [shape=circle];\n");
    out.push_str("  __start [shape=point];\n");
    for state in &s.automaton.states {
        out.push_str(&format!("  \"{state}\";\n"));
    }
    out.push_str(&format!("  __start -> \"{}\";\n", s.automaton.initial));
    let mut edges: Vec<String> = s
        .entries()
        .map(|(t, tuples)| {
            format!(
                "  \"{}\" -> \"{}\" [label=\"{}|{} {}\"];\n",
                t.source,
                t.target,
                t.guard.render(),
                crate::automaton::render_names(&t.firing),
                render_tuple_set(tuples)
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
