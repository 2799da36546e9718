//! Randomized law sheet for the composition algebra.
//!
//! Where `acceptance.rs` pins published tables and tolerances, this suite
//! checks the *laws* the library leans on, over randomly generated inputs:
//!
//! - guard logic agrees with exhaustive truth tables (normal form,
//!   implication, equivalence, literal deletion as projection);
//! - the blocking product and node joins behave algebraically
//!   (commutativity, associativity, order independence) up to bisimilarity;
//! - joining never invents flow: every surviving tuple keeps the rate name
//!   and value it was born with;
//! - series–parallel delay expressions round-trip through their induced
//!   orders, and the order combinatorics (linear extensions, down-sets)
//!   match brute-force enumeration;
//! - the steady-state solver returns a genuine stationary distribution on
//!   arbitrary strongly connected chains, on both solver paths.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::sample::Index;

use reoq::analysis::{generator, steady_state, steady_state_with_limit};
use reoq::automaton::{ChannelId, ReoAutomaton, StateId};
use reoq::ctmc::{Ctmc, CtmcState, CtmcTransition, Provenance};
use reoq::delay::{equivalent, ext, render, DelaySeq};
use reoq::guard::{atoms, hat, Guard, NodeName};
use reoq::stoch::{
    bisimilar_s, primitive, product_s, render_tuple_set, synchronize_s, validate_s, ChannelKind,
    FlowTuple, NamedRate, Rate, StochasticReoAutomaton,
};

fn n(s: &str) -> NodeName {
    NodeName::new(s)
}

// -- guard logic against truth tables --

/// The four-letter alphabet every guard property ranges over.
fn sigma() -> BTreeSet<NodeName> {
    ["a", "b", "c", "d"].into_iter().map(n).collect()
}

/// A random guard tree over `a..d` with bounded depth.
fn arb_guard() -> impl Strategy<Value = Guard> {
    let leaf = prop_oneof![
        Just(Guard::Top),
        Just(Guard::Bottom),
        proptest::sample::select(vec!["a", "b", "c", "d"]).prop_map(Guard::var),
    ];
    leaf.prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|g| !g),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| l & r),
            (inner.clone(), inner).prop_map(|(l, r)| l | r),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// The disjunctive normal form names exactly the satisfying assignments.
    #[test]
    fn prop_dnf_matches_truth_table(g in arb_guard()) {
        let clauses = g.dnf();
        for atom in atoms(&sigma()) {
            let direct = g.eval(&atom).unwrap();
            let via_dnf = clauses.iter().any(|c| c.satisfied_by(&atom));
            prop_assert_eq!(
                direct, via_dnf,
                "guard {} disagrees with its normal form at {:?}",
                g.render(), atom.true_set()
            );
        }
    }

    /// `equivalent` is pointwise agreement, and the classical rewrites
    /// (double negation, both De Morgan directions) are equivalences.
    #[test]
    fn prop_equivalence_is_pointwise_agreement(g in arb_guard(), h in arb_guard()) {
        let pointwise = atoms(&sigma())
            .iter()
            .all(|a| g.eval(a).unwrap() == h.eval(a).unwrap());
        prop_assert_eq!(g.equivalent(&h), pointwise);
        prop_assert!(g.equivalent(&!!g.clone()));
        prop_assert!((!(g.clone() & h.clone())).equivalent(&(!g.clone() | !h.clone())));
        prop_assert!((!(g.clone() | h.clone())).equivalent(&(!g & !h)));
    }

    /// `implies` is pointwise entailment; as a relation it is reflexive and
    /// transitive.
    #[test]
    fn prop_implication_is_pointwise(g in arb_guard(), h in arb_guard(), k in arb_guard()) {
        let pointwise = atoms(&sigma())
            .iter()
            .all(|a| !g.eval(a).unwrap() || h.eval(a).unwrap());
        prop_assert_eq!(g.implies(&h), pointwise);
        prop_assert!(g.implies(&g));
        if g.implies(&h) && h.implies(&k) {
            prop_assert!(g.implies(&k));
        }
    }

    /// Deleting names from a clause is existential projection: the shrunk
    /// clause accepts an assignment exactly when some extension over the
    /// deleted names satisfied the original.
    #[test]
    fn prop_clause_deletion_is_projection(g in arb_guard()) {
        let deleted: BTreeSet<NodeName> = [n("a"), n("b")].into();
        let remaining: BTreeSet<NodeName> = [n("c"), n("d")].into();
        for clause in g.dnf() {
            let shrunk = clause.delete_names(&deleted);
            for atom in atoms(&remaining) {
                let direct = shrunk.satisfied_by(&atom);
                let exists = atoms(&sigma())
                    .into_iter()
                    .filter(|full| full.restrict(&remaining) == atom)
                    .any(|full| clause.satisfied_by(&full));
                prop_assert_eq!(direct, exists, "clause {}", clause.render());
            }
        }
    }

    /// `hat` of a name set holds exactly when every name in the set fires.
    #[test]
    fn prop_hat_requires_every_name(mask in proptest::collection::vec(any::<bool>(), 4)) {
        let chosen: BTreeSet<NodeName> = sigma()
            .into_iter()
            .zip(&mask)
            .filter(|(_, keep)| **keep)
            .map(|(name, _)| name)
            .collect();
        let g = hat(&chosen);
        for atom in atoms(&sigma()) {
            prop_assert_eq!(g.eval(&atom).unwrap(), chosen.is_subset(&atom.true_set()));
        }
    }
}

// -- the blocking product up to bisimilarity --

/// One of the four two-ended channels, over nodes tagged so that separately
/// generated channels never share an end.
fn arb_channel(tag: usize) -> impl Strategy<Value = ReoAutomaton> {
    (0..4usize).prop_map(move |k| {
        let a = format!("p{tag}");
        let b = format!("q{tag}");
        match k {
            0 => ReoAutomaton::sync(a, b),
            1 => ReoAutomaton::lossy_sync(a, b),
            2 => ReoAutomaton::sync_drain(a, b),
            _ => ReoAutomaton::fifo1(a, b),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Normalization preserves behaviour and is a fixed point.
    #[test]
    fn prop_normalize_preserves_bisimilarity(a in arb_channel(1), b in arb_channel(2)) {
        let prod = a.product(&b).unwrap();
        let norm = prod.normalize();
        prop_assert!(norm.bisimilar(&prod).unwrap().initials_related);
        prop_assert_eq!(
            norm.normalize().transition_signatures(),
            norm.transition_signatures()
        );
    }

    /// The product is commutative and associative up to bisimilarity.
    #[test]
    fn prop_product_commutes_and_associates(
        a in arb_channel(1),
        b in arb_channel(2),
        c in arb_channel(3),
    ) {
        let ab = a.product(&b).unwrap();
        let ba = b.product(&a).unwrap();
        prop_assert!(ab.bisimilar(&ba).unwrap().initials_related);
        let left = ab.product(&c).unwrap();
        let right = a.product(&b.product(&c).unwrap()).unwrap();
        prop_assert!(left.bisimilar(&right).unwrap().initials_related);
    }

    /// The blocked guard of a state holds at exactly the request sets that
    /// enable none of its outgoing transitions.
    #[test]
    fn prop_blocked_guard_complements_outgoing(a in arb_channel(1), b in arb_channel(2)) {
        let prod = a.product(&b).unwrap();
        for q in &prod.states {
            let blocked = prod.blocked_guard(q);
            for atom in atoms(&prod.alphabet) {
                let enabled = prod.outgoing(q).any(|t| t.guard.eval(&atom).unwrap());
                prop_assert_eq!(blocked.eval(&atom).unwrap(), !enabled, "state {}", q);
            }
        }
    }

    /// The product of two well-formed channels is well-formed: solo moves
    /// guarded by the other side's blocked guard keep reactivity and
    /// uniformity intact.
    #[test]
    fn prop_product_preserves_wellformedness(a in arb_channel(1), b in arb_channel(2)) {
        prop_assert!(a.validate().is_clean());
        prop_assert!(b.validate().is_clean());
        prop_assert!(a.product(&b).unwrap().validate().is_clean());
    }
}

// -- joins of rated connectors --

/// The channel shapes the join laws range over. The two-way merge is left
/// out: with both of its inputs requested at once neither of its transitions
/// is enabled, so it is not uniform on its own and not a well-formed starting
/// point.
const KIND_POOL: [ChannelKind; 5] = [
    ChannelKind::Sync,
    ChannelKind::LossySync,
    ChannelKind::Fifo1,
    ChannelKind::SyncDrain,
    ChannelKind::Replicator,
];

/// A rated primitive over fresh `n{tag}*` nodes, with arrival rates on every
/// end so that validation is meaningful on anything composed from it.
fn arb_rated(tag: usize) -> impl Strategy<Value = StochasticReoAutomaton> {
    (
        0..KIND_POOL.len(),
        proptest::collection::vec(0.2f64..=5.0, 2),
        proptest::collection::vec(0.2f64..=5.0, 3),
    )
        .prop_map(move |(k, process, arrive)| {
            let kind = KIND_POOL[k];
            let nodes: Vec<NodeName> = (0..kind.arity())
                .map(|i| n(&format!("n{tag}{i}")))
                .collect();
            let rates: BTreeMap<String, NamedRate> = kind
                .rate_keys()
                .iter()
                .zip(&process)
                .map(|(key, value)| {
                    (key.to_string(), NamedRate::new(format!("{key}{tag}"), *value))
                })
                .collect();
            let arrivals: Vec<(NodeName, Rate)> = nodes
                .iter()
                .cloned()
                .zip(arrive.iter().map(|r| Rate(*r)))
                .collect();
            primitive(kind, &nodes, &rates, ChannelId(tag))
                .unwrap()
                .with_arrival_rates(arrivals)
                .unwrap()
        })
}

/// Everything observable about a rated connector: the rendered transition
/// table and the arrival rates.
fn signature(s: &StochasticReoAutomaton) -> (BTreeSet<String>, BTreeMap<NodeName, String>) {
    let table = s
        .entries()
        .map(|(t, tu)| format!("{t} {}", render_tuple_set(tu)))
        .collect();
    let arrivals = s
        .arrival_rates
        .iter()
        .map(|(node, r)| (node.clone(), format!("{}", r.value())))
        .collect();
    (table, arrivals)
}

/// The identity of a flow: its rate name together with its value.
fn flow_identities(s: &StochasticReoAutomaton) -> BTreeSet<(String, String)> {
    s.entries()
        .flat_map(|(_, tu)| tu.iter())
        .map(|t| (t.rate_name.clone(), format!("{}", t.rate.value())))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Joining two ends never invents flow: every tuple of the joined
    /// connector keeps the rate name and value of a tuple of a part.
    #[test]
    fn prop_join_preserves_flow_identity(
        p1 in arb_rated(1),
        p2 in arb_rated(2),
        i in any::<Index>(),
        j in any::<Index>(),
    ) {
        let pool: BTreeSet<(String, String)> =
            flow_identities(&p1).union(&flow_identities(&p2)).cloned().collect();
        let u = product_s(&p1, &p2).unwrap();
        let left: Vec<&NodeName> = p1.automaton.alphabet.iter().collect();
        let right: Vec<&NodeName> = p2.automaton.alphabet.iter().collect();
        let joined = synchronize_s(
            &u,
            left[i.index(left.len())],
            right[j.index(right.len())],
        )
        .unwrap();
        prop_assert!(flow_identities(&joined).is_subset(&pool));
        prop_assert!(validate_s(&joined).is_clean(), "{}", validate_s(&joined));
    }

    /// Two joins on disjoint end pairs commute, down to the exact tables.
    #[test]
    fn prop_disjoint_joins_commute(
        p1 in arb_rated(1),
        p2 in arb_rated(2),
        i in any::<Index>(),
        j in any::<Index>(),
    ) {
        let u = product_s(&p1, &p2).unwrap();
        let left: Vec<&NodeName> = p1.automaton.alphabet.iter().collect();
        let right: Vec<&NodeName> = p2.automaton.alphabet.iter().collect();
        let (a0, a1) = (
            left[i.index(left.len())],
            left[(i.index(left.len()) + 1) % left.len()],
        );
        let (b0, b1) = (
            right[j.index(right.len())],
            right[(j.index(right.len()) + 1) % right.len()],
        );
        let v1 = synchronize_s(&synchronize_s(&u, a0, b0).unwrap(), a1, b1).unwrap();
        let v2 = synchronize_s(&synchronize_s(&u, a1, b1).unwrap(), a0, b0).unwrap();
        prop_assert_eq!(signature(&v1), signature(&v2));
        prop_assert!(validate_s(&v1).is_clean(), "{}", validate_s(&v1));
    }

    /// A join of two ends and a product with an unrelated third connector
    /// can be applied in either order.
    #[test]
    fn prop_join_distributes_over_product(
        p1 in arb_rated(1),
        p2 in arb_rated(2),
        p3 in arb_rated(3),
        i in any::<Index>(),
        j in any::<Index>(),
    ) {
        let u = product_s(&p1, &p2).unwrap();
        let left: Vec<&NodeName> = p1.automaton.alphabet.iter().collect();
        let right: Vec<&NodeName> = p2.automaton.alphabet.iter().collect();
        let a = left[i.index(left.len())];
        let b = right[j.index(right.len())];
        let w1 = synchronize_s(&product_s(&u, &p3).unwrap(), a, b).unwrap();
        let w2 = product_s(&synchronize_s(&u, a, b).unwrap(), &p3).unwrap();
        prop_assert!(bisimilar_s(&w1, &w2).unwrap());
        prop_assert!(validate_s(&w1).is_clean() && validate_s(&w2).is_clean());
    }

    /// The rated product is commutative up to bisimilarity.
    #[test]
    fn prop_rated_product_commutes(p1 in arb_rated(1), p2 in arb_rated(2)) {
        let u = product_s(&p1, &p2).unwrap();
        let v = product_s(&p2, &p1).unwrap();
        prop_assert!(bisimilar_s(&u, &v).unwrap());
    }
}

// -- delay expressions and their induced orders --

/// `rates.len()` leaf tuples with distinct labels and pairwise disjoint
/// node sets, so that any expression over them is a valid firing plan.
fn leaf_tuples(rates: &[f64]) -> Vec<FlowTuple> {
    rates
        .iter()
        .enumerate()
        .map(|(i, r)| FlowTuple {
            inputs: [n(&format!("i{i}"))].into(),
            outputs: [n(&format!("o{i}"))].into(),
            rate: Rate(*r),
            rate_name: format!("θ{i}"),
            effect: BTreeMap::from([(ChannelId(i), (StateId::atom("q"), StateId::atom("q")))]),
        })
        .collect()
}

/// A random series–parallel expression using each leaf exactly once: split
/// the leaf list anywhere, compose the halves with `;` or `|`, recurse.
fn arb_expr_over(leaves: Vec<FlowTuple>) -> BoxedStrategy<DelaySeq> {
    if leaves.len() == 1 {
        let only = leaves.into_iter().next().unwrap();
        return Just(DelaySeq::tuple(only)).boxed();
    }
    (1..leaves.len(), any::<bool>())
        .prop_flat_map(move |(split, parallel)| {
            let left = leaves[..split].to_vec();
            let right = leaves[split..].to_vec();
            (arb_expr_over(left), arb_expr_over(right)).prop_map(move |(l, r)| {
                if parallel {
                    DelaySeq::par(l, r)
                } else {
                    DelaySeq::seq(l, r)
                }
            })
        })
        .boxed()
}

fn arb_delay_expr() -> impl Strategy<Value = DelaySeq> {
    (2..=6usize)
        .prop_flat_map(|k| proptest::collection::vec(0.2f64..=5.0, k))
        .prop_flat_map(|rates| arb_expr_over(leaf_tuples(&rates)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A series–parallel expression round-trips through its induced order:
    /// the rendering is exact and reproduces the same order.
    #[test]
    fn prop_series_parallel_round_trip(e in arb_delay_expr()) {
        let poset = e.induced_poset();
        let rendered = render(&poset);
        prop_assert!(rendered.exact, "inexact rendering of {}", e.render_tuples());
        let again = rendered.expr.induced_poset();
        prop_assert_eq!(&again.tuples, &poset.tuples);
        prop_assert_eq!(&again.precedence, &poset.precedence);
        prop_assert!(equivalent(&rendered.expr, &e));
    }

    /// Every linear extension is a permutation of the tuples that respects
    /// precedence, and minimality coincides with having no predecessors.
    #[test]
    fn prop_linear_extensions_respect_order(e in arb_delay_expr()) {
        let poset = e.induced_poset();
        let extensions = poset.linear_extensions();
        prop_assert!(!extensions.is_empty());
        for order in &extensions {
            let as_set: BTreeSet<FlowTuple> = order.iter().cloned().collect();
            prop_assert_eq!(&as_set, &poset.tuples);
            let position: BTreeMap<&FlowTuple, usize> =
                order.iter().enumerate().map(|(p, t)| (t, p)).collect();
            for (before, after) in &poset.precedence {
                prop_assert!(position[before] < position[after]);
            }
        }
        for t in &poset.tuples {
            prop_assert_eq!(
                poset.predecessors(t).is_empty(),
                poset.minimal_elements().contains(t)
            );
        }
    }

    /// `down_sets` returns exactly the downward-closed subsets.
    #[test]
    fn prop_down_sets_enumerate_closed_subsets(e in arb_delay_expr()) {
        let poset = e.induced_poset();
        let sets = poset.down_sets();
        prop_assert!(sets.contains(&BTreeSet::new()));
        prop_assert!(sets.contains(&poset.tuples));
        for set in &sets {
            prop_assert!(poset.is_downward_closed(set));
        }
        let tuples: Vec<&FlowTuple> = poset.tuples.iter().collect();
        let mut expected = 0usize;
        for mask in 0..(1usize << tuples.len()) {
            let subset: BTreeSet<FlowTuple> = tuples
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, t)| (*t).clone())
                .collect();
            if poset.is_downward_closed(&subset) {
                expected += 1;
            }
        }
        prop_assert_eq!(sets.len(), expected);
    }

    /// Tuples over pairwise disjoint nodes impose no order: their extension
    /// is an antichain with `2^n` down-sets.
    #[test]
    fn prop_disjoint_tuples_form_antichain(
        rates in proptest::collection::vec(0.2f64..=5.0, 1..=5),
    ) {
        let tuples: BTreeSet<FlowTuple> = leaf_tuples(&rates).into_iter().collect();
        let poset = ext(&tuples).unwrap();
        prop_assert!(poset.precedence.is_empty());
        prop_assert_eq!(poset.down_sets().len(), 1 << tuples.len());
        prop_assert_eq!(poset.minimal_elements(), tuples);
    }
}

// -- the steady-state solver on arbitrary strongly connected chains --

/// A strongly connected chain: a ring over `k` states plus random chords.
fn arb_ring_chain() -> impl Strategy<Value = Ctmc> {
    (2..=6usize)
        .prop_flat_map(|k| {
            (
                Just(k),
                proptest::collection::vec(0.2f64..=5.0, k),
                proptest::collection::vec((0..k, 0..k, 0.2f64..=5.0), 0..=4),
            )
        })
        .prop_map(|(k, ring, chords)| {
            let state =
                |i: usize| CtmcState::structural(StateId::atom(format!("s{i}")), BTreeSet::new());
            let mut transitions = Vec::new();
            let mut flow_rate_names = BTreeSet::new();
            let mut edge = |src: usize, dst: usize, rate: f64, name: String| {
                flow_rate_names.insert(name.clone());
                transitions.push(CtmcTransition {
                    source: state(src),
                    target: state(dst),
                    rate: Rate(rate),
                    provenance: Provenance::Flow(FlowTuple {
                        inputs: BTreeSet::new(),
                        outputs: BTreeSet::new(),
                        rate: Rate(rate),
                        rate_name: name,
                        effect: BTreeMap::new(),
                    }),
                });
            };
            for (i, rate) in ring.iter().enumerate() {
                edge(i, (i + 1) % k, *rate, format!("ring{i}"));
            }
            for (c, (src, dst, rate)) in chords.into_iter().enumerate() {
                if src != dst {
                    edge(src, dst, rate, format!("chord{c}"));
                }
            }
            transitions.sort();
            let states: BTreeSet<CtmcState> = (0..k).map(state).collect();
            let initial = states.first().cloned().unwrap();
            Ctmc {
                states,
                transitions,
                initial,
                flow_rate_names,
                arrival_rates: BTreeMap::new(),
                warnings: vec![],
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The solved vector is a genuine stationary distribution — nonnegative,
    /// normalized, annihilating the generator — and the dense and iterative
    /// paths agree on it.
    #[test]
    fn prop_steady_state_is_stationary(c in arb_ring_chain()) {
        let solved = steady_state(&c).unwrap();
        let g = generator(&c);
        let total: f64 = solved.probabilities.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        for p in &solved.probabilities {
            prop_assert!(*p >= 0.0);
        }
        for column in 0..g.n {
            let balance: f64 = (0..g.n)
                .map(|row| {
                    solved.probabilities[row] * g.entries.get(&(row, column)).copied().unwrap_or(0.0)
                })
                .sum();
            prop_assert!(balance.abs() <= 1e-8, "column {column} unbalanced: {balance}");
        }
        prop_assert!(solved.residual <= 1e-9);

        let iterative = steady_state_with_limit(&c, 0).unwrap();
        for (a, b) in solved.probabilities.iter().zip(&iterative.probabilities) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }
}
