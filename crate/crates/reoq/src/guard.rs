//! Boolean guards over node names.
//!
//! A guard describes which combinations of pending I/O requests enable a
//! transition. Guards form the free Boolean algebra over the alphabet of
//! node names; the implication order `g1 ≤ g2` (meaning `g1 ∧ g2 = g1`) is
//! decided by enumerating truth assignments of the mentioned variables.
//! Alphabets in this domain are small (tens of nodes at most), so
//! enumeration doubles as the semantic oracle for everything downstream.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{BitAnd, BitOr, Not};

use thiserror::Error;

/// Errors for guard evaluation and clause-only operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GuardError {
    /// A variable of the guard is outside the atom's alphabet.
    #[error("unknown variable `{0}` (not in the atom's alphabet)")]
    UnknownVariable(NodeName),
    /// An operation that requires a conjunction of literals got something else.
    #[error("guard `{0}` is not a conjunction of literals")]
    NotAClause(String),
}

/// An interned node (port) name.
///
/// Names are non-empty strings, unique within an automaton's alphabet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeName(String);

impl NodeName {
    /// Creates a node name. Panics on an empty string (programming error).
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        assert!(!id.is_empty(), "node names must be non-empty");
        NodeName(id)
    }

    /// The textual label.
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeName {
    fn from(s: &str) -> Self {
        NodeName::new(s)
    }
}

impl From<String> for NodeName {
    fn from(s: String) -> Self {
        NodeName::new(s)
    }
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A Boolean formula over node names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Guard {
    /// Always true.
    Top,
    /// Always false.
    Bottom,
    /// A single node variable.
    Var(NodeName),
    /// Negation.
    Not(Box<Guard>),
    /// Conjunction.
    And(Box<Guard>, Box<Guard>),
    /// Disjunction.
    Or(Box<Guard>, Box<Guard>),
}

impl Guard {
    /// Variable guard for a node name.
    pub fn var(name: impl Into<NodeName>) -> Self {
        Guard::Var(name.into())
    }

    /// Conjunction of an iterator of guards; empty yields `Top`.
    pub fn conj(gs: impl IntoIterator<Item = Guard>) -> Self {
        gs.into_iter()
            .reduce(|l, r| l & r)
            .unwrap_or(Guard::Top)
    }

    /// Disjunction of an iterator of guards; empty yields `Bottom`.
    pub fn disj(gs: impl IntoIterator<Item = Guard>) -> Self {
        gs.into_iter()
            .reduce(|l, r| l | r)
            .unwrap_or(Guard::Bottom)
    }

    /// The set of variables mentioned in the formula.
    pub fn vars(&self) -> BTreeSet<NodeName> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<NodeName>) {
        match self {
            Guard::Top | Guard::Bottom => {}
            Guard::Var(n) => {
                out.insert(n.clone());
            }
            Guard::Not(g) => g.collect_vars(out),
            Guard::And(l, r) | Guard::Or(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// Evaluates under a total assignment.
    ///
    /// Errors if the formula mentions a variable outside the atom's alphabet.
    pub fn eval(&self, atom: &Atom) -> Result<bool, GuardError> {
        match self {
            Guard::Top => Ok(true),
            Guard::Bottom => Ok(false),
            Guard::Var(n) => atom
                .get(n)
                .ok_or_else(|| GuardError::UnknownVariable(n.clone())),
            Guard::Not(g) => Ok(!g.eval(atom)?),
            Guard::And(l, r) => Ok(l.eval(atom)? && r.eval(atom)?),
            Guard::Or(l, r) => Ok(l.eval(atom)? || r.eval(atom)?),
        }
    }

    /// Evaluates with a lookup function assumed total on the mentioned variables.
    fn eval_with(&self, lookup: &impl Fn(&NodeName) -> bool) -> bool {
        match self {
            Guard::Top => true,
            Guard::Bottom => false,
            Guard::Var(n) => lookup(n),
            Guard::Not(g) => !g.eval_with(lookup),
            Guard::And(l, r) => l.eval_with(lookup) && r.eval_with(lookup),
            Guard::Or(l, r) => l.eval_with(lookup) || r.eval_with(lookup),
        }
    }

    /// True iff some assignment of the mentioned variables satisfies the formula.
    ///
    /// Variables outside the formula cannot influence its value, so
    /// enumerating only the mentioned ones is sound.
    pub fn is_satisfiable(&self) -> bool {
        let vars: Vec<NodeName> = self.vars().into_iter().collect();
        let n = vars.len();
        assert!(n < usize::BITS as usize, "alphabet too large to enumerate");
        (0u64..(1u64 << n)).any(|mask| {
            self.eval_with(&|name| {
                let idx = vars.iter().position(|v| v == name).unwrap();
                mask & (1 << idx) != 0
            })
        })
    }

    /// The implication order: true iff every satisfying assignment of `self`
    /// also satisfies `other` (equivalently `self ∧ other = self`).
    pub fn implies(&self, other: &Guard) -> bool {
        !(self.clone() & !other.clone()).is_satisfiable()
    }

    /// Semantic equivalence (mutual implication).
    pub fn equivalent(&self, other: &Guard) -> bool {
        self.implies(other) && other.implies(self)
    }

    /// Structural view of the guard as a conjunction of literals, if it is one.
    ///
    /// `Top` is the empty clause. Returns `None` for anything containing
    /// `Or`, `Bottom`, nested negation, or a repeated contradictory literal.
    pub fn as_clause(&self) -> Option<Clause> {
        let mut clause = Clause::top();
        if self.collect_literals(&mut clause) {
            Some(clause)
        } else {
            None
        }
    }

    fn collect_literals(&self, clause: &mut Clause) -> bool {
        match self {
            Guard::Top => true,
            Guard::Var(n) => {
                !clause.negatives.contains(n) && {
                    clause.positives.insert(n.clone());
                    true
                }
            }
            Guard::Not(g) => match g.as_ref() {
                Guard::Var(n) => {
                    !clause.positives.contains(n) && {
                        clause.negatives.insert(n.clone());
                        true
                    }
                }
                _ => false,
            },
            Guard::And(l, r) => l.collect_literals(clause) && r.collect_literals(clause),
            _ => false,
        }
    }

    /// Disjunctive normal form as a set of non-contradictory clauses.
    ///
    /// The result is semantically equivalent to the input; contradictory
    /// clauses are dropped and subsumed clauses (supersets of another
    /// clause's literals) removed. `Bottom` yields the empty set, `Top` the
    /// set containing the empty clause.
    pub fn dnf(&self) -> BTreeSet<Clause> {
        absorb(self.dnf_rec(false))
    }

    fn dnf_rec(&self, negated: bool) -> BTreeSet<Clause> {
        match (self, negated) {
            (Guard::Top, false) | (Guard::Bottom, true) => {
                BTreeSet::from([Clause::top()])
            }
            (Guard::Top, true) | (Guard::Bottom, false) => BTreeSet::new(),
            (Guard::Var(n), _) => {
                let mut c = Clause::top();
                if negated {
                    c.negatives.insert(n.clone());
                } else {
                    c.positives.insert(n.clone());
                }
                BTreeSet::from([c])
            }
            (Guard::Not(g), _) => g.dnf_rec(!negated),
            (Guard::And(l, r), false) | (Guard::Or(l, r), true) => {
                cross_merge(&l.dnf_rec(negated), &r.dnf_rec(negated))
            }
            (Guard::And(l, r), true) | (Guard::Or(l, r), false) => {
                let mut out = l.dnf_rec(negated);
                out.extend(r.dnf_rec(negated));
                absorb(out)
            }
        }
    }

    /// Removes all literals over `names` from a clause guard.
    ///
    /// Deleting every literal yields `Top`. Errors on non-clause input;
    /// callers normalize first.
    pub fn delete_names(&self, names: &BTreeSet<NodeName>) -> Result<Guard, GuardError> {
        let clause = self
            .as_clause()
            .ok_or_else(|| GuardError::NotAClause(self.render()))?;
        Ok(clause.delete_names(names).to_guard())
    }

    /// Compact textual rendering: DNF clauses joined by `|`, literals
    /// concatenated with `!` marking negation (e.g. `a!b`); `1`/`0` for the
    /// constants.
    pub fn render(&self) -> String {
        let clauses = self.dnf();
        if clauses.is_empty() {
            return "0".to_string();
        }
        clauses
            .iter()
            .map(Clause::render)
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl BitAnd for Guard {
    type Output = Guard;
    fn bitand(self, rhs: Guard) -> Guard {
        Guard::And(Box::new(self), Box::new(rhs))
    }
}

impl BitOr for Guard {
    type Output = Guard;
    fn bitor(self, rhs: Guard) -> Guard {
        Guard::Or(Box::new(self), Box::new(rhs))
    }
}

impl Not for Guard {
    type Output = Guard;
    fn not(self) -> Guard {
        Guard::Not(Box::new(self))
    }
}

/// Pairwise conjunction of two clause sets, dropping contradictions.
fn cross_merge(left: &BTreeSet<Clause>, right: &BTreeSet<Clause>) -> BTreeSet<Clause> {
    let mut out = BTreeSet::new();
    for l in left {
        for r in right {
            if let Some(m) = l.merge(r) {
                out.insert(m);
            }
        }
    }
    absorb(out)
}

/// Removes clauses subsumed by a smaller clause of the same set.
fn absorb(clauses: BTreeSet<Clause>) -> BTreeSet<Clause> {
    clauses
        .iter()
        .filter(|c| {
            !clauses
                .iter()
                .any(|other| *other != **c && other.subsumes(c))
        })
        .cloned()
        .collect()
}

/// The conjunction of all node names in a set; the empty set yields `Top`.
pub fn hat(names: &BTreeSet<NodeName>) -> Guard {
    Guard::conj(names.iter().cloned().map(Guard::Var))
}

/// All `2^|Σ|` total truth assignments over an alphabet.
pub fn atoms(alphabet: &BTreeSet<NodeName>) -> Vec<Atom> {
    let names: Vec<NodeName> = alphabet.iter().cloned().collect();
    let n = names.len();
    assert!(n < usize::BITS as usize, "alphabet too large to enumerate");
    (0u64..(1u64 << n))
        .map(|mask| {
            Atom {
                assignment: names
                    .iter()
                    .enumerate()
                    .map(|(i, name)| (name.clone(), mask & (1 << i) != 0))
                    .collect(),
            }
        })
        .collect()
}

/// A total truth assignment over a fixed alphabet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Atom {
    assignment: BTreeMap<NodeName, bool>,
}

impl Atom {
    /// Builds the atom over `alphabet` that is true exactly on `trues`.
    ///
    /// Panics if `trues` is not a subset of the alphabet.
    pub fn from_true_set(alphabet: &BTreeSet<NodeName>, trues: &BTreeSet<NodeName>) -> Self {
        assert!(
            trues.is_subset(alphabet),
            "true-set must lie inside the alphabet"
        );
        Atom {
            assignment: alphabet
                .iter()
                .map(|n| (n.clone(), trues.contains(n)))
                .collect(),
        }
    }

    /// The value assigned to a name, if it belongs to the alphabet.
    pub fn get(&self, name: &NodeName) -> Option<bool> {
        self.assignment.get(name).copied()
    }

    /// The alphabet this atom is defined on.
    pub fn alphabet(&self) -> BTreeSet<NodeName> {
        self.assignment.keys().cloned().collect()
    }

    /// The names assigned true.
    pub fn true_set(&self) -> BTreeSet<NodeName> {
        self.assignment
            .iter()
            .filter(|(_, &v)| v)
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Restriction to a sub-alphabet.
    pub fn restrict(&self, alphabet: &BTreeSet<NodeName>) -> Atom {
        Atom {
            assignment: self
                .assignment
                .iter()
                .filter(|(n, _)| alphabet.contains(*n))
                .map(|(n, &v)| (n.clone(), v))
                .collect(),
        }
    }

    /// True iff the guard holds under this assignment (errors on unknown variables).
    pub fn satisfies(&self, g: &Guard) -> Result<bool, GuardError> {
        g.eval(self)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in &self.assignment {
            if !v {
                f.write_str("!")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

/// A conjunction of literals: a set of positive and a set of negative names.
///
/// The two sets are disjoint by construction; a would-be contradictory
/// clause denotes `Bottom` and is dropped wherever clauses are produced.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Clause {
    /// Names that must be present.
    pub positives: BTreeSet<NodeName>,
    /// Names that must be absent.
    pub negatives: BTreeSet<NodeName>,
}

impl Clause {
    /// The empty clause (no literals), denoting `Top`.
    pub fn top() -> Self {
        Clause {
            positives: BTreeSet::new(),
            negatives: BTreeSet::new(),
        }
    }

    /// Builds a clause from positive and negative name lists.
    ///
    /// Panics if the two sets overlap (such a clause denotes `Bottom` and
    /// must not be constructed).
    pub fn new(
        positives: impl IntoIterator<Item = NodeName>,
        negatives: impl IntoIterator<Item = NodeName>,
    ) -> Self {
        let clause = Clause {
            positives: positives.into_iter().collect(),
            negatives: negatives.into_iter().collect(),
        };
        assert!(
            clause.positives.is_disjoint(&clause.negatives),
            "contradictory clause"
        );
        clause
    }

    /// Conjunction of two clauses; `None` if the result is contradictory.
    pub fn merge(&self, other: &Clause) -> Option<Clause> {
        let positives: BTreeSet<_> = self.positives.union(&other.positives).cloned().collect();
        let negatives: BTreeSet<_> = self.negatives.union(&other.negatives).cloned().collect();
        positives
            .is_disjoint(&negatives)
            .then_some(Clause { positives, negatives })
    }

    /// True iff this clause's literals are a subset of the other's
    /// (so this clause is implied by — and absorbs — the other).
    pub fn subsumes(&self, other: &Clause) -> bool {
        self.positives.is_subset(&other.positives) && self.negatives.is_subset(&other.negatives)
    }

    /// The clause as a guard formula.
    pub fn to_guard(&self) -> Guard {
        Guard::conj(
            self.positives
                .iter()
                .cloned()
                .map(Guard::Var)
                .chain(self.negatives.iter().cloned().map(|n| !Guard::Var(n))),
        )
    }

    /// Removes all literals over `names`; removing everything leaves `Top`.
    pub fn delete_names(&self, names: &BTreeSet<NodeName>) -> Clause {
        Clause {
            positives: self.positives.difference(names).cloned().collect(),
            negatives: self.negatives.difference(names).cloned().collect(),
        }
    }

    /// True iff the atom satisfies every literal.
    pub fn satisfied_by(&self, atom: &Atom) -> bool {
        self.positives.iter().all(|n| atom.get(n) == Some(true))
            && self.negatives.iter().all(|n| atom.get(n) == Some(false))
    }

    /// Literal rendering: names in order, `!` before negated ones; `1` when empty.
    pub fn render(&self) -> String {
        if self.positives.is_empty() && self.negatives.is_empty() {
            return "1".to_string();
        }
        let mut names: Vec<(&NodeName, bool)> = self
            .positives
            .iter()
            .map(|n| (n, true))
            .chain(self.negatives.iter().map(|n| (n, false)))
            .collect();
        names.sort();
        let mut out = String::new();
        for (n, positive) in names {
            if !positive {
                out.push('!');
            }
            out.push_str(n.as_str());
        }
        out
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
