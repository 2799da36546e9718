//! Textual connector descriptions.
//!
//! A connector file lists primitive channels, declares which nodes are
//! boundary nodes (with their request arrival rates), and joins internal
//! nodes pairwise. Elaboration builds each primitive, takes the product of
//! all of them, and synchronizes one join at a time — the same recipe as
//! composing by hand, so declaration order cannot change the behaviour
//! (results for permuted files are behaviourally equivalent).
//!
//! The grammar is line-oriented:
//!
//! ```text
//! # comment
//! rate γab = 4.0
//! boundary a @ 2.0
//! lossysync a b flow=γab loss=0.5
//! fifo1 c d in=5 out=6
//! join b c
//! ```
//!
//! Rates are decimal literals or symbols bound by `rate` lines, so one file
//! serves both a fixed analysis and a sweep. Every channel node must be
//! covered exactly once: declared as boundary, or joined to exactly one
//! other node.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::automaton::ChannelId;
use crate::guard::NodeName;
use crate::stoch::{
    primitive, product_s, synchronize_s, ChannelKind, NamedRate, Rate, StochError,
    StochasticReoAutomaton,
};

/// Errors from parsing or elaborating a connector description.
#[derive(Debug, Error, PartialEq)]
pub enum DslError {
    /// A line that does not fit the grammar, or a semantic slip local to
    /// one line (arity mismatch, unbound rate symbol, uncovered node, …).
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    /// A node covered twice: two channels, two joins, or boundary and join.
    #[error("line {line}: node `{node}` is already declared")]
    DuplicateNode { line: usize, node: NodeName },
    /// A channel kind the grammar does not know.
    #[error("line {line}: unknown channel kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    /// A join endpoint that names no channel node.
    #[error("line {line}: join references undeclared node `{node}`")]
    DanglingJoin { line: usize, node: NodeName },
    /// Elaborating an empty description.
    #[error("no channels declared; nothing to elaborate")]
    EmptyConnector,
    /// A composition step failed.
    #[error(transparent)]
    Composition(#[from] StochError),
}

/// A rate position in a file: a literal value or a symbol bound by a
/// `rate` line.
#[derive(Debug, Clone, PartialEq)]
pub enum RateRef {
    Literal(f64),
    Symbol(String),
}

impl fmt::Display for RateRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateRef::Literal(v) => write!(f, "{v}"),
            RateRef::Symbol(s) => f.write_str(s),
        }
    }
}

/// One channel declaration: kind, its nodes in positional order, and one
/// rate per rate key, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDecl {
    pub kind: ChannelKind,
    pub nodes: Vec<NodeName>,
    pub rates: Vec<(String, RateRef)>,
}

/// A parsed connector description.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConnectorSpec {
    pub rate_decls: Vec<(String, f64)>,
    pub boundary_decls: Vec<(NodeName, RateRef)>,
    pub channel_decls: Vec<ChannelDecl>,
    pub joins: Vec<(NodeName, NodeName)>,
}

/// Removes whitespace around `@` and `=` so `a @ 2` and `a@2` read alike.
fn tighten(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '@' || c == '=' {
            while out.ends_with(char::is_whitespace) {
                out.pop();
            }
            out.push(c);
            while chars.peek().is_some_and(|n| n.is_whitespace()) {
                chars.next();
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn kind_of(token: &str) -> Option<ChannelKind> {
    Some(match token {
        "sync" => ChannelKind::Sync,
        "lossysync" => ChannelKind::LossySync,
        "fifo1" => ChannelKind::Fifo1,
        "syncdrain" => ChannelKind::SyncDrain,
        "merger" => ChannelKind::Merger,
        "replicator" => ChannelKind::Replicator,
        _ => return None,
    })
}

fn parse_rate_ref(token: &str) -> RateRef {
    match token.parse::<f64>() {
        Ok(v) => RateRef::Literal(v),
        Err(_) => RateRef::Symbol(token.to_string()),
    }
}

/// Parses a connector description. All structural invariants are checked
/// here, with line numbers: node coverage, join sanity, rate bindings.
pub fn parse(text: &str) -> Result<ConnectorSpec, DslError> {
    let syntax = |line: usize, message: &str| DslError::Syntax {
        line,
        message: message.to_string(),
    };
    let mut spec = ConnectorSpec::default();
    // where each name was declared, for coverage and duplicate checks
    let mut channel_nodes: BTreeMap<NodeName, usize> = BTreeMap::new();
    let mut covered: BTreeMap<NodeName, usize> = BTreeMap::new();
    let mut rate_lines: BTreeMap<String, usize> = BTreeMap::new();
    let mut symbol_uses: Vec<(String, usize)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        let tight = tighten(body);
        let tokens: Vec<&str> = tight.split_whitespace().collect();
        let Some((&head, rest)) = tokens.split_first() else {
            continue;
        };
        match head {
            "rate" => {
                let joined = rest.join(" ");
                let (name, value) = joined
                    .split_once('=')
                    .ok_or_else(|| syntax(line, "expected `rate <name> = <value>`"))?;
                let name = name.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(syntax(line, "rate name must be a single word"));
                }
                let value: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| syntax(line, "rate value is not a number"))?;
                if rate_lines.insert(name.to_string(), line).is_some() {
                    return Err(syntax(line, &format!("rate `{name}` is bound twice")));
                }
                spec.rate_decls.push((name.to_string(), value));
            }
            "boundary" => {
                let joined = rest.join(" ");
                let (name, rate) = joined
                    .split_once('@')
                    .ok_or_else(|| syntax(line, "expected `boundary <node> @ <rate>`"))?;
                let name = name.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(syntax(line, "boundary node must be a single word"));
                }
                let rate = rate.trim();
                if rate.is_empty() || rate.contains(char::is_whitespace) {
                    return Err(syntax(line, "boundary rate must be a single word"));
                }
                let node = NodeName::from(name);
                if covered.insert(node.clone(), line).is_some() {
                    return Err(DslError::DuplicateNode { line, node });
                }
                let rate = parse_rate_ref(rate);
                if let RateRef::Symbol(s) = &rate {
                    symbol_uses.push((s.clone(), line));
                }
                spec.boundary_decls.push((node, rate));
            }
            "join" => {
                let [a, b] = rest else {
                    return Err(syntax(line, "expected `join <node> <node>`"));
                };
                let a = NodeName::from(*a);
                let b = NodeName::from(*b);
                if a == b {
                    return Err(DslError::DuplicateNode { line, node: a });
                }
                for node in [&a, &b] {
                    if covered.insert(node.clone(), line).is_some() {
                        return Err(DslError::DuplicateNode {
                            line,
                            node: node.clone(),
                        });
                    }
                }
                spec.joins.push((a, b));
            }
            other => {
                let Some(kind) = kind_of(other) else {
                    return Err(DslError::UnknownKind {
                        line,
                        kind: other.to_string(),
                    });
                };
                let arity = kind.arity();
                if rest.len() < arity {
                    return Err(syntax(line, &format!("{kind} takes {arity} nodes")));
                }
                let (node_tokens, rate_tokens) = rest.split_at(arity);
                let mut nodes = Vec::with_capacity(arity);
                for t in node_tokens {
                    if t.contains('=') {
                        return Err(syntax(line, &format!("{kind} takes {arity} nodes")));
                    }
                    let node = NodeName::from(*t);
                    if nodes.contains(&node) || channel_nodes.contains_key(&node) {
                        return Err(DslError::DuplicateNode { line, node });
                    }
                    nodes.push(node);
                }
                let mut rates = Vec::new();
                for t in rate_tokens {
                    let (key, value) = t
                        .split_once('=')
                        .ok_or_else(|| syntax(line, "expected `<key>=<rate>` after the nodes"))?;
                    if !kind.rate_keys().contains(&key) {
                        return Err(syntax(
                            line,
                            &format!("{kind} has no rate key `{key}`"),
                        ));
                    }
                    if rates.iter().any(|(k, _)| k == key) {
                        return Err(syntax(line, &format!("rate key `{key}` given twice")));
                    }
                    let rate = parse_rate_ref(value);
                    if let RateRef::Symbol(s) = &rate {
                        symbol_uses.push((s.clone(), line));
                    }
                    rates.push((key.to_string(), rate));
                }
                for key in kind.rate_keys() {
                    if !rates.iter().any(|(k, _)| k == key) {
                        return Err(syntax(line, &format!("{kind} needs a `{key}=` rate")));
                    }
                }
                for node in &nodes {
                    channel_nodes.insert(node.clone(), line);
                }
                spec.channel_decls.push(ChannelDecl { kind, nodes, rates });
            }
        }
    }

    // cross-line checks, reported at the offending line
    for (node, &line) in &covered {
        if !channel_nodes.contains_key(node) {
            if spec.joins.iter().any(|(a, b)| a == node || b == node) {
                return Err(DslError::DanglingJoin {
                    line,
                    node: node.clone(),
                });
            }
            return Err(DslError::Syntax {
                line,
                message: format!("boundary `{node}` names no channel node"),
            });
        }
    }
    for (node, &line) in &channel_nodes {
        if !covered.contains_key(node) {
            return Err(DslError::Syntax {
                line,
                message: format!("node `{node}` is neither boundary nor joined"),
            });
        }
    }
    for (symbol, line) in symbol_uses {
        if !rate_lines.contains_key(&symbol) {
            return Err(DslError::Syntax {
                line,
                message: format!("rate symbol `{symbol}` has no `rate {symbol} = …` binding"),
            });
        }
    }
    Ok(spec)
}

/// Pretty-prints a description; [`parse`] of the result is equal to the
/// input spec.
pub fn render(spec: &ConnectorSpec) -> String {
    let mut out = String::new();
    for (name, value) in &spec.rate_decls {
        let _ = writeln!(out, "rate {name} = {value}");
    }
    for (node, rate) in &spec.boundary_decls {
        let _ = writeln!(out, "boundary {node} @ {rate}");
    }
    for decl in &spec.channel_decls {
        let _ = write!(out, "{}", decl.kind);
        for node in &decl.nodes {
            let _ = write!(out, " {node}");
        }
        for (key, rate) in &decl.rates {
            let _ = write!(out, " {key}={rate}");
        }
        out.push('\n');
    }
    for (a, b) in &spec.joins {
        let _ = writeln!(out, "join {a} {b}");
    }
    out
}

/// Resolves a rate position to a named rate. Literals are labelled by
/// their channel position and key so every flow still has a stable name.
fn resolve_rate(
    rate: &RateRef,
    channel: usize,
    key: &str,
    table: &BTreeMap<String, f64>,
) -> NamedRate {
    match rate {
        RateRef::Literal(v) => NamedRate::new(&format!("ch{channel}.{key}"), *v),
        RateRef::Symbol(s) => NamedRate::new(s, table[s]),
    }
}

/// Builds every primitive, folds the product over all of them, then
/// synchronizes each join pair and attaches the boundary arrival rates.
pub fn elaborate(spec: &ConnectorSpec) -> Result<StochasticReoAutomaton, DslError> {
    let table: BTreeMap<String, f64> = spec.rate_decls.iter().cloned().collect();
    let mut composed: Option<StochasticReoAutomaton> = None;
    for (i, decl) in spec.channel_decls.iter().enumerate() {
        let rates: BTreeMap<String, NamedRate> = decl
            .rates
            .iter()
            .map(|(key, rate)| (key.clone(), resolve_rate(rate, i, key, &table)))
            .collect();
        let prim = primitive(decl.kind, &decl.nodes, &rates, ChannelId(i))?;
        composed = Some(match composed {
            None => prim,
            Some(acc) => product_s(&acc, &prim)?,
        });
    }
    let mut composed = composed.ok_or(DslError::EmptyConnector)?;
    for (a, b) in &spec.joins {
        composed = synchronize_s(&composed, a, b)?;
    }
    let arrivals: Vec<(NodeName, Rate)> = spec
        .boundary_decls
        .iter()
        .map(|(node, rate)| {
            let value = match rate {
                RateRef::Literal(v) => *v,
                RateRef::Symbol(s) => table[s],
            };
            (node.clone(), Rate(value))
        })
        .collect();
    Ok(composed.with_arrival_rates(arrivals)?)
}

/// The natural loss metric of a description, if it has lossy channels:
/// their loss flows against their paired success flows. This backs the
/// command line's default when no explicit metric is given.
pub fn default_loss_metric(spec: &ConnectorSpec) -> Option<crate::analysis::MetricSpec> {
    let mut lossy = BTreeSet::new();
    let mut success = BTreeSet::new();
    for (i, decl) in spec.channel_decls.iter().enumerate() {
        if decl.kind != ChannelKind::LossySync {
            continue;
        }
        for (key, rate) in &decl.rates {
            let name = match rate {
                RateRef::Literal(_) => format!("ch{i}.{key}"),
                RateRef::Symbol(s) => s.clone(),
            };
            match key.as_str() {
                "loss" => {
                    lossy.insert(name);
                }
                "flow" => {
                    success.insert(name);
                }
                _ => {}
            }
        }
    }
    if lossy.is_empty() || success.is_empty() {
        None
    } else {
        Some(crate::analysis::MetricSpec::LossProbability { lossy, success })
    }
}
