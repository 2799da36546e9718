//! Numerical and statistical backends over a chain: generator assembly,
//! steady-state solving, long-run metrics, event simulation, and exporters.
//!
//! The solver is exact-workflow oriented: a dense elimination with partial
//! pivoting up to a size threshold, and power iteration on the uniformized
//! chain beyond it. Chains must be irreducible — strong connectivity is
//! checked up front and reducible chains are an error, not a silent
//! restriction to some closed class. Every solve reports its residual
//! `‖πQ‖∞` so callers can judge the answer instead of trusting it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::ctmc::{build_ctmc, BuildOptions, Ctmc, CtmcError, CtmcState, Provenance};
use crate::guard::NodeName;
use crate::stoch::{Rate, StochasticReoAutomaton};

/// States handled by direct elimination; larger chains switch to power
/// iteration on the uniformized chain.
pub const DENSE_STATE_LIMIT: usize = 20_000;

/// Convergence tolerance for the iterative solver.
const ITERATIVE_TOLERANCE: f64 = 1e-10;
/// Iteration cap for the iterative solver.
const ITERATIVE_CAP: u64 = 1_000_000;

/// Errors from the numerical layer.
#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    /// The chain has more than one communicating class; steady state over
    /// all states is not defined.
    #[error("chain is reducible: {detail}")]
    Reducible { detail: String },
    /// Elimination hit a zero pivot.
    #[error("singular balance system; the chain's generator is degenerate")]
    Singular,
    /// Power iteration did not reach tolerance within the cap.
    #[error("power iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: u64 },
    /// A metric referenced a rate name the connector never declares.
    #[error("unknown rate name `{0}`")]
    UnknownRateName(String),
    /// A metric needs a non-empty class of event labels.
    #[error("metric needs a non-empty {0} class")]
    EmptyMetricClass(&'static str),
    /// Loss classes must not share labels.
    #[error("metric classes overlap on `{0}`")]
    OverlappingMetricClasses(String),
    /// Both metric classes have zero throughput; the ratio is undefined.
    #[error("zero denominator: no traffic on the metric's labels at steady state")]
    ZeroDenominator,
    /// Explicit-state text did not parse.
    #[error("explicit-state format error at line {line}: {message}")]
    PrismFormat { line: usize, message: String },
    /// Rebuilding a chain inside a sweep failed.
    #[error(transparent)]
    Build(#[from] CtmcError),
}

/// The infinitesimal generator in sparse form. Row and column indices refer
/// to `states`, the chain's states in their canonical sorted order.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub n: usize,
    pub entries: BTreeMap<(usize, usize), f64>,
    pub states: Vec<CtmcState>,
}

impl GeneratorMatrix {
    /// The row index of a state.
    pub fn index_of(&self, s: &CtmcState) -> Option<usize> {
        self.states.binary_search(s).ok()
    }
}

/// Assembles the generator: off-diagonal `Q[i][j]` sums the rates of all
/// `i → j` transitions, the diagonal balances its row to zero. Self-loops
/// leave the distribution untouched and are skipped.
pub fn generator(c: &Ctmc) -> GeneratorMatrix {
    let states: Vec<CtmcState> = c.states.iter().cloned().collect();
    let index: BTreeMap<&CtmcState, usize> =
        states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for t in &c.transitions {
        let i = index[&t.source];
        let j = index[&t.target];
        if i == j {
            continue;
        }
        *entries.entry((i, j)).or_insert(0.0) += t.rate.value();
        *entries.entry((i, i)).or_insert(0.0) -= t.rate.value();
    }
    GeneratorMatrix {
        n: states.len(),
        entries,
        states,
    }
}

/// A solved stationary distribution, aligned with the generator's state
/// order, plus the achieved residual `‖πQ‖∞`.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub probabilities: Vec<f64>,
    pub residual: f64,
}

impl SteadyState {
    /// The probability of a state, looked up through the chain's order.
    pub fn probability_of(&self, c: &Ctmc, s: &CtmcState) -> Option<f64> {
        c.states
            .iter()
            .position(|x| x == s)
            .map(|i| self.probabilities[i])
    }
}

/// Solves `πQ = 0, Σπ = 1` for an irreducible chain.
pub fn steady_state(c: &Ctmc) -> Result<SteadyState, AnalysisError> {
    steady_state_with_limit(c, DENSE_STATE_LIMIT)
}

/// As [`steady_state`], with the direct/iterative switch-over exposed so the
/// iterative path can be exercised on small chains.
pub fn steady_state_with_limit(
    c: &Ctmc,
    dense_limit: usize,
) -> Result<SteadyState, AnalysisError> {
    let q = generator(c);
    check_irreducible(&q)?;
    let mut pi = if q.n <= dense_limit {
        solve_dense(&q)?
    } else {
        solve_uniformized(&q)?
    };
    // tiny negative round-off is clamped, then the vector is renormalized
    for p in &mut pi {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    let residual = residual_inf_norm(&q, &pi);
    Ok(SteadyState {
        probabilities: pi,
        residual,
    })
}

/// Strong connectivity via forward and backward reachability from the first
/// state; anything missed lies outside the closed communicating class.
fn check_irreducible(q: &GeneratorMatrix) -> Result<(), AnalysisError> {
    if q.n <= 1 {
        return Ok(());
    }
    let mut forward: Vec<Vec<usize>> = vec![Vec::new(); q.n];
    let mut backward: Vec<Vec<usize>> = vec![Vec::new(); q.n];
    for (&(i, j), &rate) in &q.entries {
        if i != j && rate > 0.0 {
            forward[i].push(j);
            backward[j].push(i);
        }
    }
    let reach = |adj: &Vec<Vec<usize>>| -> Vec<bool> {
        let mut seen = vec![false; q.n];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    };
    let fwd = reach(&forward);
    let bwd = reach(&backward);
    let outside: Vec<String> = (0..q.n)
        .filter(|&i| !fwd[i] || !bwd[i])
        .map(|i| q.states[i].to_string())
        .collect();
    if outside.is_empty() {
        Ok(())
    } else {
        let shown = outside.iter().take(5).cloned().collect::<Vec<_>>().join(", ");
        let suffix = if outside.len() > 5 { ", …" } else { "" };
        Err(AnalysisError::Reducible {
            detail: format!(
                "{} state(s) outside the closed class of {}: {shown}{suffix}",
                outside.len(),
                q.states[0]
            ),
        })
    }
}

/// Dense elimination: solve `Qᵀx = 0` with the last equation replaced by
/// the normalization constraint, using partial pivoting.
fn solve_dense(q: &GeneratorMatrix) -> Result<Vec<f64>, AnalysisError> {
    let n = q.n;
    let mut a = vec![vec![0.0f64; n]; n];
    for (&(i, j), &rate) in &q.entries {
        a[j][i] = rate; // transpose
    }
    for col in 0..n {
        a[n - 1][col] = 1.0;
    }
    let mut b = vec![0.0f64; n];
    b[n - 1] = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))
            .expect("non-empty pivot range");
        if a[pivot][col].abs() < 1e-300 {
            return Err(AnalysisError::Singular);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row == col || a[row][col] == 0.0 {
                continue;
            }
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    Ok((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Power iteration on the uniformized chain `P = I + Q/λ` with
/// `λ > max |Q[i][i]|`, which converges for irreducible chains.
fn solve_uniformized(q: &GeneratorMatrix) -> Result<Vec<f64>, AnalysisError> {
    let n = q.n;
    let max_exit = q
        .entries
        .iter()
        .filter(|(&(i, j), _)| i == j)
        .map(|(_, &v)| v.abs())
        .fold(0.0f64, f64::max);
    if max_exit == 0.0 {
        // no transitions at all; irreducibility already forced n == 1
        return Ok(vec![1.0; n.max(1)]);
    }
    let lambda = max_exit * 1.05;
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..ITERATIVE_CAP {
        let mut flow = vec![0.0f64; n];
        for (&(i, j), &rate) in &q.entries {
            flow[j] += pi[i] * rate;
        }
        let mut delta = 0.0f64;
        for i in 0..n {
            let next = pi[i] + flow[i] / lambda;
            delta = delta.max((next - pi[i]).abs());
            pi[i] = next;
        }
        if delta < ITERATIVE_TOLERANCE {
            return Ok(pi);
        }
    }
    Err(AnalysisError::NoConvergence {
        iterations: ITERATIVE_CAP,
    })
}

/// `‖πQ‖∞`: the largest absolute net probability flow into any state.
fn residual_inf_norm(q: &GeneratorMatrix, pi: &[f64]) -> f64 {
    let mut flow = vec![0.0f64; q.n];
    for (&(i, j), &rate) in &q.entries {
        flow[j] += pi[i] * rate;
    }
    flow.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// A predicate over chain states, for probability-mass metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatePredicate {
    /// Partial-completion states.
    IsMicro,
    /// Settled configurations.
    IsStructural,
    /// States where the node's request is pending.
    PendingContains(NodeName),
    /// States whose configuration rendering contains the fragment.
    ConfigContains(String),
}

impl StatePredicate {
    pub fn eval(&self, s: &CtmcState) -> bool {
        match self {
            StatePredicate::IsMicro => s.is_micro(),
            StatePredicate::IsStructural => !s.is_micro(),
            StatePredicate::PendingContains(n) => s.pending().contains(n),
            StatePredicate::ConfigContains(frag) => s.config().to_string().contains(frag),
        }
    }
}

/// A long-run quantity over the stationary distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricSpec {
    /// Fraction of items taking a lossy flow among all items consumed:
    /// `T(lossy) / (T(lossy) + T(success))` with throughputs `T`.
    LossProbability {
        lossy: BTreeSet<String>,
        success: BTreeSet<String>,
    },
    /// Long-run completions per time unit of the named flows.
    Throughput { rates: BTreeSet<String> },
    /// Stationary probability mass of the states matching a predicate.
    StateMass(StatePredicate),
}

impl MetricSpec {
    pub fn loss_probability<I, J>(lossy: I, success: J) -> Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
        J: IntoIterator,
        J::Item: Into<String>,
    {
        MetricSpec::LossProbability {
            lossy: lossy.into_iter().map(Into::into).collect(),
            success: success.into_iter().map(Into::into).collect(),
        }
    }

    pub fn throughput<I>(rates: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        MetricSpec::Throughput {
            rates: rates.into_iter().map(Into::into).collect(),
        }
    }
}

/// Sum of `π(source)·rate` over flow transitions whose rate name is in the
/// set. Arrivals never count: they are demand, not service.
fn throughput_of(c: &Ctmc, pi: &SteadyState, names: &BTreeSet<String>) -> f64 {
    let index: BTreeMap<&CtmcState, usize> =
        c.states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    c.transitions
        .iter()
        .filter(|t| matches!(&t.provenance, Provenance::Flow(f) if names.contains(&f.rate_name)))
        .map(|t| pi.probabilities[index[&t.source]] * t.rate.value())
        .sum()
}

/// Evaluates a metric at a solved distribution. Rate names must exist in
/// the connector (names whose transitions turned out unreachable simply
/// contribute zero).
pub fn metric(c: &Ctmc, pi: &SteadyState, spec: &MetricSpec) -> Result<f64, AnalysisError> {
    let check_known = |names: &BTreeSet<String>| -> Result<(), AnalysisError> {
        for name in names {
            if !c.flow_rate_names.contains(name) {
                return Err(AnalysisError::UnknownRateName(name.clone()));
            }
        }
        Ok(())
    };
    match spec {
        MetricSpec::LossProbability { lossy, success } => {
            if lossy.is_empty() {
                return Err(AnalysisError::EmptyMetricClass("lossy"));
            }
            if success.is_empty() {
                return Err(AnalysisError::EmptyMetricClass("success"));
            }
            if let Some(shared) = lossy.intersection(success).next() {
                return Err(AnalysisError::OverlappingMetricClasses(shared.clone()));
            }
            check_known(lossy)?;
            check_known(success)?;
            let lost = throughput_of(c, pi, lossy);
            let passed = throughput_of(c, pi, success);
            if lost + passed == 0.0 {
                return Err(AnalysisError::ZeroDenominator);
            }
            Ok(lost / (lost + passed))
        }
        MetricSpec::Throughput { rates } => {
            if rates.is_empty() {
                return Err(AnalysisError::EmptyMetricClass("throughput"));
            }
            check_known(rates)?;
            Ok(throughput_of(c, pi, rates))
        }
        MetricSpec::StateMass(pred) => Ok(c
            .states
            .iter()
            .zip(&pi.probabilities)
            .filter(|(s, _)| pred.eval(s))
            .map(|(_, p)| p)
            .sum()),
    }
}

/// The record of one simulation run: per-event-class counts, per-state
/// occupancy times (aligned with the chain's state order), and the
/// reproducibility metadata.
#[derive(Debug, Clone)]
pub struct EventCounts {
    pub counts: BTreeMap<String, u64>,
    pub occupancy: Vec<f64>,
    pub events: u64,
    pub horizon: f64,
    pub seed: u64,
    pub rng_algorithm: &'static str,
}

impl EventCounts {
    /// Occupancy as fractions of the horizon.
    pub fn occupancy_fractions(&self) -> Vec<f64> {
        self.occupancy.iter().map(|t| t / self.horizon).collect()
    }

    /// Empirical counterpart of the loss metric: lost events over lost plus
    /// successful events.
    pub fn empirical_loss(
        &self,
        lossy: &BTreeSet<String>,
        success: &BTreeSet<String>,
    ) -> Option<f64> {
        let total = |names: &BTreeSet<String>| -> u64 {
            names.iter().map(|n| self.counts.get(n).copied().unwrap_or(0)).sum()
        };
        let lost = total(lossy);
        let passed = total(success);
        if lost + passed == 0 {
            None
        } else {
            Some(lost as f64 / (lost + passed) as f64)
        }
    }
}

/// Competing-exponentials simulation from the chain's initial state:
/// in each state, the holding time is exponential in the total exit rate
/// and the jump picks a transition with probability proportional to its
/// rate. Deterministic for a given seed; the generator algorithm is named
/// in the result so runs stay reproducible across platforms.
pub fn simulate(c: &Ctmc, horizon: f64, seed: u64) -> EventCounts {
    assert!(horizon > 0.0, "simulation horizon must be positive");
    let states: Vec<&CtmcState> = c.states.iter().collect();
    let index: BTreeMap<&CtmcState, usize> =
        states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    // per state: (target index, rate, event label) plus the total exit rate
    let mut outgoing: Vec<Vec<(usize, f64, String)>> = vec![Vec::new(); states.len()];
    for t in &c.transitions {
        outgoing[index[&t.source]].push((
            index[&t.target],
            t.rate.value(),
            t.provenance.label().to_string(),
        ));
    }
    let exit: Vec<f64> = outgoing
        .iter()
        .map(|ts| ts.iter().map(|(_, r, _)| r).sum())
        .collect();

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut occupancy = vec![0.0f64; states.len()];
    let mut events = 0u64;
    let mut now = 0.0f64;
    let mut state = index[&c.initial];
    loop {
        if exit[state] == 0.0 {
            // absorbing: the remaining horizon is spent here
            occupancy[state] += horizon - now;
            break;
        }
        let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        let dwell = -u.ln() / exit[state];
        if now + dwell >= horizon {
            occupancy[state] += horizon - now;
            break;
        }
        occupancy[state] += dwell;
        now += dwell;
        let mut pick = rng.gen::<f64>() * exit[state];
        let mut chosen = outgoing[state].len() - 1;
        for (k, (_, rate, _)) in outgoing[state].iter().enumerate() {
            pick -= rate;
            if pick <= 0.0 {
                chosen = k;
                break;
            }
        }
        let (target, _, label) = &outgoing[state][chosen];
        *counts.entry(label.clone()).or_insert(0) += 1;
        events += 1;
        state = *target;
    }
    EventCounts {
        counts,
        occupancy,
        events,
        horizon,
        seed,
        rng_algorithm: "ChaCha12",
    }
}

/// A chain read back from explicit-state text.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitModel {
    pub labels: Vec<String>,
    pub transitions: Vec<(usize, usize, f64)>,
}

/// Renders the chain in explicit-state format: a `.sta` state listing and a
/// `.tra` transition listing. The `.tra` head line carries the state and
/// transition counts; each following line is `src dst rate`, 0-indexed and
/// sorted by source then target. Rates print in full round-trip precision.
pub fn export_prism(c: &Ctmc) -> (String, String) {
    let states: Vec<&CtmcState> = c.states.iter().collect();
    let index: BTreeMap<&CtmcState, usize> =
        states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut sta = String::from("(state)\n");
    for (i, s) in states.iter().enumerate() {
        let _ = writeln!(sta, "{i}:({s})");
    }
    let mut rows: Vec<(usize, usize, f64)> = c
        .transitions
        .iter()
        .map(|t| (index[&t.source], index[&t.target], t.rate.value()))
        .collect();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    let mut tra = format!("{} {}\n", states.len(), rows.len());
    for (src, dst, rate) in rows {
        let _ = writeln!(tra, "{src} {dst} {rate}");
    }
    (sta, tra)
}

/// Parses explicit-state text back into a model; the inverse of
/// [`export_prism`] up to state labels and the transition multiset.
pub fn parse_prism(sta: &str, tra: &str) -> Result<ExplicitModel, AnalysisError> {
    let fail = |line: usize, message: &str| AnalysisError::PrismFormat {
        line,
        message: message.to_string(),
    };
    let mut labels = Vec::new();
    for (lineno, line) in sta.lines().enumerate() {
        if lineno == 0 {
            continue; // header row naming the state variables
        }
        let (id, label) = line
            .split_once(':')
            .ok_or_else(|| fail(lineno + 1, "expected `id:(label)`"))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| fail(lineno + 1, "state id is not an integer"))?;
        if id != labels.len() {
            return Err(fail(lineno + 1, "state ids must be consecutive from 0"));
        }
        let label = label
            .trim()
            .strip_prefix('(')
            .and_then(|l| l.strip_suffix(')'))
            .ok_or_else(|| fail(lineno + 1, "label must be parenthesized"))?;
        labels.push(label.to_string());
    }
    let mut lines = tra.lines().enumerate();
    let (_, head) = lines.next().ok_or_else(|| fail(1, "missing head line"))?;
    let mut head_fields = head.split_whitespace();
    let n: usize = head_fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| fail(1, "head line must start with the state count"))?;
    let m: usize = head_fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| fail(1, "head line must carry the transition count"))?;
    if !labels.is_empty() && labels.len() != n {
        return Err(fail(1, "state count disagrees with the state listing"));
    }
    let mut transitions = Vec::with_capacity(m);
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(fail(lineno + 1, "expected `src dst rate`"));
        }
        let src: usize = fields[0]
            .parse()
            .map_err(|_| fail(lineno + 1, "source is not an integer"))?;
        let dst: usize = fields[1]
            .parse()
            .map_err(|_| fail(lineno + 1, "target is not an integer"))?;
        let rate: f64 = fields[2]
            .parse()
            .map_err(|_| fail(lineno + 1, "rate is not a number"))?;
        if src >= n || dst >= n {
            return Err(fail(lineno + 1, "state index out of range"));
        }
        transitions.push((src, dst, rate));
    }
    if transitions.len() != m {
        return Err(fail(1, "transition count disagrees with the listing"));
    }
    Ok(ExplicitModel {
        labels,
        transitions,
    })
}

/// Graphviz rendering of the chain; deterministic, micro states dashed.
pub fn export_dot(c: &Ctmc) -> String {
    c.to_dot()
}

/// What a sweep varies: a boundary node's arrival rate, or every flow
/// carrying a given rate name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VaryTarget {
    Arrival(NodeName),
    FlowRate(String),
}

impl VaryTarget {
    pub fn label(&self) -> String {
        match self {
            VaryTarget::Arrival(n) => n.to_string(),
            VaryTarget::FlowRate(n) => n.clone(),
        }
    }
}

/// One sweep grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub vary: String,
    pub value: f64,
    pub metric: f64,
}

/// Substitutes the varied rate into a copy of the connector.
fn substitute(
    s: &StochasticReoAutomaton,
    vary: &VaryTarget,
    value: f64,
) -> Result<StochasticReoAutomaton, AnalysisError> {
    let mut out = s.clone();
    match vary {
        VaryTarget::Arrival(node) => {
            if !out.arrival_rates.contains_key(node) {
                return Err(AnalysisError::UnknownRateName(node.to_string()));
            }
            out.arrival_rates.insert(node.clone(), Rate(value));
        }
        VaryTarget::FlowRate(name) => {
            let mut hits = 0usize;
            out.tuples = out
                .tuples
                .iter()
                .map(|set| {
                    set.iter()
                        .cloned()
                        .map(|mut t| {
                            if t.rate_name == *name {
                                t.rate = Rate(value);
                                hits += 1;
                            }
                            t
                        })
                        .collect()
                })
                .collect();
            if hits == 0 {
                return Err(AnalysisError::UnknownRateName(name.clone()));
            }
        }
    }
    Ok(out)
}

/// Rebuilds, solves, and evaluates the metric at each grid value.
pub fn sweep(
    s: &StochasticReoAutomaton,
    vary: &VaryTarget,
    grid: &[f64],
    spec: &MetricSpec,
    options: BuildOptions,
) -> Result<Vec<SweepRow>, AnalysisError> {
    let mut rows = Vec::with_capacity(grid.len());
    for &value in grid {
        assert!(value > 0.0, "sweep grid values must be positive");
        let varied = substitute(s, vary, value)?;
        let chain = build_ctmc(&varied, options)?;
        let pi = steady_state(&chain)?;
        rows.push(SweepRow {
            vary: vary.label(),
            value,
            metric: metric(&chain, &pi, spec)?,
        });
    }
    Ok(rows)
}

/// Renders sweep rows as CSV with the fixed `vary,value,metric` header.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("vary,value,metric\n");
    for row in rows {
        let _ = writeln!(out, "{},{},{}", row.vary, row.value, row.metric);
    }
    out
}
