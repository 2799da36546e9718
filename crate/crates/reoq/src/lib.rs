//! Compositional modelling of channel-based connectors and their
//! quantitative analysis.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`guard`] — Boolean guards over node names, the labels' enabling logic.
//! 2. [`automaton`] — guarded automata for connectors: validation, product,
//!    node synchronisation, normalisation, bisimulation.
//! 3. [`stoch`] — the stochastic extension: arrival rates at boundary nodes
//!    and per-transition flow tuples with processing-delay rates.
//! 4. [`delay`] — delay-sequence expressions recording which delays a
//!    transition incurs, and the partial order they induce.
//! 5. [`ctmc`] — translation of a stochastic automaton into a labelled
//!    continuous-time Markov chain, including the refinement of transitions
//!    into micro-steps and the merge of equivalent interleavings.
//! 6. [`analysis`] — steady-state solving, performance metrics, simulation,
//!    parameter sweeps, and exports (PRISM explicit format, Graphviz, CSV).
//! 7. [`dsl`] — a small textual language for describing connector circuits,
//!    plus the command-line interface.

pub mod analysis;
pub mod automaton;
pub mod cli;
pub mod ctmc;
pub mod delay;
pub mod dsl;
pub mod guard;
pub mod stoch;

pub use analysis::{
    export_dot, export_prism, generator, metric, parse_prism, simulate, steady_state, sweep,
    sweep_csv, AnalysisError, EventCounts, ExplicitModel, GeneratorMatrix, MetricSpec,
    StatePredicate, SteadyState, SweepRow, VaryTarget,
};
pub use cli::{cli_main, cli_run};
pub use automaton::{
    AutomatonError, BisimResult, ChannelId, ReoAutomaton, ReoTransition, StateId,
    ValidationReport, Violation,
};
pub use ctmc::{
    arrival_transitions_pre, build_ctmc, divide, macro_transitions, structural_states,
    BuildOptions, Ctmc, CtmcError, CtmcState, CtmcTransition, MacroTransition, Provenance,
};
pub use delay::{equivalent, ext, render, DelayError, DelayPoset, DelaySeq, Rendered};
pub use dsl::{elaborate, parse, render as render_spec, ChannelDecl, ConnectorSpec, DslError, RateRef};
pub use guard::{atoms, hat, Atom, Clause, Guard, GuardError, NodeName};
pub use stoch::{
    bisimilar_s, primitive, product_s, synchronize_s, validate_s, ChannelKind, FlowTuple,
    NamedRate, Rate, StochError, StochasticReoAutomaton,
};
