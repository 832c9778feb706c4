//! Monitoring toolkit for past-time metric temporal logic with guarded
//! recursive definitions.
//!
//! The crate is organized as a pipeline:
//!
//! * [`dsl`] parses the textual policy language into a [`formula::PolicySpec`];
//! * [`compile`] grounds and orders every reachable subformula into a flat
//!   evaluation table;
//! * [`monitor`] runs the incremental two-array algorithm over that table,
//!   with per-event cost and memory independent of how many events have
//!   been seen;
//! * [`oracle`] is the deliberately naive reference semantics used as
//!   ground truth;
//! * [`trace`] reads and writes timed event streams as JSON Lines;
//! * [`harness`] generates random specs and traces, runs the monitor and
//!   the oracle against each other, and measures per-event cost;
//! * [`scenarios`] bundles ready-made policies with golden traces.
//!
//! # Example
//!
//! ```
//! use rmtl::formula::GroundAtom;
//! use rmtl::trace::TimedState;
//!
//! let spec = rmtl::dsl::parse(
//!     "sort app\n\
//!      const a : app\n\
//!      const sink : app\n\
//!      event call(app, app)\n\
//!      policy direct := call(a,sink)",
//! )
//! .unwrap();
//! let compiled = rmtl::compile::compile(&spec).unwrap();
//!
//! let quiet = TimedState::new(0, vec![]);
//! let (mut monitor, verdict) = rmtl::monitor::MonitorState::init(&compiled, &quiet);
//! assert!(!verdict.any_violation());
//!
//! let call = GroundAtom::new("call", vec!["a".into(), "sink".into()]);
//! let verdict = monitor
//!     .step(&compiled, &TimedState::new(5, vec![call]))
//!     .unwrap();
//! assert!(verdict.any_violation());
//! ```

pub mod compile;
pub mod dsl;
pub mod formula;
pub mod harness;
pub mod monitor;
pub mod oracle;
pub mod report;
pub mod scenarios;
pub mod trace;

pub use compile::{compile, CompiledPolicy};
pub use formula::{Diagnostic, Formula, PolicySpec};
pub use monitor::{MonitorState, Verdict};
pub use trace::{TimedState, Trace};
