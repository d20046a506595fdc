//! Participatory budgeting allocation engine.
//!
//! The crate models projects, voters and weighted impact-field agents, parses
//! Pabulib-style `.pb` ballot files and runs three families of rules over them:
//! the Komitee Equal Shares loop ([`kes`]), the classic Method of Equal Shares
//! and greedy point-ranking baselines ([`baseline`]). Every engine computes in
//! exact rationals (Equal Shares payments on a fixed sub-cent grid) and emits
//! cent-exact receipts.

pub mod analysis;
pub mod baseline;
pub mod ingest;
pub mod kes;
pub mod model;
pub mod money;
pub mod result;
pub mod scenario;
pub mod synth;
pub mod wire;

pub use model::{
    build_instance, normalize_utilities, Agent, AgentKind, BallotSet, ModelError, Normalization,
    NormalizedBallots, Project, ScenarioConfig, TieBreak, ValidatedInstance,
};
pub use money::{Money, Rational};
pub use result::{AllocationResult, Receipt, RoundRecord};
pub use scenario::{Overrides, Rule};
