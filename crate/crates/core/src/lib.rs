//! Episodic MDPs, state-action aggregations, an aggregated optimistic
//! Q-learner and a harness that scores it by exact regret.

pub mod agent;
pub mod aggregation;
pub mod config;
pub mod envs;
pub mod harness;
pub mod mdp;
pub mod plot;

pub use agent::{run_aqucb, AgentState, BonusSchedule, Learner};
pub use aggregation::{epsilon_of, trivial_aggregation, validate, Aggregation};
pub use config::ExperimentConfig;
pub use envs::{chain_mdp, expand_aggregate_mdp, random_mdp, DuplicationSpec};
pub use harness::{run_experiment, theorem_bound, Instance, RegretLedger};
pub use mdp::{backward_induction, policy_value, DeterministicPolicy, EpisodicMdp};
