//! The conversation loop: session state, the simulated user, rule-based
//! agents and the training / evaluation drivers.

mod agent;
mod run;
mod state;

pub use agent::{max_entropy_action, Agent, Decision};
pub use run::{
    collect_demonstrations, derive_seed, evaluate, evaluate_policy, evaluation_session, pretrain_policy, run_session,
    run_training, simulate_pair, ActionKind, EpochLog, PolicyTraining, Responder, Response, RunOptions, SessionEnv,
    SessionRecord, SimulatedUser, Teacher, TurnRecord, STREAM_EVAL, STREAM_PRETRAIN, STREAM_SHUFFLE, STREAM_TRAIN,
};
pub use state::{
    simulate_response_question, simulate_response_recommendation, start_session, Outcome, QuestionScheme, SessionState,
};
