//! Scalarized multi-objective Q-learning head and its alternating double-Q
//! training loop.

mod head;
mod step;
mod trainer;

pub use head::{
    scalarize, select_action, select_actions, HeadVars, Objective, QMatrix, SmorlHead, HEAD_PARAM_COUNT,
    OBJECTIVE_NAMES,
};
pub use step::{sdql_loss, smorl_loss_and_grads, Agent, RewardContext, SdqlTerms, StepLosses, StepOutput, AGENT_PARAM_COUNT};
pub use trainer::{
    init_encoder, train, train_supervised_twin, BestModel, TwinRun, Branch, LogRecord, StepRecord, TrainConfig, TrainInputs,
    TrainObserver, TrainOutcome, TrainerState,
};
