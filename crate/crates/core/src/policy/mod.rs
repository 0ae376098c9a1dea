//! Dialogue policy: state encoding, rewards and the MLP trained with
//! REINFORCE or by imitating a teacher.

mod net;
mod reward;
mod state;

pub use net::{
    argmax, imitate, masked_softmax, reinforce_gradient, reinforce_update, sample_action, Demonstration, PolicyOptimizer,
    PolicyParams, Step, Trajectory,
};
pub use reward::{compute_reward, discounted_returns, UserResponse};
pub use state::{
    bin_index, conv_pref_vector, dialogue_vector, encode_state, entropy_vector, user_pref_vector, StateLayout, TurnOutcome,
};
