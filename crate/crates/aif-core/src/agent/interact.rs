//! Environment interaction: drive the workstation with the actor for one
//! H-event window and package the result as an [`Experience`].

use crate::agent::replay::Experience;
use crate::error::Result;
use crate::model::Actor;
use crate::rng::Stream;
use crate::sim::obs::observe;
use crate::sim::state::Workstation;

/// Run `horizon` decision events under the actor's stochastic policy.
///
/// At every event the agent observes, samples a wake target, applies it, and
/// lets the simulator advance to the next event. The returned experience
/// pairs the window's first observation (and the policy embedding π̂ captured
/// there) with the observation after exactly `horizon` events.
pub fn interact(
    ws: &mut Workstation,
    actor: &Actor,
    horizon: usize,
    action_rng: &mut Stream,
) -> Result<Experience> {
    let o_start = observe(ws)?;
    let pi_hat = actor.policy_repr(&o_start)?;
    let start_clock = ws.clock();

    let mut o = o_start.clone();
    for step in 0..horizon {
        if step > 0 {
            o = observe(ws)?;
        }
        let (probs, _) = actor.forward(&o)?;
        let action = actor.sample_action(&probs, action_rng);
        ws.apply(action)?;
        ws.step();
    }

    let o_end = observe(ws)?;
    Ok(Experience { o_start, pi_hat, o_end, start_clock, end_clock: ws.clock() })
}
