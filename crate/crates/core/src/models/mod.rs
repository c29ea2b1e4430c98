//! Parametrized case-study models.
pub mod repserver;
pub mod sidechannel;
pub mod transmission;

pub use repserver::{replicated_server_model, replicated_server_text};
pub use sidechannel::{sidechannel_model, sidechannel_text};
pub use transmission::{check_in_order, trace_delivery_order, DeliveryLog, transmission_model, transmission_model_text, Client, CounterOrder, Transmission, TxState};

use crate::adversary::{couple, CoupledState};
use crate::calculus::{AdversarySpec, Model, Proc};
use crate::error::Result;
use crate::ts::{explore, StateGraph};

/// Explores `system ∘ adversary` up to `depth` steps (unbounded if `None`).
/// An incomplete graph keeps its unexpanded nodes in `frontier`.
pub fn explicit_reach(
    model: &Model,
    system: &Proc,
    adversary: &AdversarySpec,
    depth: Option<usize>,
    cap: usize,
) -> Result<StateGraph<CoupledState>> {
    let sys = couple(model, system, adversary)?;
    explore(&sys, cap, depth)
}
