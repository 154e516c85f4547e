//! The three communication methods: all-to-all knowledge concatenation, a
//! learnt per-step message graph, and belief propagation over a fixed graph.
//!
//! Functions that move data between agents take a [`Recorder`] and charge both
//! their time and their byte volume to [`Category::Communication`]. Pure compute
//! kernels ([`tom_infer`], [`message_sender`], [`neurcomm_update_belief`]) are
//! stamped by their callers under the same category.

mod belief;
mod tom;

pub use belief::{
    belief_inputs, belief_round, belief_round_in_order, comm_net_backward, comm_net_forward, comm_net_params,
    comm_net_zero_params, neurcomm_update_belief, Belief, CommNetCache,
};
pub use tom::{
    message_sender, pair_partner, sender_backward, sender_backward_into, sender_params, sender_scores, threshold_graph, tom_backward,
    tom_backward_into, tom_forward, tom_hidden_rows,
    tom_infer, tom_params, SenderCache, TomCache,
};

use serde::{Deserialize, Serialize};

use crate::envs::{JointAction, Observation};
use crate::error::{Error, Result};
use crate::graph::CommGraph;
use crate::numerics::Tensor2;
use crate::profiler::{Category, Recorder};

pub(crate) const F64_BYTES: u64 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: usize,
    pub receiver: usize,
    pub payload: Vec<f64>,
}

/// Messages received this step, per receiver, ordered by sender index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Inbox {
    pub messages: Vec<Vec<Message>>,
}

impl Inbox {
    pub fn empty(n: usize) -> Self {
        Self {
            messages: vec![Vec::new(); n],
        }
    }

    pub fn clear(&mut self) {
        self.messages.iter_mut().for_each(Vec::clear);
    }

    pub fn received(&self, agent: usize) -> &[Message] {
        &self.messages[agent]
    }

    pub fn total(&self) -> usize {
        self.messages.iter().map(Vec::len).sum()
    }

    /// Mean payload received by `agent`; zeros of `width` if nothing arrived.
    pub fn mean_payload(&self, agent: usize, width: usize) -> Vec<f64> {
        let msgs = &self.messages[agent];
        let mut out = vec![0.0; width];
        if msgs.is_empty() {
            return out;
        }
        let inv = 1.0 / msgs.len() as f64;
        for m in msgs {
            for (o, &p) in out.iter_mut().zip(&m.payload) {
                *o += p * inv;
            }
        }
        out
    }
}

fn one_hot_into(out: &mut Vec<f64>, action: usize, space: usize) {
    let start = out.len();
    out.resize(start + space, 0.0);
    out[start + action] = 1.0;
}

/// `[obs_0 ‖ .. ‖ obs_{n-1} ‖ onehot(a_0) ‖ .. ‖ onehot(a_{n-1})]` from borrowed rows.
pub fn joint_row(observations: &[&[f64]], actions: &[usize], spaces: &[usize]) -> Vec<f64> {
    let width: usize = observations.iter().map(|o| o.len()).sum::<usize>() + spaces.iter().sum::<usize>();
    let mut row = Vec::with_capacity(width);
    for o in observations {
        row.extend_from_slice(o);
    }
    for (&a, &s) in actions.iter().zip(spaces) {
        one_hot_into(&mut row, a, s);
    }
    row
}

fn check_complete(observations: &[Observation], actions: &JointAction) -> Result<()> {
    for (i, o) in observations.iter().enumerate() {
        if o.agent != i {
            return Err(Error::Protocol(format!("missing observation for agent {i}")));
        }
    }
    let n = observations.len();
    if actions.len() < n {
        return Err(Error::Protocol(format!("missing action for agent {}", actions.len())));
    }
    if actions.len() > n {
        return Err(Error::Protocol(format!("missing observation for agent {n}")));
    }
    actions.validate(n)
}

/// One row per agent, each the full joint observation-action concatenation.
pub fn concat_all(observations: &[Observation], actions: &JointAction, rec: &mut Recorder) -> Result<Tensor2> {
    check_complete(observations, actions)?;
    let n = observations.len();
    let out = rec.span(Category::Communication, || {
        let obs: Vec<&[f64]> = observations.iter().map(|o| o.vector.as_slice()).collect();
        let row = joint_row(&obs, &actions.actions, &actions.space);
        let width = row.len();
        let mut data = Vec::with_capacity(n * width);
        for _ in 0..n {
            data.extend_from_slice(&row);
        }
        Tensor2::from_vec(n, width, data)
    })?;
    rec.add_comm_bytes((out.rows() * out.cols()) as u64 * F64_BYTES);
    Ok(out)
}

/// Delivers one message per edge of `graph`, carrying the sender's payload row.
pub fn propagate(graph: &CommGraph, payloads: &[Vec<f64>], rec: &mut Recorder) -> Result<Inbox> {
    let n = graph.n();
    if payloads.len() != n {
        return Err(Error::Protocol(format!("{} payloads for {n} agents", payloads.len())));
    }
    let mut width = None;
    for s in (0..n).filter(|&s| !graph.out_neighbors(s).is_empty()) {
        match width {
            None => width = Some(payloads[s].len()),
            Some(w) if w != payloads[s].len() => {
                return Err(Error::Protocol(format!(
                    "payload width {} from agent {s}, expected {w}",
                    payloads[s].len()
                )));
            }
            _ => {}
        }
    }
    let inbox = rec.span(Category::Communication, || {
        let mut inbox = Inbox::empty(n);
        for (receiver, slot) in inbox.messages.iter_mut().enumerate() {
            for sender in graph.in_neighbors(receiver) {
                slot.push(Message {
                    sender,
                    receiver,
                    payload: payloads[sender].clone(),
                });
            }
        }
        inbox
    });
    rec.add_comm_bytes(graph.edge_count() as u64 * width.unwrap_or(0) as u64 * F64_BYTES);
    Ok(inbox)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Provenance;
    use crate::profiler::Phase;

    fn obs(agent: usize, v: &[f64]) -> Observation {
        Observation {
            agent,
            vector: v.to_vec(),
        }
    }

    #[test]
    fn single_agent_row_is_obs_then_onehot() {
        let mut rec = Recorder::new(Phase::SampleGeneration);
        let t = concat_all(&[obs(0, &[0.5, -0.5])], &JointAction::uniform_space(vec![2], 3).unwrap(), &mut rec).unwrap();
        assert_eq!(t.row(0), &[0.5, -0.5, 0.0, 0.0, 1.0]);
        assert_eq!(rec.comm_bytes(), 5 * 8);
    }

    #[test]
    fn two_agents_four_wide_five_way() {
        let mut rec = Recorder::new(Phase::SampleGeneration);
        let o = [obs(0, &[1.0; 4]), obs(1, &[2.0; 4])];
        let t = concat_all(&o, &JointAction::uniform_space(vec![0, 4], 5).unwrap(), &mut rec).unwrap();
        assert_eq!(t.shape(), (2, 18));
        assert_eq!(t.row(0), t.row(1));
        assert_eq!(rec.comm_bytes(), 2 * 18 * 8);
    }

    #[test]
    fn missing_agent_is_named() {
        let mut rec = Recorder::new(Phase::SampleGeneration);
        let o = [obs(0, &[1.0]), obs(2, &[1.0])];
        let err = concat_all(&o, &JointAction::uniform_space(vec![0, 0], 2).unwrap(), &mut rec).unwrap_err();
        assert_eq!(err, Error::Protocol("missing observation for agent 1".into()));
        let err = concat_all(&o[..1], &JointAction::uniform_space(vec![], 2).unwrap(), &mut rec).unwrap_err();
        assert_eq!(err, Error::Protocol("missing action for agent 0".into()));
    }

    #[test]
    fn complete_graph_of_three_fills_every_inbox_with_two() {
        let mut rec = Recorder::new(Phase::SampleGeneration);
        let g = CommGraph::complete(3, Provenance::Learnt);
        let inbox = propagate(&g, &[vec![0.0; 4], vec![1.0; 4], vec![2.0; 4]], &mut rec).unwrap();
        for r in 0..3 {
            let senders: Vec<usize> = inbox.received(r).iter().map(|m| m.sender).collect();
            let expected: Vec<usize> = (0..3).filter(|&s| s != r).collect();
            assert_eq!(senders, expected);
        }
        assert_eq!(rec.comm_bytes(), 6 * 4 * 8);
    }

    #[test]
    fn empty_graph_leaves_inboxes_empty() {
        let mut rec = Recorder::new(Phase::SampleGeneration);
        let inbox = propagate(&CommGraph::empty(4, Provenance::Learnt), &vec![vec![1.0]; 4], &mut rec).unwrap();
        assert_eq!(inbox.total(), 0);
        assert_eq!(inbox.mean_payload(2, 3), vec![0.0; 3]);
        assert_eq!(rec.comm_bytes(), 0);
    }

    #[test]
    fn ragged_payloads_are_a_protocol_error() {
        let mut rec = Recorder::new(Phase::SampleGeneration);
        let g = CommGraph::complete(2, Provenance::Learnt);
        assert!(matches!(propagate(&g, &[vec![1.0], vec![1.0, 2.0]], &mut rec), Err(Error::Protocol(_))));
    }
}
