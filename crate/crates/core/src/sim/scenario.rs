use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{ReassignmentPolicy, RoundConfig};
use crate::crypto::hash256;
use crate::fraction::Fraction;
use crate::registry::{NodeKind, NodeOrigin};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), message: message.into() }
}

/// Seeded, declarative description of one simulation run. Every field is
/// required in the file; nullable fields must be written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub run_ticks: u64,
    /// Ticks between send and delivery on every link.
    pub latency: u64,
    pub round_config: RoundConfig,
    pub initial_tokens_full: u64,
    pub initial_tokens_light: u64,
    /// Whether lightweight nodes may vote.
    pub lightweight_voting: bool,
    pub vote_reassignment: ReassignmentPolicy,
    pub node_roster: Vec<NodeSpec>,
    pub user_roster: Vec<UserSpec>,
    pub adversary_actions: Vec<AdversarySpec>,
    /// Rounds at which two competing blocks are produced on the same parent.
    pub fork_rounds: Vec<u64>,
    pub crashes: Vec<CrashSpec>,
    pub invariants: Vec<Invariant>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub origin: NodeOrigin,
    pub kind: NodeKind,
    pub join_tick: u64,
    #[serde(deserialize_with = "Option::deserialize")]
    pub tokens: Option<u64>,
    /// Registers as a delegate on joining.
    pub delegate: bool,
    /// Node this node votes for.
    #[serde(deserialize_with = "Option::deserialize")]
    pub vote: Option<String>,
    /// Node this node lends its voting weight to.
    #[serde(deserialize_with = "Option::deserialize")]
    pub delegate_to: Option<String>,
    pub submissions: Vec<SubmissionSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionSpec {
    pub tick: u64,
    pub record_identification: String,
    /// UTF-8 text stored as the record's bytes.
    pub record_value: String,
    /// Full node that receives the submission.
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub name: String,
    pub register_tick: u64,
    /// Department node that processes the registration; `null` registers
    /// from the user's own device.
    #[serde(deserialize_with = "Option::deserialize")]
    pub via: Option<String>,
    pub submissions: Vec<SubmissionSpec>,
    #[serde(deserialize_with = "Option::deserialize")]
    pub recovery: Option<RecoverySpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySpec {
    pub tick: u64,
    pub agent: String,
    /// Outcome of the out-of-band identity check.
    pub identity_proven: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashSpec {
    pub node: String,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub trigger_tick: u64,
    pub action: AdversaryAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeStyle {
    /// A correctly signed record carrying someone else's user id.
    UnadmittedRecord,
    /// Includes a record submitted by the witness itself.
    SelfTransaction,
    /// Sends two different proposals in one round.
    DoubleProposal,
    /// Header commits to the wrong merkle root.
    BadMerkle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversaryAction {
    TamperBlock { actor: String, height: usize, byte_index: usize },
    WithholdEndorsement { actor: String, rounds: u64 },
    FloodTransactions { rate: u64, duration: u64 },
    /// Delegates taken greedily from the end of the roster, while their
    /// share of non-leader delegate stake stays within `fraction`, endorse
    /// whatever `leader` proposes. The leader forges unadmitted records.
    StakeCoalition { fraction: Fraction, leader: String },
    ForgeProposal { actor: String, style: ForgeStyle },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    Convergence,
    Safety,
    WitnessExclusion,
    Liveness,
    FloodResilience,
    StakeConsistency,
    KeyContainment,
    WalletUbiquity,
    RecoveryAppendOnly,
    TamperDetected,
    LightweightVerified,
    OnboardingGate,
    ForkResolution,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de)
            .map_err(|e| ScenarioError::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
        s.validate()?;
        Ok(s)
    }

    /// Digest of the scenario's canonical JSON form.
    pub fn digest(&self) -> crate::crypto::Digest {
        hash256(&serde_json::to_vec(self).expect("scenario serializes"))
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_roster.iter().position(|n| n.name == name)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.round_config.validate().map_err(|e| invalid("round_config", e.to_string()))?;
        if self.latency == 0 {
            return Err(invalid("latency", "must be at least 1"));
        }
        if self.round_config.t_c <= 4 * self.latency {
            return Err(invalid("round_config.t_c", "must exceed four times the latency"));
        }
        if self.run_ticks == 0 {
            return Err(invalid("run_ticks", "must be positive"));
        }
        if self.node_roster.is_empty() {
            return Err(invalid("node_roster", "must not be empty"));
        }
        if !self.node_roster.iter().any(|n| n.origin == NodeOrigin::Government && n.join_tick == 0 && n.delegate) {
            return Err(invalid("node_roster", "no government delegate at tick 0 to bootstrap the network"));
        }

        let mut names = BTreeSet::new();
        for (i, n) in self.node_roster.iter().enumerate() {
            let field = |f: &str| format!("node_roster[{i}].{f}");
            if !names.insert(n.name.as_str()) {
                return Err(invalid(field("name"), format!("duplicate node name {:?}", n.name)));
            }
            if !n.origin.allows(n.kind) {
                return Err(invalid(field("kind"), format!("{:?} nodes cannot be {:?}", n.origin, n.kind)));
            }
            if n.delegate && n.kind != NodeKind::Full {
                return Err(invalid(field("delegate"), "delegates must be full nodes"));
            }
            if n.join_tick == 0 && n.origin != NodeOrigin::Government {
                return Err(invalid(field("join_tick"), "only government nodes exist before the first tick"));
            }
            if n.join_tick > self.run_ticks {
                return Err(invalid(field("join_tick"), "after the end of the run"));
            }
            if n.vote.is_some() && n.delegate_to.is_some() {
                return Err(invalid(field("vote"), "cannot both vote and delegate"));
            }
            if (n.vote.is_some() || n.delegate_to.is_some())
                && n.kind == NodeKind::Lightweight
                && !self.lightweight_voting
            {
                return Err(invalid(field("vote"), "lightweight voting is disabled"));
            }
        }
        for (i, n) in self.node_roster.iter().enumerate() {
            let field = |f: &str| format!("node_roster[{i}].{f}");
            if let Some(v) = &n.vote {
                match self.node_roster.iter().find(|m| &m.name == v) {
                    Some(m) if m.delegate => {}
                    _ => return Err(invalid(field("vote"), format!("{v:?} is not a delegate node"))),
                }
            }
            if let Some(p) = &n.delegate_to {
                match self.node_roster.iter().find(|m| &m.name == p) {
                    None => return Err(invalid(field("delegate_to"), format!("unknown node {p:?}"))),
                    Some(m) if m.name == n.name => return Err(invalid(field("delegate_to"), "cannot delegate to self")),
                    Some(m) if m.delegate_to.is_some() => {
                        return Err(invalid(field("delegate_to"), "delegation deeper than one level"))
                    }
                    Some(_) => {}
                }
            }
            self.check_submissions(&n.submissions, &field("submissions"), n.join_tick)?;
        }

        let mut user_names = BTreeSet::new();
        for (i, u) in self.user_roster.iter().enumerate() {
            let field = |f: &str| format!("user_roster[{i}].{f}");
            if !user_names.insert(u.name.as_str()) {
                return Err(invalid(field("name"), format!("duplicate user name {:?}", u.name)));
            }
            if u.register_tick == 0 {
                return Err(invalid(field("register_tick"), "users register after the first tick"));
            }
            if let Some(v) = &u.via {
                self.require_full(v, u.register_tick, &field("via"))?;
            }
            self.check_submissions(&u.submissions, &field("submissions"), u.register_tick)?;
            if let Some(r) = &u.recovery {
                if r.tick <= u.register_tick {
                    return Err(invalid(field("recovery.tick"), "must follow registration"));
                }
                if self.node_index(&r.agent).is_none() {
                    return Err(invalid(field("recovery.agent"), format!("unknown node {:?}", r.agent)));
                }
            }
        }

        for (i, a) in self.adversary_actions.iter().enumerate() {
            let field = format!("adversary_actions[{i}].action");
            let known = |name: &String| {
                self.node_index(name).map(|_| ()).ok_or_else(|| invalid(&field, format!("unknown node {name:?}")))
            };
            match &a.action {
                AdversaryAction::TamperBlock { actor, height, .. } => {
                    self.require_full(actor, a.trigger_tick, &field)?;
                    if *height == 0 {
                        return Err(invalid(&field, "the genesis block cannot be tampered"));
                    }
                }
                AdversaryAction::WithholdEndorsement { actor, .. } => known(actor)?,
                AdversaryAction::FloodTransactions { .. } => {}
                AdversaryAction::StakeCoalition { fraction, leader } => {
                    known(leader)?;
                    if fraction.numerator() >= fraction.denominator() {
                        return Err(invalid(&field, "coalition fraction must be below 1"));
                    }
                }
                AdversaryAction::ForgeProposal { actor, .. } => known(actor)?,
            }
        }
        for (i, c) in self.crashes.iter().enumerate() {
            if self.node_index(&c.node).is_none() {
                return Err(invalid(format!("crashes[{i}].node"), format!("unknown node {:?}", c.node)));
            }
        }
        for (i, r) in self.fork_rounds.iter().enumerate() {
            if *r == 0 || r * self.round_config.t_c > self.run_ticks {
                return Err(invalid(format!("fork_rounds[{i}]"), "round outside the run"));
            }
        }
        Ok(())
    }

    fn require_full(&self, name: &str, tick: u64, field: &str) -> Result<(), ScenarioError> {
        match self.node_roster.iter().find(|n| n.name == name) {
            None => Err(invalid(field, format!("unknown node {name:?}"))),
            Some(n) if n.kind != NodeKind::Full => Err(invalid(field, format!("{name:?} is not a full node"))),
            Some(n) if n.join_tick > tick => Err(invalid(field, format!("{name:?} has not joined by tick {tick}"))),
            Some(_) => Ok(()),
        }
    }

    fn check_submissions(&self, subs: &[SubmissionSpec], field: &str, from: u64) -> Result<(), ScenarioError> {
        for (j, s) in subs.iter().enumerate() {
            if s.tick <= from {
                return Err(invalid(format!("{field}[{j}].tick"), "must follow joining"));
            }
            self.require_full(&s.target, s.tick, &format!("{field}[{j}].target"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal() -> serde_json::Value {
        serde_json::json!({
            "name": "mini",
            "seed": 1,
            "run_ticks": 10,
            "latency": 1,
            "round_config": {"t_c": 5, "finality_fraction": "2/3", "panel_size": 1},
            "initial_tokens_full": 10,
            "initial_tokens_light": 1,
            "lightweight_voting": false,
            "vote_reassignment": "new_node_first",
            "node_roster": [{
                "name": "dept-a", "origin": "government", "kind": "full", "join_tick": 0,
                "tokens": null, "delegate": true, "vote": "dept-a", "delegate_to": null, "submissions": []
            }],
            "user_roster": [],
            "adversary_actions": [],
            "fork_rounds": [],
            "crashes": [],
            "invariants": ["liveness"]
        })
    }

    #[test]
    fn minimal_parses() {
        let s = Scenario::from_json(&minimal().to_string()).unwrap();
        assert_eq!(s.round_config.finality_fraction.to_string(), "2/3");
    }

    #[test]
    fn every_field_required() {
        let mut v = minimal();
        v["node_roster"][0].as_object_mut().unwrap().remove("tokens");
        let err = Scenario::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("tokens"), "{err}");
        let mut v = minimal();
        v.as_object_mut().unwrap().remove("latency");
        assert!(Scenario::from_json(&v.to_string()).unwrap_err().to_string().contains("latency"));
    }

    #[test]
    fn negative_t_c_names_the_field() {
        let mut v = minimal();
        v["round_config"]["t_c"] = serde_json::json!(-5);
        let err = Scenario::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("t_c"), "{err}");
    }

    #[test]
    fn needs_a_bootstrap_department() {
        let mut v = minimal();
        v["node_roster"][0]["join_tick"] = serde_json::json!(3);
        let err = Scenario::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("bootstrap"), "{err}");
    }

    #[test]
    fn interval_must_cover_message_rounds() {
        let mut v = minimal();
        v["latency"] = serde_json::json!(2);
        assert!(Scenario::from_json(&v.to_string()).unwrap_err().to_string().contains("latency"));
    }
}
