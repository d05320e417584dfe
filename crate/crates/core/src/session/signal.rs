use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    VrHost,
    CoHost,
    Spectator,
}

impl Role {
    /// The peer a signaling message is relayed to.
    pub fn counterpart(self) -> Option<Role> {
        match self {
            Role::VrHost => Some(Role::CoHost),
            Role::CoHost => Some(Role::VrHost),
            Role::Spectator => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SignalMessage {
    Join { requested_role: Role, client_id: String },
    RoleAssigned { role: Role, session_token: String },
    Offer { sdp_blob: String },
    Answer { sdp_blob: String },
    Candidate { blob: String },
    Rejected { reason: RejectReason },
    Bye,
    Error { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    RoleTaken,
    UseSpectatorEndpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnState {
    Joined,
    Negotiating,
    Connected,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientEntry {
    pub role: Role,
    pub state: ConnState,
    pub token: String,
}

/// Messages to deliver, each addressed to a client id.
pub type Outbound = Vec<(String, SignalMessage)>;

/// Role registry and offer/answer relay.
#[derive(Debug, Clone, Serialize)]
pub struct Signaling {
    clients: BTreeMap<String, ClientEntry>,
    #[serde(skip)]
    token_seed: String,
    tokens_issued: u64,
}

fn error(to: &str, message: impl Into<String>) -> Outbound {
    vec![(to.to_owned(), SignalMessage::Error { message: message.into() })]
}

impl Signaling {
    pub fn new(token_seed: &str) -> Self {
        Signaling { clients: BTreeMap::new(), token_seed: token_seed.to_owned(), tokens_issued: 0 }
    }

    pub fn clients(&self) -> &BTreeMap<String, ClientEntry> {
        &self.clients
    }

    pub fn client(&self, id: &str) -> Option<&ClientEntry> {
        self.clients.get(id)
    }

    /// Live (not closed) holder of a role slot.
    pub fn holder(&self, role: Role) -> Option<(&str, &ClientEntry)> {
        self.clients.iter().find(|(_, c)| c.role == role && c.state != ConnState::Closed).map(|(k, c)| (k.as_str(), c))
    }

    /// Role and client id behind a live session token.
    pub fn authenticate(&self, token: &str) -> Option<(&str, Role)> {
        self.clients
            .iter()
            .find(|(_, c)| c.token == token && c.state != ConnState::Closed)
            .map(|(k, c)| (k.as_str(), c.role))
    }

    fn issue_token(&mut self) -> String {
        let mut h = Sha256::new();
        h.update(self.token_seed.as_bytes());
        h.update(self.tokens_issued.to_be_bytes());
        self.tokens_issued += 1;
        crate::fanout::hex(&h.finalize())[..32].to_owned()
    }

    pub fn handle(&mut self, from: &str, msg: SignalMessage) -> Outbound {
        let live = self.clients.get(from).filter(|c| c.state != ConnState::Closed).cloned();
        match msg {
            SignalMessage::Join { requested_role, client_id } => {
                if client_id != from {
                    return error(from, format!("join client_id {client_id:?} does not match connection {from:?}"));
                }
                if live.is_some() {
                    return error(from, "already joined");
                }
                if requested_role == Role::Spectator {
                    return vec![(from.to_owned(), SignalMessage::Rejected { reason: RejectReason::UseSpectatorEndpoint })];
                }
                if self.holder(requested_role).is_some() {
                    return vec![(from.to_owned(), SignalMessage::Rejected { reason: RejectReason::RoleTaken })];
                }
                let token = self.issue_token();
                self.clients.insert(
                    from.to_owned(),
                    ClientEntry { role: requested_role, state: ConnState::Joined, token: token.clone() },
                );
                vec![(from.to_owned(), SignalMessage::RoleAssigned { role: requested_role, session_token: token })]
            }
            SignalMessage::Offer { .. } | SignalMessage::Answer { .. } | SignalMessage::Candidate { .. } => {
                let Some(me) = live else {
                    return error(from, "offer, answer and candidate require an assigned role");
                };
                let Some(peer_role) = me.role.counterpart() else {
                    return error(from, "role has no signaling counterpart");
                };
                let Some(peer_id) = self.holder(peer_role).map(|(id, _)| id.to_owned()) else {
                    return error(from, "no counterpart connected");
                };
                let peer_state = self.clients[&peer_id].state;
                let (mine, theirs) = match &msg {
                    SignalMessage::Offer { .. } => (
                        me.state.max(ConnState::Negotiating),
                        peer_state.max(ConnState::Negotiating),
                    ),
                    SignalMessage::Answer { .. } => {
                        if me.state == ConnState::Joined || peer_state == ConnState::Joined {
                            return error(from, "answer without a pending offer");
                        }
                        (ConnState::Connected, ConnState::Connected)
                    }
                    _ => (me.state, peer_state),
                };
                self.clients.get_mut(from).unwrap().state = mine;
                self.clients.get_mut(&peer_id).unwrap().state = theirs;
                vec![(peer_id, msg)]
            }
            SignalMessage::Bye => {
                let Some(me) = live else {
                    return error(from, "bye from a client that is not joined");
                };
                self.clients.get_mut(from).unwrap().state = ConnState::Closed;
                match me.role.counterpart().and_then(|r| self.holder(r)) {
                    Some((peer, _)) => vec![(peer.to_owned(), SignalMessage::Bye)],
                    None => Vec::new(),
                }
            }
            SignalMessage::RoleAssigned { .. } | SignalMessage::Rejected { .. } | SignalMessage::Error { .. } => {
                error(from, "server-to-client message type sent by a client")
            }
        }
    }

    /// Closes a client whose connection dropped, as if it had sent `Bye`.
    pub fn disconnect(&mut self, from: &str) -> Outbound {
        match self.clients.get(from) {
            Some(c) if c.state != ConnState::Closed => self.handle(from, SignalMessage::Bye),
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn join(s: &mut Signaling, id: &str, role: Role) -> Outbound {
        s.handle(id, SignalMessage::Join { requested_role: role, client_id: id.into() })
    }

    #[test]
    fn cohost_slot_is_exclusive_and_reusable() {
        let mut s = Signaling::new("seed");
        assert!(matches!(join(&mut s, "a", Role::CoHost)[0].1, SignalMessage::RoleAssigned { role: Role::CoHost, .. }));
        assert_eq!(join(&mut s, "b", Role::CoHost)[0].1, SignalMessage::Rejected { reason: RejectReason::RoleTaken });
        s.handle("a", SignalMessage::Bye);
        assert!(matches!(join(&mut s, "b", Role::CoHost)[0].1, SignalMessage::RoleAssigned { .. }));
    }

    #[test]
    fn spectators_are_redirected() {
        let mut s = Signaling::new("seed");
        assert_eq!(
            join(&mut s, "v", Role::Spectator)[0].1,
            SignalMessage::Rejected { reason: RejectReason::UseSpectatorEndpoint }
        );
        assert!(s.client("v").is_none());
    }

    #[test]
    fn offer_answer_connects_both() {
        let mut s = Signaling::new("seed");
        join(&mut s, "unity", Role::VrHost);
        join(&mut s, "web", Role::CoHost);
        let out = s.handle("unity", SignalMessage::Offer { sdp_blob: "v=0 x".into() });
        assert_eq!(out, vec![("web".into(), SignalMessage::Offer { sdp_blob: "v=0 x".into() })]);
        assert_eq!(s.client("web").unwrap().state, ConnState::Negotiating);
        let out = s.handle("web", SignalMessage::Answer { sdp_blob: "ans".into() });
        assert_eq!(out[0].0, "unity");
        assert_eq!(s.client("web").unwrap().state, ConnState::Connected);
        assert_eq!(s.client("unity").unwrap().state, ConnState::Connected);
    }

    #[test]
    fn offer_before_role_is_error() {
        let mut s = Signaling::new("seed");
        let out = s.handle("x", SignalMessage::Offer { sdp_blob: "o".into() });
        assert!(matches!(out[0].1, SignalMessage::Error { .. }));
        assert!(s.client("x").is_none());
    }

    #[test]
    fn tokens_are_deterministic_and_revoked_on_bye() {
        let mut a = Signaling::new("seed");
        let mut b = Signaling::new("seed");
        let ta = join(&mut a, "c", Role::CoHost);
        assert_eq!(ta, join(&mut b, "c", Role::CoHost));
        let SignalMessage::RoleAssigned { session_token, .. } = &ta[0].1 else { panic!() };
        assert_eq!(session_token.len(), 32);
        assert_eq!(a.authenticate(session_token), Some(("c", Role::CoHost)));
        a.handle("c", SignalMessage::Bye);
        assert_eq!(a.authenticate(session_token), None);
    }

    #[test]
    fn wire_format_uses_type_tag() {
        let m: SignalMessage =
            serde_json::from_str(r#"{"type":"join","requested_role":"co_host","client_id":"w1"}"#).unwrap();
        assert_eq!(m, SignalMessage::Join { requested_role: Role::CoHost, client_id: "w1".into() });
        assert_eq!(serde_json::to_string(&SignalMessage::Bye).unwrap(), r#"{"type":"bye"}"#);
    }
}
