use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::render::Frame;

use super::signal::Role;

pub const MAX_CHAT_CHARS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub msg_id: u64,
    pub sender: String,
    pub sender_role: Role,
    pub text: String,
    pub t: u64,
    pub relayed: bool,
}

/// Public chat history. Ids start at 1 and never repeat.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatLedger {
    messages: Vec<ChatMessage>,
}

impl ChatLedger {
    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn get(&self, msg_id: u64) -> Option<&ChatMessage> {
        // Ids are dense, so the position is known.
        let i = usize::try_from(msg_id.checked_sub(1)?).ok()?;
        self.messages.get(i)
    }

    pub fn since(&self, after_id: u64) -> &[ChatMessage] {
        let start = (after_id as usize).min(self.messages.len());
        &self.messages[start..]
    }

    pub(crate) fn push(&mut self, sender: &str, sender_role: Role, text: &str, t: u64) -> &ChatMessage {
        let msg_id = self.messages.len() as u64 + 1;
        self.messages.push(ChatMessage {
            msg_id,
            sender: sender.to_owned(),
            sender_role,
            text: text.to_owned(),
            t,
            relayed: false,
        });
        self.messages.last().unwrap()
    }

    pub(crate) fn mark_relayed(&mut self, msg_id: u64) -> Option<&ChatMessage> {
        let i = usize::try_from(msg_id.checked_sub(1)?).ok()?;
        let m = self.messages.get_mut(i)?;
        m.relayed = true;
        Some(m)
    }

    /// JSON-lines dump for persistence.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&serde_json::to_string(m).expect("chat message serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioDestination {
    VrHost,
    CoHost,
    Spectators,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioPacket {
    pub source_role: Role,
    #[serde(with = "bytes_b64")]
    pub payload: Vec<u8>,
    pub t: u64,
}

mod bytes_b64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    const B64: base64::engine::GeneralPurpose = base64::engine::general_purpose::STANDARD;

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s).map_err(serde::de::Error::custom)
    }
}

/// Where a packet from `source` goes. The host reaches spectators only when
/// on air; the co-host channel is always private to the host.
pub fn route_audio(source: Role, on_air: bool) -> Vec<AudioDestination> {
    match source {
        Role::VrHost if on_air => vec![AudioDestination::CoHost, AudioDestination::Spectators],
        Role::VrHost => vec![AudioDestination::CoHost],
        Role::CoHost => vec![AudioDestination::VrHost],
        Role::Spectator => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TabletItem {
    Chat { msg_id: u64, sender: String, text: String, t: u64 },
    PrivateText { text: String, t: u64 },
    Windowed {
        windowed_id: u64,
        t: u64,
        frame_sha256: String,
        #[serde(skip)]
        composited: Arc<Frame>,
    },
}

/// What the VR user's in-world tablet shows.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TabletState {
    #[serde(skip)]
    pub snapshot: Option<Arc<Frame>>,
    pub snapshot_sha256: Option<String>,
    pub snapshot_t: u64,
    pub on_air: bool,
    /// Append-only.
    pub history: Vec<TabletItem>,
    /// Windowed annotations currently pinned on the tablet.
    pub windowed_visible: Vec<u64>,
}

impl TabletState {
    pub(crate) fn set_snapshot(&mut self, frame: Frame) {
        self.snapshot_sha256 = Some(crate::fanout::hex(&crate::fanout::sha256(&frame.pixels)));
        self.snapshot_t = frame.pts;
        self.snapshot = Some(Arc::new(frame));
    }

    pub fn newest(&self) -> Option<&TabletItem> {
        self.history.last()
    }
}
