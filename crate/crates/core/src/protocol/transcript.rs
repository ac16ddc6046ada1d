//! Append-only byte log of every protocol message.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::frame::{MessageKind, FRAME_HEADER_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ClientToServer,
    ServerToClient,
    Dealer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    Query,
    Response,
    ShareSync,
    Alignment,
}

impl Phase {
    pub fn of(kind: MessageKind) -> Phase {
        match kind {
            MessageKind::Config => Phase::Setup,
            MessageKind::QueryCiphertexts => Phase::Query,
            MessageKind::ResponseCiphertexts => Phase::Response,
            MessageKind::ShareSync => Phase::ShareSync,
            MessageKind::AlignRequest | MessageKind::AlignResponse => Phase::Alignment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Offline,
    Online,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u32,
    pub direction: Direction,
    pub kind: MessageKind,
    pub phase: Phase,
    pub stage: Stage,
    pub payload_len: u64,
    /// Payload plus frame header.
    pub byte_len: u64,
    /// Charged by a cost estimate rather than sent.
    #[serde(default)]
    pub estimated: bool,
}

/// Public parameters of the run the transcript belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficMeta {
    pub degree_n: usize,
    pub q_bits: u32,
    pub p_bits: u32,
    pub m: usize,
    pub n: usize,
    pub n_eff: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub meta: Option<TrafficMeta>,
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(meta: Option<TrafficMeta>) -> Self {
        Self { meta, entries: Vec::new() }
    }

    pub fn record(&mut self, seq: u32, direction: Direction, kind: MessageKind, stage: Stage, payload_len: usize) {
        self.entries.push(TranscriptEntry {
            seq,
            direction,
            kind,
            phase: Phase::of(kind),
            stage,
            payload_len: payload_len as u64,
            byte_len: (payload_len + FRAME_HEADER_LEN) as u64,
            estimated: false,
        });
    }

    /// Record a cost-model charge that has no real frame behind it.
    pub fn record_estimate(&mut self, direction: Direction, kind: MessageKind, stage: Stage, bytes: u64) {
        let seq = self.entries.iter().filter(|e| e.direction == direction).count() as u32;
        self.entries.push(TranscriptEntry {
            seq,
            direction,
            kind,
            phase: Phase::of(kind),
            stage,
            payload_len: bytes,
            byte_len: bytes,
            estimated: true,
        });
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.byte_len).sum()
    }

    pub fn phase_bytes(&self, phase: Phase) -> u64 {
        self.entries.iter().filter(|e| e.phase == phase).map(|e| e.byte_len).sum()
    }

    pub fn stage_bytes(&self, stage: Stage) -> u64 {
        self.entries.iter().filter(|e| e.stage == stage).map(|e| e.byte_len).sum()
    }

    /// Payload bytes (no frame headers) of real messages of one kind.
    pub fn payload_bytes(&self, kind: MessageKind) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.kind == kind && !e.estimated)
            .map(|e| e.payload_len)
            .sum()
    }

    pub fn count(&self, kind: MessageKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    pub fn subtotals(&self) -> BTreeMap<Phase, u64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.phase).or_insert(0) += e.byte_len;
        }
        out
    }

    pub fn summary(&self) -> TranscriptSummary {
        TranscriptSummary {
            messages: self.entries.len(),
            total_bytes: self.total_bytes(),
            by_phase: self.subtotals(),
            offline_bytes: self.stage_bytes(Stage::Offline),
            online_bytes: self.stage_bytes(Stage::Online),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSummary {
    pub messages: usize,
    pub total_bytes: u64,
    pub by_phase: BTreeMap<Phase, u64>,
    pub offline_bytes: u64,
    pub online_bytes: u64,
}
