//! Two-party private embedding lookup over a framed, byte-counted channel.

pub mod baseline;
pub mod channel;
pub mod dealer;
pub mod frame;
pub mod online;
pub mod transcript;

use thiserror::Error;

use crate::coeff_packing::PackingError;
use crate::quantizer::QuantError;
use crate::rlwe::HeError;
use crate::slot_packing::SlotError;

pub use baseline::{run_baseline_offline, BaselineResult};
pub use channel::{memory_pair, tcp_loopback_pair, Endpoint, MemoryTransport, StreamTransport, Transport};
pub use dealer::{align_bitwidth, DealerConfig};
pub use frame::{Frame, Message, MessageKind, FRAME_HEADER_LEN};
pub use online::{
    client_build_query, client_finish, run_online_query, run_online_query_over, server_eval, ClientShares, ClientState,
    OnlineConfig, PublicConfig, QueryResult, ServerShares, ServerTable,
};
pub use transcript::{Direction, Phase, Stage, TrafficMeta, Transcript, TranscriptEntry};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("corrupt frame: {0}")]
    CorruptFrame(String),
    #[error("channel closed by peer")]
    ChannelClosed,
    #[error("token {token} out of range for a table of {m} tokens")]
    TokenRange { token: usize, m: usize },
    #[error("unsupported scale: {0}")]
    UnsupportedScale(String),
    #[error("share width {ell} is below the widest input share ({needed} bits) or above 63")]
    AlignWidth { ell: u32, needed: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Packing(#[from] PackingError),
    #[error(transparent)]
    Slot(#[from] SlotError),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// Plaintext bit-width needed to hold one output accumulation exactly:
/// `b_w + 1` for a one-hot input, otherwise `b_x + b_w + ceil(log2 m) + 1`.
pub fn required_plaintext_bits(one_hot: bool, b_w: u32, b_x: u32, m: usize) -> u32 {
    if one_hot {
        b_w + 1
    } else {
        let log_m = m.max(1).next_power_of_two().trailing_zeros();
        b_x + b_w + log_m + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulation_bits() {
        assert_eq!(required_plaintext_bits(true, 12, 1, 32000), 13);
        assert_eq!(required_plaintext_bits(false, 12, 1, 32000), 29);
        assert_eq!(required_plaintext_bits(false, 12, 1, 1), 14);
        assert_eq!(required_plaintext_bits(false, 4, 1, 64), 12);
        assert_eq!(required_plaintext_bits(false, 4, 1, 65), 13);
    }
}
