//! Private embedding-table lookups: RLWE coefficient packing for the
//! homomorphic matrix-vector product, slot packing of mixed-precision
//! channels, channel quantization and fine-tuning, and the two-party query
//! protocol with its communication model.

pub mod bits;
pub mod coeff_packing;
pub mod costmodel;

pub mod finetune;
pub mod io;
pub mod protocol;
pub mod quantizer;
pub mod ring;
pub mod rlwe;
pub mod scalar;
pub mod slot_packing;
pub mod synth;

pub use scalar::Real;

pub type QuantizedTableF32 = quantizer::QuantizedTable<f32>;
pub type QuantizedTableF64 = quantizer::QuantizedTable<f64>;
pub type ChannelStatsF32 = quantizer::ChannelStats<f32>;
pub type ChannelStatsF64 = quantizer::ChannelStats<f64>;
pub type FinetuneConfigF32 = finetune::FinetuneConfig<f32>;
pub type FinetuneConfigF64 = finetune::FinetuneConfig<f64>;
