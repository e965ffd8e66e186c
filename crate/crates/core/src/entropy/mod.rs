//! Rank merging, position coding and the MQ arithmetic coder.

pub mod bitstream;
pub mod merge;
pub mod mq;
pub mod positions;

pub use bitstream::{SequenceEntry, SequenceStream, WzBitstream};
pub use merge::{build_merge_map, merge_ranks, MergeMap};
pub use mq::{mq_decode, mq_encode, MqContext, MqDecoder, MqEncoder};
pub use positions::{decode_positions, encode_positions, encode_rank_image, CodedRanks, CONTEXTS};
