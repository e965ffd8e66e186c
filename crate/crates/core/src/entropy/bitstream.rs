//! Byte containers for coded WZ frames and whole sequences.
//!
//! A WZ frame record:
//!
//! ```text
//! "LRTW" | version u8 | width u16 | height u16 | N u8 | delta i8 | variant u8
//!        | sampling u8 | block_size u8 | mean count u16 | means | mq_len u32 | mq bytes
//! ```
//!
//! Multi-byte integers are little-endian. Bit 7 of the variant byte is set
//! when rank merging was disabled at the encoder.
//!
//! A sequence file (`"LRTD"`) holds the GOP length and, for every frame, a
//! role byte and the WZ record (empty for key frames, which travel
//! separately).

use crate::error::{Error, Result};
use crate::lrt::{LrtParams, Sampling, Variant};
use crate::media::{block_count, MeanGrid};

pub const WZ_MAGIC: [u8; 4] = *b"LRTW";
pub const SEQ_MAGIC: [u8; 4] = *b"LRTD";
pub const FORMAT_VERSION: u8 = 1;

const NO_MERGE_FLAG: u8 = 0x80;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WzBitstream {
    pub width: usize,
    pub height: usize,
    pub params: LrtParams,
    /// Whether ranks were merged before position coding.
    pub merged: bool,
    pub means: MeanGrid,
    pub payload: Vec<u8>,
}

impl WzBitstream {
    pub const HEADER_BYTES: usize = 4 + 1 + 2 + 2 + 1 + 1 + 1 + 1 + 1 + 2;

    pub fn encoded_len(&self) -> usize {
        Self::HEADER_BYTES + self.means.means.len() + 4 + self.payload.len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let w = u16::try_from(self.width).map_err(|_| Error::param("width exceeds 65535"))?;
        let h = u16::try_from(self.height).map_err(|_| Error::param("height exceeds 65535"))?;
        let bs = u8::try_from(self.means.block_size)
            .map_err(|_| Error::param("mean block size exceeds 255"))?;
        let mc = u16::try_from(self.means.means.len())
            .map_err(|_| Error::param("too many block means"))?;
        let mq_len =
            u32::try_from(self.payload.len()).map_err(|_| Error::param("payload too large"))?;

        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&WZ_MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&w.to_le_bytes());
        out.extend_from_slice(&h.to_le_bytes());
        out.push(self.params.n);
        out.push(self.params.delta as u8);
        let flag = if self.merged { 0 } else { NO_MERGE_FLAG };
        out.push(self.params.variant.code() | flag);
        out.push(self.params.sampling.code());
        out.push(bs);
        out.extend_from_slice(&mc.to_le_bytes());
        out.extend_from_slice(&self.means.means);
        out.extend_from_slice(&mq_len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Parse one record occupying all of `buf`.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        if r.take(4)? != WZ_MAGIC {
            return Err(Error::bitstream("bad WZ magic"));
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(Error::bitstream(format!("unsupported version {version}")));
        }
        let width = r.u16()? as usize;
        let height = r.u16()? as usize;
        if width == 0 || height == 0 {
            return Err(Error::bitstream("zero frame dimension"));
        }
        let n = r.u8()?;
        let delta = r.u8()? as i8;
        let vbyte = r.u8()?;
        let variant = Variant::from_code(vbyte & !NO_MERGE_FLAG)
            .ok_or_else(|| Error::bitstream(format!("bad variant byte {vbyte:#04x}")))?;
        let merged = vbyte & NO_MERGE_FLAG == 0;
        let sbyte = r.u8()?;
        let sampling = Sampling::from_code(sbyte)
            .ok_or_else(|| Error::bitstream(format!("bad sampling byte {sbyte}")))?;
        let params = LrtParams { n, delta, variant, sampling };
        params.validate().map_err(|e| Error::bitstream(e.to_string()))?;
        let block_size = r.u8()? as usize;
        if block_size == 0 {
            return Err(Error::bitstream("zero mean block size"));
        }
        let count = r.u16()? as usize;
        if count != block_count(width, height, block_size) {
            return Err(Error::bitstream(format!(
                "{count} means for a {width}x{height} frame in {block_size}-pixel blocks"
            )));
        }
        let means = r.take(count)?.to_vec();
        let mq_len = r.u32()? as usize;
        let payload = r.take(mq_len)?.to_vec();
        if r.remaining() != 0 {
            return Err(Error::bitstream(format!("{} trailing bytes", r.remaining())));
        }
        Ok(WzBitstream {
            width,
            height,
            params,
            merged,
            means: MeanGrid { block_size, width, height, means },
            payload,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SequenceEntry {
    Key,
    Wz(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceStream {
    pub gop: u8,
    pub entries: Vec<SequenceEntry>,
}

impl SequenceStream {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count =
            u32::try_from(self.entries.len()).map_err(|_| Error::param("too many frames"))?;
        let mut out = Vec::new();
        out.extend_from_slice(&SEQ_MAGIC);
        out.push(FORMAT_VERSION);
        out.push(self.gop);
        out.extend_from_slice(&count.to_le_bytes());
        for e in &self.entries {
            match e {
                SequenceEntry::Key => {
                    out.push(0);
                    out.extend_from_slice(&0u32.to_le_bytes());
                }
                SequenceEntry::Wz(bytes) => {
                    let len = u32::try_from(bytes.len())
                        .map_err(|_| Error::param("WZ record too large"))?;
                    out.push(1);
                    out.extend_from_slice(&len.to_le_bytes());
                    out.extend_from_slice(bytes);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        if r.take(4)? != SEQ_MAGIC {
            return Err(Error::bitstream("bad sequence magic"));
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(Error::bitstream(format!("unsupported version {version}")));
        }
        let gop = r.u8()?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            let role = r.u8()?;
            let len = r.u32()? as usize;
            match role {
                0 if len == 0 => entries.push(SequenceEntry::Key),
                0 => return Err(Error::bitstream(format!("key frame {i} carries data"))),
                1 => entries.push(SequenceEntry::Wz(r.take(len)?.to_vec())),
                _ => return Err(Error::bitstream(format!("bad role byte {role} at frame {i}"))),
            }
        }
        if r.remaining() != 0 {
            return Err(Error::bitstream(format!("{} trailing bytes", r.remaining())));
        }
        Ok(SequenceStream { gop, entries })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::bitstream(format!(
                "need {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            ))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}
