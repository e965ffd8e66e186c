//! MQ binary arithmetic coder (JPEG 2000 Annex C / JBIG2 flavor).
//!
//! Registers follow the reference software conventions: `A` holds the
//! interval in 16 bits, the encoder `C` register carries 8 spare bits above
//! the 19 output bits for carry resolution, and the decoder keeps the code
//! value in the upper half of a 32-bit `C`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct QeEntry {
    qe: u32,
    nmps: u8,
    nlps: u8,
    switch: bool,
}

const fn qe(qe: u32, nmps: u8, nlps: u8, switch: bool) -> QeEntry {
    QeEntry { qe, nmps, nlps, switch }
}

/// Probability estimation state machine (47 states).
const QE_TABLE: [QeEntry; 47] = [
    qe(0x5601, 1, 1, true),
    qe(0x3401, 2, 6, false),
    qe(0x1801, 3, 9, false),
    qe(0x0AC1, 4, 12, false),
    qe(0x0521, 5, 29, false),
    qe(0x0221, 38, 33, false),
    qe(0x5601, 7, 6, true),
    qe(0x5401, 8, 14, false),
    qe(0x4801, 9, 14, false),
    qe(0x3801, 10, 14, false),
    qe(0x3001, 11, 17, false),
    qe(0x2401, 12, 18, false),
    qe(0x1C01, 13, 20, false),
    qe(0x1601, 29, 21, false),
    qe(0x5601, 15, 14, true),
    qe(0x5401, 16, 14, false),
    qe(0x5101, 17, 15, false),
    qe(0x4801, 18, 16, false),
    qe(0x3801, 19, 17, false),
    qe(0x3401, 20, 18, false),
    qe(0x3001, 21, 19, false),
    qe(0x2801, 22, 19, false),
    qe(0x2401, 23, 20, false),
    qe(0x2201, 24, 21, false),
    qe(0x1C01, 25, 22, false),
    qe(0x1801, 26, 23, false),
    qe(0x1601, 27, 24, false),
    qe(0x1401, 28, 25, false),
    qe(0x1201, 29, 26, false),
    qe(0x1101, 30, 27, false),
    qe(0x0AC1, 31, 28, false),
    qe(0x09C1, 32, 29, false),
    qe(0x08A1, 33, 30, false),
    qe(0x0521, 34, 31, false),
    qe(0x0441, 35, 32, false),
    qe(0x02A1, 36, 33, false),
    qe(0x0221, 37, 34, false),
    qe(0x0141, 38, 35, false),
    qe(0x0111, 39, 36, false),
    qe(0x0085, 40, 37, false),
    qe(0x0049, 41, 38, false),
    qe(0x0025, 42, 39, false),
    qe(0x0015, 43, 40, false),
    qe(0x0009, 44, 41, false),
    qe(0x0005, 45, 42, false),
    qe(0x0001, 45, 43, false),
    qe(0x5601, 46, 46, false),
];

pub const MQ_STATES: usize = QE_TABLE.len();

/// Adaptive probability state of one context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MqContext {
    /// Index into the 47-entry state table.
    pub index: u8,
    /// More probable symbol.
    pub mps: u8,
}

impl MqContext {
    pub const fn new(index: u8, mps: u8) -> Self {
        MqContext { index, mps }
    }

    #[inline]
    fn after_mps(&mut self, e: &QeEntry) {
        self.index = e.nmps;
    }

    #[inline]
    fn after_lps(&mut self, e: &QeEntry) {
        if e.switch {
            self.mps ^= 1;
        }
        self.index = e.nlps;
    }
}

pub struct MqEncoder {
    a: u32,
    c: u32,
    ct: u32,
    // out[0] is a placeholder byte preceding the codeword
    out: Vec<u8>,
    contexts: Vec<MqContext>,
}

impl MqEncoder {
    /// Encoder with `contexts` contexts, all starting in state 0 with MPS 0.
    pub fn new(contexts: usize) -> Self {
        Self::with_states(vec![MqContext::default(); contexts])
    }

    pub fn with_states(contexts: Vec<MqContext>) -> Self {
        MqEncoder { a: 0x8000, c: 0, ct: 12, out: vec![0], contexts }
    }

    pub fn encode(&mut self, symbol: u8, cx: usize) {
        let mut ctx = self.contexts[cx];
        let e = QE_TABLE[ctx.index as usize];
        self.a -= e.qe;
        if symbol == ctx.mps {
            if self.a & 0x8000 == 0 {
                if self.a < e.qe {
                    self.a = e.qe;
                } else {
                    self.c += e.qe;
                }
                ctx.after_mps(&e);
                self.contexts[cx] = ctx;
                self.renorm();
            } else {
                self.c += e.qe;
            }
        } else {
            if self.a < e.qe {
                self.c += e.qe;
            } else {
                self.a = e.qe;
            }
            ctx.after_lps(&e);
            self.contexts[cx] = ctx;
            self.renorm();
        }
    }

    fn renorm(&mut self) {
        loop {
            self.a <<= 1;
            self.c <<= 1;
            self.ct -= 1;
            if self.ct == 0 {
                self.byte_out();
            }
            if self.a & 0x8000 != 0 {
                break;
            }
        }
    }

    fn byte_out(&mut self) {
        let last = self.out.len() - 1;
        if self.out[last] == 0xFF {
            self.out.push((self.c >> 20) as u8);
            self.c &= 0xF_FFFF;
            self.ct = 7;
        } else if self.c < 0x800_0000 {
            self.out.push((self.c >> 19) as u8);
            self.c &= 0x7_FFFF;
            self.ct = 8;
        } else {
            self.out[last] += 1;
            if self.out[last] == 0xFF {
                self.c &= 0x7FF_FFFF;
                self.out.push((self.c >> 20) as u8);
                self.c &= 0xF_FFFF;
                self.ct = 7;
            } else {
                self.out.push((self.c >> 19) as u8);
                self.c &= 0x7_FFFF;
                self.ct = 8;
            }
        }
    }

    /// Terminate the codeword. A trailing 0xFF is dropped since the decoder
    /// synthesizes it past the end of data.
    pub fn finish(mut self) -> Vec<u8> {
        let top = self.c + self.a;
        self.c |= 0xFFFF;
        if self.c >= top {
            self.c -= 0x8000;
        }
        self.c <<= self.ct;
        self.byte_out();
        self.c <<= self.ct;
        self.byte_out();
        if self.out.last() == Some(&0xFF) {
            self.out.pop();
        }
        self.out.remove(0);
        self.out
    }
}

/// Bytes of synthesized 0xFF fill a well-terminated codeword may need; the
/// decoder reports truncation beyond this.
pub const MAX_FILL_BYTES: usize = 3;

pub struct MqDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    a: u32,
    c: u32,
    ct: u32,
    fill: usize,
    contexts: Vec<MqContext>,
}

impl<'a> MqDecoder<'a> {
    pub fn new(data: &'a [u8], contexts: usize) -> Self {
        Self::with_states(data, vec![MqContext::default(); contexts])
    }

    pub fn with_states(data: &'a [u8], contexts: Vec<MqContext>) -> Self {
        let mut d = MqDecoder { data, pos: 0, a: 0, c: 0, ct: 0, fill: 0, contexts };
        d.c = (d.byte(0) as u32) << 16;
        if data.is_empty() {
            d.fill += 1;
        }
        d.byte_in();
        d.c <<= 7;
        d.ct -= 7;
        d.a = 0x8000;
        d
    }

    #[inline]
    fn byte(&self, i: usize) -> u8 {
        self.data.get(i).copied().unwrap_or(0xFF)
    }

    fn byte_in(&mut self) {
        if self.byte(self.pos) == 0xFF {
            if self.byte(self.pos + 1) > 0x8F {
                self.c += 0xFF00;
                self.ct = 8;
                if self.pos + 1 >= self.data.len() {
                    self.fill += 1;
                }
            } else {
                self.pos += 1;
                self.c += (self.byte(self.pos) as u32) << 9;
                self.ct = 7;
            }
        } else {
            self.pos += 1;
            if self.pos >= self.data.len() {
                self.fill += 1;
            }
            self.c += (self.byte(self.pos) as u32) << 8;
            self.ct = 8;
        }
    }

    fn renorm(&mut self) {
        loop {
            if self.ct == 0 {
                self.byte_in();
            }
            self.a <<= 1;
            self.c <<= 1;
            self.ct -= 1;
            if self.a & 0x8000 != 0 {
                break;
            }
        }
    }

    pub fn decode(&mut self, cx: usize) -> u8 {
        let mut ctx = self.contexts[cx];
        let e = QE_TABLE[ctx.index as usize];
        self.a -= e.qe;
        let d;
        if (self.c >> 16) < e.qe {
            // LPS sub-interval, with conditional exchange
            if self.a < e.qe {
                d = ctx.mps;
                ctx.after_mps(&e);
            } else {
                d = ctx.mps ^ 1;
                ctx.after_lps(&e);
            }
            self.contexts[cx] = ctx;
            self.a = e.qe;
            self.renorm();
        } else {
            self.c -= e.qe << 16;
            if self.a & 0x8000 == 0 {
                if self.a < e.qe {
                    d = ctx.mps ^ 1;
                    ctx.after_lps(&e);
                } else {
                    d = ctx.mps;
                    ctx.after_mps(&e);
                }
                self.contexts[cx] = ctx;
                self.renorm();
            } else {
                d = ctx.mps;
            }
        }
        d
    }

    /// Synthesized bytes read past the end of the payload so far.
    pub fn fill_bytes(&self) -> usize {
        self.fill
    }

    /// Fails when decoding needed more data than the payload held.
    pub fn finish(&self) -> Result<()> {
        if self.fill > MAX_FILL_BYTES {
            return Err(Error::Truncated { consumed: self.data.len() });
        }
        Ok(())
    }
}

/// Encode a `(symbol, context)` sequence with `contexts` fresh contexts.
pub fn mq_encode(stream: &[(u8, u8)], contexts: usize) -> Vec<u8> {
    let mut enc = MqEncoder::new(contexts);
    for &(s, cx) in stream {
        enc.encode(s, cx as usize);
    }
    enc.finish()
}

/// Decode one symbol per entry of `context_seq`.
pub fn mq_decode(bytes: &[u8], context_seq: &[u8], contexts: usize) -> Result<Vec<u8>> {
    let mut dec = MqDecoder::new(bytes, contexts);
    let out = context_seq.iter().map(|&cx| dec.decode(cx as usize)).collect();
    dec.finish()?;
    Ok(out)
}
