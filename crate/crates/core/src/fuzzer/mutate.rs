//! Input mutators.
//!
//! The deterministic stages enumerate every variant of an input in a fixed
//! order; havoc and splice draw from a seeded RNG.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Seed,
    Bitflip,
    Arith,
    Interest,
    Havoc,
    Splice,
}

impl Stage {
    pub const DETERMINISTIC: [Stage; 3] = [Stage::Bitflip, Stage::Arith, Stage::Interest];

    pub fn is_deterministic(self) -> bool {
        Self::DETERMINISTIC.contains(&self)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Seed => "seed",
            Stage::Bitflip => "bitflip",
            Stage::Arith => "arith",
            Stage::Interest => "interest",
            Stage::Havoc => "havoc",
            Stage::Splice => "splice",
        })
    }
}

pub const ARITH_MAX: u8 = 35;

/// Byte-sized entries of the interesting-value table (0, 1, -1, 16, 32, 127, 255).
pub const INTERESTING_8: [u8; 6] = [0, 1, 0xff, 16, 32, 127];

/// Word-sized entries (256, 1024, 32767, 65535), written in both byte orders.
pub const INTERESTING_16: [u16; 4] = [256, 1024, 32767, 65535];

const HAVOC_BLOCK_MAX: usize = 32;

/// Whether `old ^ new` is a run of 1, 2 or 4 adjacent bits, i.e. something
/// the bitflip stage already tried.
fn could_be_bitflip(xor: u8) -> bool {
    if xor == 0 {
        return true;
    }
    matches!(xor >> xor.trailing_zeros(), 1 | 3 | 15)
}

/// Exhaustive enumeration of one deterministic stage over an input.
#[derive(Debug, Clone)]
pub struct Deterministic<'a> {
    input: &'a [u8],
    stage: Stage,
    // bitflip: (width index, bit position); arith: (position, delta step);
    // interest: (position, table slot)
    outer: usize,
    inner: usize,
}

pub fn deterministic(input: &[u8], stage: Stage) -> Deterministic<'_> {
    assert!(stage.is_deterministic(), "{stage} is not a deterministic stage");
    Deterministic {
        input,
        stage,
        outer: 0,
        inner: 0,
    }
}

const FLIP_WIDTHS: [usize; 3] = [1, 2, 4];

impl Iterator for Deterministic<'_> {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        let len = self.input.len();
        loop {
            match self.stage {
                Stage::Bitflip => {
                    let width = *FLIP_WIDTHS.get(self.outer)?;
                    let bits = len * 8;
                    if bits < width || self.inner > bits - width {
                        self.outer += 1;
                        self.inner = 0;
                        continue;
                    }
                    let mut out = self.input.to_vec();
                    for b in self.inner..self.inner + width {
                        out[b >> 3] ^= 0x80 >> (b & 7);
                    }
                    self.inner += 1;
                    return Some(out);
                }
                Stage::Arith => {
                    if self.outer >= len {
                        return None;
                    }
                    let steps = 2 * ARITH_MAX as usize;
                    if self.inner >= steps {
                        self.outer += 1;
                        self.inner = 0;
                        continue;
                    }
                    let delta = (self.inner / 2 + 1) as u8;
                    let orig = self.input[self.outer];
                    let new = if self.inner % 2 == 0 {
                        orig.wrapping_add(delta)
                    } else {
                        orig.wrapping_sub(delta)
                    };
                    self.inner += 1;
                    if could_be_bitflip(orig ^ new) {
                        continue;
                    }
                    let mut out = self.input.to_vec();
                    out[self.outer] = new;
                    return Some(out);
                }
                Stage::Interest => {
                    if self.outer >= len {
                        return None;
                    }
                    let slots8 = INTERESTING_8.len();
                    let slots16 = if self.outer + 1 < len { INTERESTING_16.len() * 2 } else { 0 };
                    if self.inner >= slots8 + slots16 {
                        self.outer += 1;
                        self.inner = 0;
                        continue;
                    }
                    let slot = self.inner;
                    self.inner += 1;
                    let mut out = self.input.to_vec();
                    if slot < slots8 {
                        let v = INTERESTING_8[slot];
                        if could_be_bitflip(out[self.outer] ^ v) {
                            continue;
                        }
                        out[self.outer] = v;
                    } else {
                        let k = slot - slots8;
                        let v = INTERESTING_16[k / 2];
                        let bytes = if k % 2 == 0 { v.to_le_bytes() } else { v.to_be_bytes() };
                        if k % 2 == 1 && bytes == v.to_le_bytes() {
                            continue;
                        }
                        out[self.outer..self.outer + 2].copy_from_slice(&bytes);
                        if out == self.input {
                            continue;
                        }
                    }
                    return Some(out);
                }
                _ => return None,
            }
        }
    }
}

fn havoc_op<R: Rng + ?Sized>(buf: &mut Vec<u8>, rng: &mut R, max_len: usize) {
    let len = buf.len();
    match rng.gen_range(0..8) {
        // flip a bit
        0 if len > 0 => {
            let bit = rng.gen_range(0..len * 8);
            buf[bit >> 3] ^= 0x80 >> (bit & 7);
        }
        // set an interesting byte
        1 if len > 0 => {
            let pos = rng.gen_range(0..len);
            buf[pos] = INTERESTING_8[rng.gen_range(0..INTERESTING_8.len())];
        }
        // set a random byte
        2 if len > 0 => {
            let pos = rng.gen_range(0..len);
            buf[pos] = rng.gen();
        }
        // small add/sub
        3 if len > 0 => {
            let pos = rng.gen_range(0..len);
            let delta = rng.gen_range(1..=ARITH_MAX);
            buf[pos] = if rng.gen() {
                buf[pos].wrapping_add(delta)
            } else {
                buf[pos].wrapping_sub(delta)
            };
        }
        // delete a block
        4 if len > 1 => {
            let n = rng.gen_range(1..=(len - 1).min(HAVOC_BLOCK_MAX));
            let at = rng.gen_range(0..=len - n);
            buf.drain(at..at + n);
        }
        // clone a block of the input to another position
        5 if len > 0 && len < max_len => {
            let n = rng.gen_range(1..=len.min(HAVOC_BLOCK_MAX)).min(max_len - len);
            let from = rng.gen_range(0..=len - n);
            let to = rng.gen_range(0..=len);
            let block: Vec<u8> = buf[from..from + n].to_vec();
            buf.splice(to..to, block);
        }
        // insert a constant or random block
        6 | 7 if len < max_len => {
            let n = rng.gen_range(1..=HAVOC_BLOCK_MAX).min(max_len - len);
            let to = rng.gen_range(0..=len);
            let block: Vec<u8> = if rng.gen() {
                vec![rng.gen(); n]
            } else {
                (0..n).map(|_| rng.gen()).collect()
            };
            buf.splice(to..to, block);
        }
        _ => {
            // op not applicable to this length: insert one random byte
            if len < max_len {
                let to = rng.gen_range(0..=len);
                buf.insert(to, rng.gen());
            } else if len > 0 {
                let pos = rng.gen_range(0..len);
                buf[pos] = rng.gen();
            }
        }
    }
}

/// 1–64 stacked random edits (bit flips, byte sets, small arithmetic,
/// block deletion, block cloning, block insertion).
pub fn havoc<R: Rng + ?Sized>(input: &[u8], rng: &mut R, max_len: usize) -> Vec<u8> {
    let mut buf = input.to_vec();
    buf.truncate(max_len);
    let stack = 1usize << rng.gen_range(0..=6);
    for _ in 0..stack {
        havoc_op(&mut buf, rng, max_len);
    }
    buf
}

/// Prefix of `head` joined to a suffix of `tail`, cut at random offsets.
pub fn splice<R: Rng + ?Sized>(head: &[u8], tail: &[u8], rng: &mut R, max_len: usize) -> Vec<u8> {
    let cut_head = if head.len() > 1 { rng.gen_range(1..head.len()) } else { head.len() };
    let cut_tail = if tail.len() > 1 { rng.gen_range(1..tail.len()) } else { 0 };
    let mut out = Vec::with_capacity(cut_head + tail.len() - cut_tail);
    out.extend_from_slice(&head[..cut_head]);
    out.extend_from_slice(&tail[cut_tail..]);
    out.truncate(max_len);
    out
}

/// One mutant of `input` for `stage`. Deterministic stages return a
/// randomly chosen member of their enumeration (or None if it is empty);
/// splice needs `other`.
pub fn mutate<R: Rng + ?Sized>(input: &[u8], stage: Stage, rng: &mut R, other: Option<&[u8]>, max_len: usize) -> Option<Vec<u8>> {
    match stage {
        Stage::Seed => None,
        Stage::Havoc => Some(havoc(input, rng, max_len)),
        Stage::Splice => other.map(|o| splice(input, o, rng, max_len)),
        det => {
            let n = deterministic(input, det).count();
            if n == 0 {
                return None;
            }
            deterministic(input, det).nth(rng.gen_range(0..n))
        }
    }
}
