//! Adaptive binary arithmetic coder.
//!
//! 32-bit integer interval coder in the Witten/Neal/Cleary style with
//! carry handling via pending bits. Probabilities come from per-context
//! zero/one counters that start uniform and halve at a cap, so encoder
//! and decoder stay in lockstep without signaling.

const TOP: u64 = 1 << 32;
const HALF: u64 = TOP / 2;
const QUARTER: u64 = TOP / 4;
const THREE_QUARTERS: u64 = 3 * QUARTER;

/// Count cap; keeps `range * total` well inside u64.
const MAX_TOTAL: u32 = 1 << 15;

/// Adaptive probability state for one binary context.
#[derive(Debug, Clone)]
pub struct BitModel {
    zeros: u32,
    ones: u32,
}

impl Default for BitModel {
    fn default() -> Self {
        Self::new()
    }
}

impl BitModel {
    /// Uniform prior.
    pub fn new() -> Self {
        BitModel { zeros: 1, ones: 1 }
    }

    #[inline]
    fn total(&self) -> u64 {
        (self.zeros + self.ones) as u64
    }

    #[inline]
    fn update(&mut self, bit: bool) {
        if bit {
            self.ones += 1;
        } else {
            self.zeros += 1;
        }
        if self.zeros + self.ones >= MAX_TOTAL {
            self.zeros = (self.zeros + 1) >> 1;
            self.ones = (self.ones + 1) >> 1;
        }
    }
}

#[derive(Debug)]
pub struct BitEncoder {
    low: u64,
    high: u64,
    pending: u64,
    bits_in: u64,
    out: Vec<u8>,
    current: u8,
    filled: u8,
}

impl Default for BitEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl BitEncoder {
    pub fn new() -> Self {
        BitEncoder {
            low: 0,
            high: TOP - 1,
            pending: 0,
            bits_in: 0,
            out: Vec::new(),
            current: 0,
            filled: 0,
        }
    }

    #[inline]
    fn push_bit(&mut self, bit: bool) {
        self.current = (self.current << 1) | u8::from(bit);
        self.filled += 1;
        if self.filled == 8 {
            self.out.push(self.current);
            self.current = 0;
            self.filled = 0;
        }
    }

    #[inline]
    fn emit(&mut self, bit: bool) {
        self.push_bit(bit);
        while self.pending > 0 {
            self.push_bit(!bit);
            self.pending -= 1;
        }
    }

    /// Encode one bit under `model`, then adapt the model.
    pub fn encode(&mut self, bit: bool, model: &mut BitModel) {
        let range = self.high - self.low + 1;
        let split = self.low + range * model.zeros as u64 / model.total() - 1;
        if bit {
            self.low = split + 1;
        } else {
            self.high = split;
        }
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
        model.update(bit);
        self.bits_in += 1;
    }

    /// Flush the final interval. Returns an empty buffer when nothing was
    /// encoded.
    pub fn finish(mut self) -> Vec<u8> {
        if self.bits_in == 0 {
            return Vec::new();
        }
        self.pending += 1;
        let bit = self.low >= QUARTER;
        self.emit(bit);
        while self.filled != 0 {
            self.push_bit(false);
        }
        self.out
    }
}

#[derive(Debug)]
pub struct BitDecoder<'a> {
    data: &'a [u8],
    next: usize,
    bit_pos: u8,
    low: u64,
    high: u64,
    value: u64,
}

impl<'a> BitDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = BitDecoder {
            data,
            next: 0,
            bit_pos: 0,
            low: 0,
            high: TOP - 1,
            value: 0,
        };
        for _ in 0..32 {
            let bit = d.next_bit();
            d.value = (d.value << 1) | bit;
        }
        d
    }

    /// Bits past the end of the buffer read as zero, matching the
    /// encoder's byte padding.
    #[inline]
    fn next_bit(&mut self) -> u64 {
        if self.next >= self.data.len() {
            return 0;
        }
        let bit = (self.data[self.next] >> (7 - self.bit_pos)) & 1;
        self.bit_pos += 1;
        if self.bit_pos == 8 {
            self.bit_pos = 0;
            self.next += 1;
        }
        bit as u64
    }

    /// Decode one bit under `model`, then adapt the model exactly as the
    /// encoder did.
    pub fn decode(&mut self, model: &mut BitModel) -> bool {
        let range = self.high - self.low + 1;
        let split = self.low + range * model.zeros as u64 / model.total() - 1;
        let bit = self.value > split;
        if bit {
            self.low = split + 1;
        } else {
            self.high = split;
        }
        loop {
            if self.high < HALF {
                // no adjustment
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < THREE_QUARTERS {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            let bit = self.next_bit();
            self.value = (self.value << 1) | bit;
        }
        model.update(bit);
        bit
    }
}
