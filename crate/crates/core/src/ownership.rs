//! Per-peer block ownership: a B-bit set with the operations the samplers
//! and the simulator need.

/// Ownership bit vector over the blocks of one file. Bit `i` set means the
/// peer holds block `i` complete.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Signature {
    blocks: u32,
    words: Vec<u64>,
}

impl Signature {
    pub fn empty(blocks: u32) -> Self {
        let n_words = (blocks as usize).div_ceil(64).max(1);
        Self {
            blocks,
            words: vec![0; n_words],
        }
    }

    pub fn full(blocks: u32) -> Self {
        let mut s = Self::empty(blocks);
        for i in 0..blocks {
            s.insert(i);
        }
        s
    }

    pub fn blocks(&self) -> u32 {
        self.blocks
    }

    pub fn insert(&mut self, block: u32) {
        debug_assert!(block < self.blocks);
        self.words[(block / 64) as usize] |= 1u64 << (block % 64);
    }

    pub fn contains(&self, block: u32) -> bool {
        debug_assert!(block < self.blocks);
        self.words[(block / 64) as usize] & (1u64 << (block % 64)) != 0
    }

    /// Number of blocks held; this is the peer's stage in the download
    /// pipeline.
    pub fn stage(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.stage() == self.blocks
    }

    pub fn union_with(&mut self, other: &Signature) {
        debug_assert_eq!(self.blocks, other.blocks);
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    /// Blocks present in `self` but absent from `other`.
    pub fn any_not_in(&self, other: &Signature) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .any(|(a, b)| a & !b != 0)
    }

    pub fn iter_blocks(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.blocks).filter(move |&i| self.contains(i))
    }

    pub fn missing_blocks(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.blocks).filter(move |&i| !self.contains(i))
    }

    /// Lowercase hex encoding, least-significant byte first; block `i` maps
    /// to bit `i % 8` of byte `i / 8`.
    pub fn to_hex(&self) -> String {
        let n_bytes = (self.blocks as usize).div_ceil(8).max(1);
        let mut out = String::with_capacity(n_bytes * 2);
        for byte_idx in 0..n_bytes {
            let word = self.words[byte_idx / 8];
            let byte = (word >> ((byte_idx % 8) * 8)) as u8;
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn from_hex(blocks: u32, hex: &str) -> Option<Self> {
        let n_bytes = (blocks as usize).div_ceil(8).max(1);
        if hex.len() != n_bytes * 2 {
            return None;
        }
        let mut s = Self::empty(blocks);
        for byte_idx in 0..n_bytes {
            let byte = u8::from_str_radix(&hex[byte_idx * 2..byte_idx * 2 + 2], 16).ok()?;
            s.words[byte_idx / 8] |= (byte as u64) << ((byte_idx % 8) * 8);
        }
        Some(s)
    }
}
