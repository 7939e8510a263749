//! Byte-level corruption of canonical block encodings, for detection tests
//! and the simulator's tamper adversary.

use rand::Rng;

use super::Block;

/// Flips `mask` into byte `index` of the canonical encoding. Returns `None`
/// when the result no longer decodes to a block that re-encodes to exactly
/// the corrupted bytes.
pub fn flip_byte(block: &Block, index: usize, mask: u8) -> Option<Block> {
    let mut bytes = block.canonical_bytes();
    if mask == 0 || index >= bytes.len() {
        return None;
    }
    bytes[index] ^= mask;
    let parsed = Block::from_canonical(&bytes).ok()?;
    (parsed.canonical_bytes() == bytes).then_some(parsed)
}

/// Deterministic corruption starting at `start` (modulo length): the first
/// position whose single-bit flip still decodes.
pub fn flip_first_decodable(block: &Block, start: usize) -> (Block, usize) {
    let len = block.canonical_bytes().len();
    (0..len)
        .map(|k| (start + k) % len)
        .find_map(|i| flip_byte(block, i, 0x01).map(|b| (b, i)))
        .expect("the header alone has decodable positions")
}

/// One random decodable byte flip.
pub fn flip_random_byte<R: Rng>(block: &Block, rng: &mut R) -> (Block, usize) {
    let len = block.canonical_bytes().len();
    loop {
        let index = rng.gen_range(0..len);
        let mask: u8 = rng.gen_range(1..=255);
        if let Some(b) = flip_byte(block, index, mask) {
            return (b, index);
        }
    }
}
