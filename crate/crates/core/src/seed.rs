//! Counter-based seed fan-out.
//!
//! A repetition's seed is mixed with a purpose tag and an index, so every
//! consumer gets an independent stream that does not depend on how many
//! other repetitions ran or in which order.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Generator = 1,
    Shuffle = 2,
    Classifier = 3,
    Tree = 4,
    Split = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for `purpose` #`index` under `base`.
pub fn derive(base: u64, index: u64, purpose: Purpose) -> u64 {
    let tagged = splitmix64(base ^ ((purpose as u64) << 56));
    splitmix64(tagged ^ splitmix64(index))
}
