use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// FNV-1a, 64 bit.
fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed for one pipeline stage, derived from the root seed and a fixed label.
pub fn stage_seed(root: u64, label: &str) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(fnv1a(label));
    rng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_and_roots_separate_streams() {
        assert_eq!(fnv1a(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a("a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(stage_seed(1, "data"), stage_seed(1, "data"));
        assert_ne!(stage_seed(1, "data"), stage_seed(1, "align"));
        assert_ne!(stage_seed(1, "data"), stage_seed(2, "data"));
    }
}
