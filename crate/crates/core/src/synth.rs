//! Synthetic bit-pattern worlds: item `i` has attribute `j` iff bit `j` of
//! `i` is set.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{Interaction, RawData};
use crate::{Error, Result, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticOptions {
    pub n_bits: u32,
    pub n_users: u32,
    pub interactions_per_user: u32,
    /// Bits each user's taste pins down; their items all share that pattern.
    pub pattern_bits: u32,
    /// Adds attribute `j + n_bits` for "bit j unset" and makes each bit a
    /// two-valued facet, so every item has exactly `n_bits` attributes.
    pub complement: bool,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions { n_bits: 10, n_users: 50, interactions_per_user: 20, pattern_bits: 2, complement: false }
    }
}

pub fn item_has_bit(item: u32, bit: u32) -> bool {
    item >> bit & 1 == 1
}

/// Generates the world. Interactions are timestamp-free, so splits use
/// the seeded shuffle.
pub fn make_synthetic(opts: &SyntheticOptions, rng: &mut Rng) -> Result<RawData> {
    let n = opts.n_bits;
    if !(1..=12).contains(&n) {
        return Err(Error::InvalidConfig("n_bits must lie in 1..=12".into()));
    }
    if opts.pattern_bits > n {
        return Err(Error::InvalidConfig("pattern_bits cannot exceed n_bits".into()));
    }
    let n_items = 1u32 << n;
    let n_attrs = if opts.complement { 2 * n } else { n };
    let mut item_attrs = Vec::new();
    for i in 0..n_items {
        for j in 0..n {
            if item_has_bit(i, j) {
                item_attrs.push((i, j));
            } else if opts.complement {
                item_attrs.push((i, j + n));
            }
        }
    }
    let facets = opts.complement.then(|| (0..n_attrs).map(|p| p % n).collect());

    let bits: Vec<u32> = (0..n).collect();
    let mut interactions = Vec::new();
    for u in 0..opts.n_users {
        let pinned: Vec<u32> = bits.choose_multiple(rng, opts.pattern_bits as usize).copied().collect();
        let values: Vec<bool> = pinned.iter().map(|_| rng.gen()).collect();
        let mut pool: Vec<u32> = (0..n_items)
            .filter(|&i| pinned.iter().zip(&values).all(|(&b, &on)| item_has_bit(i, b) == on))
            .collect();
        pool.shuffle(rng);
        for &v in pool.iter().take(opts.interactions_per_user as usize) {
            interactions.push(Interaction { user: u, item: v, timestamp: None });
        }
    }
    Ok(RawData { n_users: opts.n_users, n_items, n_attrs, interactions, item_attrs, facets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DataConfig;
    use crate::dataset::Dataset;
    use crate::rng_from_seed;
    use alloc::vec;

    #[test]
    fn bit_construction() {
        let raw = make_synthetic(&SyntheticOptions { n_bits: 3, n_users: 4, interactions_per_user: 2, ..Default::default() }, &mut rng_from_seed(0)).unwrap();
        assert_eq!(raw.n_items, 8);
        let of5: Vec<u32> = raw.item_attrs.iter().filter(|(v, _)| *v == 5).map(|&(_, p)| p).collect();
        assert_eq!(of5, vec![0, 2]);
    }

    #[test]
    fn attributes_split_items_in_half() {
        for complement in [false, true] {
            let opts = SyntheticOptions { n_bits: 6, complement, ..Default::default() };
            let raw = make_synthetic(&opts, &mut rng_from_seed(0)).unwrap();
            for p in 0..raw.n_attrs {
                assert_eq!(raw.item_attrs.iter().filter(|x| x.1 == p).count(), 32);
            }
        }
    }

    #[test]
    fn users_follow_their_pattern_and_are_deterministic() {
        let opts = SyntheticOptions { n_bits: 6, n_users: 10, interactions_per_user: 12, pattern_bits: 2, complement: false };
        let a = make_synthetic(&opts, &mut rng_from_seed(3)).unwrap();
        assert_eq!(a, make_synthetic(&opts, &mut rng_from_seed(3)).unwrap());
        for u in 0..10 {
            let items: Vec<u32> = a.interactions.iter().filter(|i| i.user == u).map(|i| i.item).collect();
            assert_eq!(items.len(), 12);
            // two pinned bits shared by every item of the user
            let shared = (0..6).filter(|&b| items.iter().all(|&v| item_has_bit(v, b)) || items.iter().all(|&v| !item_has_bit(v, b))).count();
            assert!(shared >= 2);
        }
        let ds = Dataset::build(&a, &DataConfig::default(), &mut rng_from_seed(3)).unwrap();
        assert_eq!(ds.n_users, 10);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(make_synthetic(&SyntheticOptions { n_bits: 13, ..Default::default() }, &mut rng_from_seed(0)).is_err());
        assert!(make_synthetic(&SyntheticOptions { n_bits: 0, ..Default::default() }, &mut rng_from_seed(0)).is_err());
    }
}
