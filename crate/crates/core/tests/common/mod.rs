//! Deterministic pseudo-random generators shared by the integration suites.

use rand::rngs::StdRng;
use rand::Rng;
use zerodim::dynamics::{FiniteSystem, StateSet};
use zerodim::inverse_limit::InverseSystem;

pub fn random_system(rng: &mut StdRng, max_states: usize) -> FiniteSystem {
    let n = rng.gen_range(1..=max_states);
    let map = (0..n).map(|_| rng.gen_range(0..n)).collect();
    FiniteSystem::new(map).expect("entries in range")
}

/// A random tower built fiber-wise so the bonding squares commute by
/// construction: each deeper state projects by `s % size`, and its image is
/// drawn from the fiber over the projected image.
pub fn random_tower(rng: &mut StdRng, depth: usize, base_size: usize) -> InverseSystem {
    let n1 = rng.gen_range(1..=base_size);
    let mut levels = vec![random_system(rng, n1)];
    // random_system may pick fewer states than n1.
    let mut sizes = vec![levels[0].size()];
    let mut bonds = Vec::new();
    for _ in 1..depth {
        let below = sizes[sizes.len() - 1];
        let factor = rng.gen_range(1..=2usize);
        let size = below * factor;
        let bond: Vec<usize> = (0..size).map(|s| s % below).collect();
        let prev = levels.last().unwrap().clone();
        let mut map = Vec::with_capacity(size);
        for &b in &bond {
            let target_below = prev.apply(b);
            // Fiber over target_below: states ≡ target_below (mod below).
            let k = rng.gen_range(0..factor);
            map.push(target_below + k * below);
        }
        levels.push(FiniteSystem::new(map).expect("in range"));
        bonds.push(bond);
        sizes.push(size);
    }
    let tower = InverseSystem::new(levels, bonds).expect("well shaped");
    debug_assert!(tower.validate().is_ok());
    tower
}

/// A random partition of `0..size` into at most `max_blocks` nonempty blocks.
pub fn random_partition(rng: &mut StdRng, size: usize, max_blocks: usize) -> Vec<StateSet> {
    let b = rng.gen_range(1..=max_blocks.min(size));
    let mut buckets = vec![Vec::new(); b];
    for s in 0..size {
        buckets[rng.gen_range(0..b)].push(s);
    }
    buckets
        .into_iter()
        .filter(|v| !v.is_empty())
        .map(StateSet::from_vec)
        .collect()
}
