use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::modspace::{denormalize_from_unit, Modification, SpaceLayout, NUM_DIMS};

/// First 14 primes, one base per modification dim.
pub const PRIMES: [u64; NUM_DIMS] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43];

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// Radical inverse with digits remapped through `perm` (`perm[0] == 0`).
pub fn scrambled_radical_inverse(mut index: u64, base: u64, perm: &[u64]) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * perm[(index % base) as usize] as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// Per-base random digit permutations fixing zero.
#[derive(Debug, Clone)]
pub struct Scramble {
    perms: Vec<Vec<u64>>,
}

impl Scramble {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = PRIMES
            .iter()
            .map(|&b| {
                let mut tail: Vec<u64> = (1..b).collect();
                tail.shuffle(&mut rng);
                std::iter::once(0).chain(tail).collect()
            })
            .collect();
        Scramble { perms }
    }
}

pub fn halton_point(index: u64, scramble: Option<&Scramble>) -> [f64; NUM_DIMS] {
    let mut u = [0.0; NUM_DIMS];
    for (k, v) in u.iter_mut().enumerate() {
        *v = match scramble {
            Some(s) => scrambled_radical_inverse(index, PRIMES[k], &s.perms[k]),
            None => radical_inverse(index, PRIMES[k]),
        };
    }
    u
}

/// The `index`-th Halton point mapped into the modification space.
/// Index 0 (the origin) is never produced; callers start at 1.
pub fn sample_halton(layout: &SpaceLayout, index: u64) -> Modification {
    sample_halton_with(layout, index, None)
}

pub fn sample_halton_with(layout: &SpaceLayout, index: u64, scramble: Option<&Scramble>) -> Modification {
    let u = halton_point(index.max(1), scramble);
    denormalize_from_unit(&u, layout).expect("point has NUM_DIMS entries")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modspace::{is_valid, normalize_to_unit};

    #[test]
    fn textbook_values() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        // 5 = 12 in base 3 -> 0.21 = 2/3 + 1/9
        assert!((radical_inverse(5, 3) - (2.0 / 3.0 + 1.0 / 9.0)).abs() < 1e-15);
        assert!((radical_inverse(5, 3) - 0.7777777777777778).abs() < 1e-15);
    }

    #[test]
    fn first_dim_unit_coordinate_follows_base_two() {
        let layout = SpaceLayout::new(8, 5).unwrap();
        // background has 8 buckets, so the bucket of u=0.5,0.25,0.75 is 4,2,6
        let ids: Vec<_> = (1..=3).map(|i| sample_halton(&layout, i).discrete[0]).collect();
        assert_eq!(ids, vec![Some(4), Some(2), Some(6)]);
        let m = sample_halton(&layout, 1);
        let u = normalize_to_unit(&m, &layout);
        assert!((u[4] - radical_inverse(1, 11)).abs() < 1e-12);
    }

    #[test]
    fn outputs_are_valid_and_pure() {
        let layout = SpaceLayout::new(6, 4).unwrap();
        for i in 1..500 {
            let m = sample_halton(&layout, i);
            assert!(is_valid(&m, &layout));
            assert_eq!(m, sample_halton(&layout, i));
        }
    }

    #[test]
    fn scrambled_points_stay_in_unit_cube() {
        let s = Scramble::new(7);
        for i in 1..200 {
            assert!(halton_point(i, Some(&s)).iter().all(|v| (0.0..1.0).contains(v)));
        }
        assert_ne!(halton_point(3, Some(&s)), halton_point(3, None));
    }
}
