use crate::modspace::{distance, Modification};

pub const DEFAULT_MIN_DISTANCE: f64 = 0.5;

/// Keeps a set of modifications pairwise at least `min_distance` apart.
#[derive(Debug, Clone)]
pub struct DiversityFilter {
    accepted: Vec<Modification>,
    min_distance: f64,
}

impl Default for DiversityFilter {
    fn default() -> Self {
        Self::new(DEFAULT_MIN_DISTANCE)
    }
}

impl DiversityFilter {
    pub fn new(min_distance: f64) -> Self {
        DiversityFilter {
            accepted: Vec::new(),
            min_distance,
        }
    }

    pub fn min_distance(&self) -> f64 {
        self.min_distance
    }

    pub fn accepted(&self) -> &[Modification] {
        &self.accepted
    }

    /// Whether `m` could be accepted right now; does not insert.
    pub fn admits(&self, m: &Modification) -> bool {
        self.accepted
            .iter()
            .all(|a| distance(a, m) >= self.min_distance)
    }

    /// Inserts `m` and returns true iff it is far enough from everything
    /// accepted so far.
    pub fn accept(&mut self, m: &Modification) -> bool {
        let ok = self.admits(m);
        if ok {
            self.accepted.push(*m);
        }
        ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modspace::SpaceLayout;
    use crate::sampler::sample_uniform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_accepted_duplicate_rejected() {
        let mut f = DiversityFilter::default();
        let m = Modification::neutral(0, 0);
        assert!(f.accept(&m));
        assert!(!f.accept(&m));
        assert_eq!(f.accepted().len(), 1);
    }

    #[test]
    fn accepted_set_passes_pairwise_audit() {
        let layout = SpaceLayout::new(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut f = DiversityFilter::new(0.5);
        for _ in 0..2000 {
            f.accept(&sample_uniform(&layout, &mut rng));
        }
        let acc = f.accepted();
        assert!(acc.len() > 10);
        for i in 0..acc.len() {
            for j in i + 1..acc.len() {
                assert!(distance(&acc[i], &acc[j]) >= 0.5);
            }
        }
    }
}
