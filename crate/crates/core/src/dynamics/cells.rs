use crate::field::wrap_position;
use crate::scalar::Scalar;
use crate::vec2::Vec2;

/// Uniform cell grid with cells at least `R_c` wide.
///
/// Each cell stores the ascending indices of all particles in its 3×3
/// periodic neighbourhood, so a particle's neighbours are visited in the same
/// order as a brute-force loop over all indices.
#[derive(Debug, Clone)]
pub struct CellGrid<T> {
    pub cells_per_side: usize,
    pub cell_size: T,
    cell_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    candidates: Vec<Vec<usize>>,
}

impl<T: Scalar> CellGrid<T> {
    pub fn build(positions: &[Vec2<T>], delta: T, r_cutoff: T) -> Self {
        let n = (delta / r_cutoff).floor().to_usize().unwrap_or(1).max(1);
        let cell_size = delta / T::from_usize_exact(n);
        let index = |x: T| (x / cell_size).floor().to_usize().unwrap_or(0).min(n - 1);

        let mut members = vec![Vec::new(); n * n];
        let cell_of: Vec<usize> = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let p = wrap_position(p, delta);
                let c = index(p.y) * n + index(p.x);
                members[c].push(i);
                c
            })
            .collect();

        let candidates = (0..n * n)
            .map(|c| {
                let (cy, cx) = (c / n, c % n);
                let mut block: Vec<usize> = Vec::with_capacity(9);
                for dy in [n - 1, 0, 1] {
                    for dx in [n - 1, 0, 1] {
                        block.push(((cy + dy) % n) * n + (cx + dx) % n);
                    }
                }
                block.sort_unstable();
                block.dedup();
                let mut list: Vec<usize> = block.iter().flat_map(|&b| members[b].iter().copied()).collect();
                list.sort_unstable();
                list
            })
            .collect();

        Self { cells_per_side: n, cell_size, cell_of, members, candidates }
    }

    /// All particles that can lie within `R_c` of particle `j`, ascending.
    pub fn candidates_of(&self, j: usize) -> &[usize] {
        &self.candidates[self.cell_of[j]]
    }

    pub fn cell_of(&self, j: usize) -> usize {
        self.cell_of[j]
    }

    pub fn members(&self, cell: usize) -> &[usize] {
        &self.members[cell]
    }
}
