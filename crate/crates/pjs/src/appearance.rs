//! The patch-template appearance dictionary.
//!
//! The target is modeled by a dictionary `D` of `N = n * m` unit-norm atoms:
//! `m` patch templates (one per spatial patch, in row-major grid order),
//! each holding the corresponding patch of `n` previous targets. Block `i`
//! occupies the contiguous column range returned by
//! [`AppearanceDictionary::block_range`]; the blocks partition the columns.
//!
//! Targets carry a recency rank (1 = oldest, `n` = newest). On update, one
//! target slot is drawn with probability proportional to its rank (recent
//! targets are more likely to be removed) and its non-occluded patch atoms
//! are replaced by the new target's patches.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{partition, Template};
use crate::sparse::{Dictionary, SignalGroup};

/// Which end of the recency ranking the replacement draw favors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecencyBias {
    /// Weight `rank`: the newest target is the most likely to be replaced.
    RecentFirst,
    /// Weight `n + 1 - rank`: the oldest target is the most likely.
    OldestFirst,
}

/// Normalizes to unit l2 norm; an (all-zero) patch degenerates to the
/// constant unit vector so the dictionary invariant holds.
pub fn normalize_atom(patch: &DVector<f64>) -> DVector<f64> {
    let norm = patch.norm();
    if norm > 1e-12 {
        patch / norm
    } else {
        DVector::from_element(patch.len(), 1.0 / (patch.len() as f64).sqrt())
    }
}

/// Dictionary of `m` patch templates with `n` atoms each, plus recency
/// metadata. Immutable; updates return a new dictionary, so readers can
/// keep evaluating candidates against a stable snapshot.
#[derive(Clone, Debug)]
pub struct AppearanceDictionary {
    dict: Dictionary,
    n_targets: usize,
    n_patches: usize,
    template_side: usize,
    patch_side: usize,
    /// Recency rank per target slot, a permutation of `1..=n`; `n` = newest.
    ages: Vec<usize>,
}

impl AppearanceDictionary {
    /// Builds the initial dictionary from the first frame's target.
    ///
    /// `extract(dx, dy)` must return the template re-extracted after
    /// shifting the initial state by `(dx, dy)` pixels. Slot `n - 1` holds
    /// `extract(0, 0)`; slots `0..n-1` hold targets shifted by offsets drawn
    /// uniformly from `{-shift_px, .., -1, 1, .., shift_px}^2` (or `(0, 0)`
    /// when `shift_px` is zero), consumed in slot order.
    pub fn init<F, R>(
        mut extract: F,
        n_targets: usize,
        shift_px: u32,
        patch_side: usize,
        rng: &mut R,
    ) -> Result<Self>
    where
        F: FnMut(f64, f64) -> Result<Template>,
        R: Rng + ?Sized,
    {
        if n_targets < 2 {
            return Err(Error::InvalidConfig("need at least 2 targets".into()));
        }
        let base = extract(0.0, 0.0)?;
        let template_side = base.side();
        let base_patches = partition(&base, patch_side)?;
        let n_patches = base_patches.len();
        let patch_dim = patch_side * patch_side;

        let mut targets: Vec<Vec<DVector<f64>>> = Vec::with_capacity(n_targets);
        for _ in 0..n_targets - 1 {
            let (dx, dy) = draw_shift(shift_px, rng);
            let shifted = extract(dx, dy)?;
            targets.push(partition(&shifted, patch_side)?);
        }
        targets.push(base_patches);

        let mut atoms = DMatrix::zeros(patch_dim, n_targets * n_patches);
        for (slot, patches) in targets.iter().enumerate() {
            for (patch, values) in patches.iter().enumerate() {
                atoms.set_column(patch * n_targets + slot, &normalize_atom(values));
            }
        }
        Ok(AppearanceDictionary {
            dict: Dictionary::new(atoms)?,
            n_targets,
            n_patches,
            template_side,
            patch_side,
            ages: (1..=n_targets).collect(),
        })
    }

    /// Replaces one target slot with the new patches, drawn with probability
    /// proportional to recency rank (see [`RecencyBias`]). Patches flagged
    /// occluded keep their old atoms; the replaced slot becomes the newest.
    /// A fully occluded target leaves the dictionary unchanged and consumes
    /// no randomness.
    pub fn replace_target<R: Rng + ?Sized>(
        &self,
        new_patches: &[DVector<f64>],
        occluded: &[bool],
        bias: RecencyBias,
        rng: &mut R,
    ) -> Result<Self> {
        self.check_patches(new_patches)?;
        if occluded.len() != self.n_patches {
            return Err(Error::InvalidInput(format!(
                "occlusion mask has {} entries, expected {}",
                occluded.len(),
                self.n_patches
            )));
        }
        if occluded.iter().all(|&o| o) {
            return Ok(self.clone());
        }
        let weights: Vec<f64> = self
            .ages
            .iter()
            .map(|&rank| match bias {
                RecencyBias::RecentFirst => rank as f64,
                RecencyBias::OldestFirst => (self.n_targets + 1 - rank) as f64,
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut cumulative = 0.0;
        let mut slot = self.n_targets - 1;
        for (j, w) in weights.iter().enumerate() {
            cumulative += w;
            if target < cumulative {
                slot = j;
                break;
            }
        }
        self.replace_slot(slot, new_patches, occluded)
    }

    /// Warm-up update: unconditionally overwrites the oldest slot (rank 1)
    /// with the new target's patches.
    pub fn overwrite_oldest(&self, new_patches: &[DVector<f64>]) -> Result<Self> {
        self.check_patches(new_patches)?;
        let slot = self
            .ages
            .iter()
            .position(|&rank| rank == 1)
            .expect("ages form a permutation of 1..=n");
        self.replace_slot(slot, new_patches, &vec![false; self.n_patches])
    }

    fn replace_slot(
        &self,
        slot: usize,
        new_patches: &[DVector<f64>],
        occluded: &[bool],
    ) -> Result<Self> {
        let mut atoms = self.dict.atoms().clone();
        for (patch, values) in new_patches.iter().enumerate() {
            if occluded[patch] {
                continue;
            }
            atoms.set_column(patch * self.n_targets + slot, &normalize_atom(values));
        }
        let old_rank = self.ages[slot];
        let mut ages = self.ages.clone();
        for rank in ages.iter_mut() {
            if *rank > old_rank {
                *rank -= 1;
            }
        }
        ages[slot] = self.n_targets;
        Ok(AppearanceDictionary {
            dict: Dictionary::new(atoms)?,
            n_targets: self.n_targets,
            n_patches: self.n_patches,
            template_side: self.template_side,
            patch_side: self.patch_side,
            ages,
        })
    }

    fn check_patches(&self, patches: &[DVector<f64>]) -> Result<()> {
        if patches.len() != self.n_patches {
            return Err(Error::InvalidInput(format!(
                "got {} patches, expected {}",
                patches.len(),
                self.n_patches
            )));
        }
        let dim = self.patch_side * self.patch_side;
        if patches.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "patch dimension mismatch, expected {dim}"
            )));
        }
        Ok(())
    }

    /// The solver view of the full `M x N` dictionary.
    pub fn solver_dict(&self) -> &Dictionary {
        &self.dict
    }

    /// Column range of patch template `i` (the index set Lambda_i).
    pub fn block_range(&self, patch: usize) -> std::ops::Range<usize> {
        patch * self.n_targets..(patch + 1) * self.n_targets
    }

    /// `D_{Lambda_i} c_{Lambda_i}`: reconstruction of a signal using only
    /// patch `i`'s own template block of the coefficient vector.
    pub fn reconstruct_in_block(&self, patch: usize, code: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dict.signal_dim());
        for col in self.block_range(patch) {
            let c = code[col];
            if c != 0.0 {
                out.axpy(c, &self.dict.atoms().column(col), 1.0);
            }
        }
        out
    }

    /// `D_{Lambda_i^c} c_{Lambda_i^c}`: reconstruction using every block
    /// except patch `i`'s.
    pub fn reconstruct_outside_block(&self, patch: usize, code: &DVector<f64>) -> DVector<f64> {
        self.dict.atoms() * code - self.reconstruct_in_block(patch, code)
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    pub fn template_side(&self) -> usize {
        self.template_side
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    /// Recency rank per target slot (`n` = newest).
    pub fn ages(&self) -> &[usize] {
        &self.ages
    }

    /// Debug dump: `M N` header line, then M rows of N atom values.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let atoms = self.dict.atoms();
        writeln!(w, "{} {}", atoms.nrows(), atoms.ncols())?;
        for r in 0..atoms.nrows() {
            let row: Vec<String> = (0..atoms.ncols())
                .map(|c| atoms[(r, c)].to_string())
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

fn draw_shift<R: Rng + ?Sized>(shift_px: u32, rng: &mut R) -> (f64, f64) {
    if shift_px == 0 {
        return (0.0, 0.0);
    }
    let side = shift_px as i64;
    let draw = |rng: &mut R| {
        let idx = rng.random_range(0..2 * side);
        if idx < side {
            (idx - side) as f64 // -shift_px ..= -1
        } else {
            (idx - side + 1) as f64 // 1 ..= shift_px
        }
    };
    let dx = draw(rng);
    let dy = draw(rng);
    (dx, dy)
}

/// Ring buffer of the last `k` best-candidate patch lists, oldest first.
#[derive(Clone, Debug)]
pub struct TargetHistory {
    entries: VecDeque<Vec<DVector<f64>>>,
    capacity: usize,
}

impl TargetHistory {
    pub fn new(capacity: usize) -> Self {
        TargetHistory {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Commits a best candidate's patches; the oldest entry falls off once
    /// the buffer holds `k` targets. A zero-capacity history stays empty.
    pub fn push(&mut self, patches: Vec<DVector<f64>>) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(patches);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Groups a candidate patch with the matching patch of each stored
    /// target: columns are history patches oldest first, candidate last.
    pub fn group_signals(
        &self,
        candidate_patch: &DVector<f64>,
        patch_index: usize,
    ) -> Result<SignalGroup> {
        let mut columns: Vec<DVector<f64>> = Vec::with_capacity(self.entries.len() + 1);
        for entry in &self.entries {
            let patch = entry.get(patch_index).ok_or_else(|| {
                Error::InvalidInput(format!("history entry lacks patch {patch_index}"))
            })?;
            columns.push(patch.clone());
        }
        columns.push(candidate_patch.clone());
        SignalGroup::from_columns(&columns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::Template;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Synthetic extractor: a deterministic textured template whose content
    /// translates with the requested shift.
    fn textured_extractor(side: usize) -> impl FnMut(f64, f64) -> Result<Template> {
        move |dx: f64, dy: f64| {
            let pixels = (0..side * side)
                .map(|i| {
                    let x = (i % side) as f64 + dx;
                    let y = (i / side) as f64 + dy;
                    0.5 + 0.4 * ((0.37 * x).sin() * (0.23 * y).cos())
                })
                .collect();
            Template::new(side, pixels)
        }
    }

    fn constant_extractor(side: usize, value: f64) -> impl FnMut(f64, f64) -> Result<Template> {
        move |_, _| Template::new(side, vec![value; side * side])
    }

    #[test]
    fn init_default_geometry_has_160_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dict = AppearanceDictionary::init(textured_extractor(32), 10, 2, 8, &mut rng).unwrap();
        assert_eq!(dict.solver_dict().n_atoms(), 160);
        assert_eq!(dict.n_patches(), 16);
        assert_eq!(dict.solver_dict().signal_dim(), 64);
        // Blocks partition the columns with n atoms each.
        for i in 0..16 {
            assert_eq!(dict.block_range(i).len(), 10);
        }
        assert_eq!(dict.block_range(15).end, 160);
    }

    #[test]
    fn init_zero_shift_duplicates_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dict = AppearanceDictionary::init(textured_extractor(16), 2, 0, 8, &mut rng).unwrap();
        let atoms = dict.solver_dict().atoms();
        for patch in 0..dict.n_patches() {
            let range = dict.block_range(patch);
            let a = atoms.column(range.start);
            let b = atoms.column(range.start + 1);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn init_constant_target_gives_uniform_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dict =
            AppearanceDictionary::init(constant_extractor(16, 0.5), 3, 2, 8, &mut rng).unwrap();
        let expected = 1.0 / 8.0; // 1/sqrt(64)
        for v in dict.solver_dict().atoms().iter() {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn init_rejects_single_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            AppearanceDictionary::init(textured_extractor(16), 1, 2, 8, &mut rng),
            Err(Error::InvalidConfig(_))
        ));
    }

    fn new_patches(dict: &AppearanceDictionary, seed: f64) -> Vec<DVector<f64>> {
        let dim = dict.patch_side() * dict.patch_side();
        (0..dict.n_patches())
            .map(|p| {
                DVector::from_fn(dim, |i, _| {
                    0.5 + 0.3 * ((seed + p as f64 * 1.7 + i as f64 * 0.31).sin())
                })
            })
            .collect()
    }

    #[test]
    fn replace_target_swaps_exactly_one_slot() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let dict = AppearanceDictionary::init(textured_extractor(32), 10, 2, 8, &mut rng).unwrap();
        let patches = new_patches(&dict, 0.4);
        let mask = vec![false; 16];

        let mut update_rng = ChaCha8Rng::seed_from_u64(77);
        let updated = dict
            .replace_target(&patches, &mask, RecencyBias::RecentFirst, &mut update_rng)
            .unwrap();

        // Oracle: replay the categorical draw over weights 1..=10.
        let mut replay = ChaCha8Rng::seed_from_u64(77);
        let total: f64 = dict.ages().iter().map(|&r| r as f64).sum();
        let target = replay.random::<f64>() * total;
        let mut cumulative = 0.0;
        let mut expected_slot = dict.n_targets() - 1;
        for (j, &rank) in dict.ages().iter().enumerate() {
            cumulative += rank as f64;
            if target < cumulative {
                expected_slot = j;
                break;
            }
        }

        let before = dict.solver_dict().atoms();
        let after = updated.solver_dict().atoms();
        for patch in 0..16 {
            for slot in 0..10 {
                let col = patch * 10 + slot;
                let changed = (before.column(col) - after.column(col)).norm() > 1e-12;
                assert_eq!(changed, slot == expected_slot, "patch {patch} slot {slot}");
            }
        }
        assert_eq!(updated.ages()[expected_slot], 10);
        let mut sorted = updated.ages().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn replace_target_fully_occluded_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dict = AppearanceDictionary::init(textured_extractor(16), 4, 2, 8, &mut rng).unwrap();
        let patches = new_patches(&dict, 0.9);
        let mask = vec![true; dict.n_patches()];
        let mut update_rng = ChaCha8Rng::seed_from_u64(5);
        let updated = dict
            .replace_target(&patches, &mask, RecencyBias::RecentFirst, &mut update_rng)
            .unwrap();
        assert_eq!(dict.solver_dict().atoms(), updated.solver_dict().atoms());
        assert_eq!(dict.ages(), updated.ages());
        // No randomness consumed: the next draw matches a fresh stream.
        let mut fresh = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(update_rng.random::<u64>(), fresh.random::<u64>());
    }

    #[test]
    fn replace_target_occluded_patches_keep_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dict = AppearanceDictionary::init(textured_extractor(16), 3, 1, 8, &mut rng).unwrap();
        let patches = new_patches(&dict, 1.3);
        let mut mask = vec![false; dict.n_patches()];
        mask[1] = true;
        let mut update_rng = ChaCha8Rng::seed_from_u64(6);
        let updated = dict
            .replace_target(&patches, &mask, RecencyBias::RecentFirst, &mut update_rng)
            .unwrap();
        let range = dict.block_range(1);
        let before = dict.solver_dict().atoms().columns(range.start, range.len());
        let after = updated
            .solver_dict()
            .atoms()
            .columns(range.start, range.len());
        assert_eq!(before, after);
    }

    #[test]
    fn replace_target_recency_weighting_monte_carlo() {
        // With n = 2 the newest slot carries weight 2 of 3.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let dict = AppearanceDictionary::init(textured_extractor(16), 2, 1, 8, &mut rng).unwrap();
        let newest_slot = dict.ages().iter().position(|&r| r == 2).unwrap();
        let patches = new_patches(&dict, 2.2);
        let mask = vec![false; dict.n_patches()];

        let trials = 10_000;
        let mut newest_hits = 0;
        for seed in 0..trials {
            let mut update_rng = ChaCha8Rng::seed_from_u64(seed);
            let updated = dict
                .replace_target(&patches, &mask, RecencyBias::RecentFirst, &mut update_rng)
                .unwrap();
            // The replaced slot is the one whose first atom changed.
            let before = dict.solver_dict().atoms().column(newest_slot);
            let after = updated.solver_dict().atoms().column(newest_slot);
            if (before - after).norm() > 1e-12 {
                newest_hits += 1;
            }
        }
        let rate = newest_hits as f64 / trials as f64;
        assert!((rate - 2.0 / 3.0).abs() < 0.02, "rate = {rate}");
    }

    #[test]
    fn overwrite_oldest_walks_slots_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut dict =
            AppearanceDictionary::init(textured_extractor(16), 4, 1, 8, &mut rng).unwrap();
        // Initially ranks are 1..=4 in slot order; three overwrites hit
        // slots 0, 1, 2 in turn, leaving the initial target slot (3) alone.
        let initial_atoms = dict.solver_dict().atoms().clone();
        for step in 0..3 {
            let patches = new_patches(&dict, step as f64);
            dict = dict.overwrite_oldest(&patches).unwrap();
            let col = step; // patch 0, slot `step`
            let changed =
                (initial_atoms.column(col) - dict.solver_dict().atoms().column(col)).norm() > 1e-12;
            assert!(changed, "slot {step} should have been overwritten");
        }
        let col_init = 3; // patch 0, slot 3 (the first-frame target)
        assert_eq!(
            initial_atoms.column(col_init),
            dict.solver_dict().atoms().column(col_init)
        );
        // After three overwrites the first-frame target is the oldest.
        assert_eq!(dict.ages()[3], 1);
    }

    #[test]
    fn normalize_atom_is_idempotent() {
        let patch = DVector::from_vec(vec![0.3, 0.4, 0.0, 1.2]);
        let once = normalize_atom(&patch);
        let twice = normalize_atom(&once);
        assert!((&once - &twice).norm() < 1e-15);
        assert!((once.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn group_signals_empty_history_is_single_column() {
        let history = TargetHistory::new(4);
        let candidate = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let group = history.group_signals(&candidate, 0).unwrap();
        assert_eq!(group.group_size(), 1);
        assert_eq!(group.signals().column(0), candidate.column(0));
    }

    #[test]
    fn group_signals_orders_history_oldest_first() {
        let mut history = TargetHistory::new(4);
        let mk = |v: f64| {
            vec![
                DVector::from_element(3, v),
                DVector::from_element(3, v + 10.0),
            ]
        };
        history.push(mk(1.0));
        history.push(mk(2.0));
        let candidate = DVector::from_element(3, 9.0);
        let group = history.group_signals(&candidate, 1).unwrap();
        assert_eq!(group.group_size(), 3);
        assert_eq!(group.signals()[(0, 0)], 11.0);
        assert_eq!(group.signals()[(0, 1)], 12.0);
        assert_eq!(group.signals()[(0, 2)], 9.0);
    }

    #[test]
    fn group_signals_full_history_gives_k_plus_one_columns() {
        let mut history = TargetHistory::new(4);
        for v in 0..6 {
            history.push(vec![DVector::from_element(2, v as f64)]);
        }
        assert_eq!(history.len(), 4); // ring buffer keeps the last k
        let group = history
            .group_signals(&DVector::from_element(2, -1.0), 0)
            .unwrap();
        assert_eq!(group.group_size(), 5);
        // Oldest retained entry is v = 2.
        assert_eq!(group.signals()[(0, 0)], 2.0);
        assert_eq!(group.signals()[(0, 4)], -1.0);
    }

    #[test]
    fn snapshot_roundtrips_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let dict = AppearanceDictionary::init(textured_extractor(16), 2, 1, 8, &mut rng).unwrap();
        let mut buf = Vec::new();
        dict.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("64 8"));
        assert_eq!(text.lines().count(), 65);
        let first_row: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split(' ')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(first_row.len(), 8);
        assert!((first_row[0] - dict.solver_dict().atoms()[(0, 0)]).abs() < 1e-15);
    }
}
