use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{FieldGroup, Slot, SlotLayout, TokenizedMovie, FIELD_GROUPS, MASK};

/// One masked position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskedSlot {
    pub group: FieldGroup,
    pub slot: usize,
    pub original: u32,
}

/// Positions hidden from the encoder for one movie, one per non-empty
/// maskable group.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MaskPlan {
    pub masked: Vec<MaskedSlot>,
}

impl MaskPlan {
    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }
}

/// Token-bearing slots of `group` in `movie`.
pub fn maskable_slots(movie: &TokenizedMovie, layout: &SlotLayout, group: FieldGroup) -> Vec<usize> {
    layout
        .name_slots(group)
        .into_iter()
        .filter(|&s| matches!(movie.slots[s], Slot::Token(_)))
        .collect()
}

/// Replace one uniformly chosen token per non-empty group with MASK.
pub fn apply_mask_with(movie: &TokenizedMovie, layout: &SlotLayout, rng: &mut ChaCha8Rng) -> (TokenizedMovie, MaskPlan) {
    let mut out = movie.clone();
    let mut plan = MaskPlan::default();
    for group in FIELD_GROUPS {
        let candidates = maskable_slots(movie, layout, group);
        if candidates.is_empty() {
            continue;
        }
        let slot = candidates[rng.random_range(0..candidates.len())];
        let Slot::Token(original) = movie.slots[slot] else { unreachable!("filtered to tokens") };
        out.slots[slot] = Slot::Token(MASK);
        plan.masked.push(MaskedSlot { group, slot, original });
    }
    (out, plan)
}

pub fn apply_mask(movie: &TokenizedMovie, layout: &SlotLayout, seed: u64) -> (TokenizedMovie, MaskPlan) {
    apply_mask_with(movie, layout, &mut ChaCha8Rng::seed_from_u64(seed))
}
