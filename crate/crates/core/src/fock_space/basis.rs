use std::collections::HashMap;
use std::fmt;

use crate::error::{domain, Result};

/// One bosonic degree of freedom in the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    /// Cavity mode `k`, 1-based.
    Mode(usize),
    /// The mirror oscillator, always stored last.
    Mirror,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Mode(k) => write!(f, "mode {k}"),
            Slot::Mirror => write!(f, "mirror"),
        }
    }
}

/// Truncation parameters of a Fock basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockLayout {
    /// Number of cavity modes `K`.
    pub modes: usize,
    /// Occupation cap `N` of each cavity mode.
    pub per_mode_max: usize,
    /// Occupation cap of the mirror slot; `None` leaves the mirror out.
    pub mirror_max: Option<usize>,
    /// Cap `C` on the total occupation over all slots.
    pub total_cap: Option<usize>,
}

impl FockLayout {
    pub fn field(modes: usize, per_mode_max: usize) -> Self {
        Self {
            modes,
            per_mode_max,
            mirror_max: None,
            total_cap: None,
        }
    }

    pub fn with_mirror(mut self, mirror_max: usize) -> Self {
        self.mirror_max = Some(mirror_max);
        self
    }

    pub fn with_total_cap(mut self, cap: usize) -> Self {
        self.total_cap = Some(cap);
        self
    }

    pub fn slot_count(&self) -> usize {
        self.modes + usize::from(self.mirror_max.is_some())
    }

    pub fn slot_max(&self, index: usize) -> usize {
        if index < self.modes {
            self.per_mode_max
        } else {
            self.mirror_max.expect("mirror slot present")
        }
    }
}

/// Occupation-number basis with a bijective indexer.
///
/// Tuples are ordered lexicographically with the first cavity mode most
/// significant and the mirror slot last. A basis may additionally admit
/// `excess` quanta above the per-slot caps (summed over slots); such padded
/// bases host exact products whose result is later cropped back to the
/// unpadded states.
#[derive(Clone)]
pub struct FockBasis {
    layout: FockLayout,
    excess: usize,
    states: Vec<Box<[u16]>>,
    lookup: HashMap<Box<[u16]>, usize>,
}

impl fmt::Debug for FockBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FockBasis")
            .field("layout", &self.layout)
            .field("excess", &self.excess)
            .field("dim", &self.dim())
            .finish()
    }
}

impl PartialEq for FockBasis {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.excess == other.excess
    }
}

impl FockBasis {
    pub fn new(layout: FockLayout) -> Result<Self> {
        Self::with_excess(layout, 0)
    }

    /// Basis admitting up to `excess` quanta above the per-slot caps, and the
    /// total cap (if any) raised by the same amount.
    pub fn with_excess(layout: FockLayout, excess: usize) -> Result<Self> {
        if layout.modes == 0 {
            return domain("a Fock basis needs at least one cavity mode");
        }
        if layout.per_mode_max == 0 {
            return domain("per-mode occupation cap must be positive");
        }
        if layout.mirror_max == Some(0) {
            return domain("mirror occupation cap must be positive");
        }
        let slots = layout.slot_count();
        let limits: Vec<usize> = (0..slots).map(|i| layout.slot_max(i) + excess).collect();
        if limits.iter().any(|&l| l > u16::MAX as usize) {
            return domain("occupation cap too large");
        }
        let total_limit = layout.total_cap.map(|c| c + excess);
        let mut states = Vec::new();
        let mut current = vec![0u16; slots];
        enumerate(
            &layout,
            &limits,
            excess,
            total_limit,
            0,
            0,
            0,
            &mut current,
            &mut states,
        );
        let lookup = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Self {
            layout,
            excess,
            states,
            lookup,
        })
    }

    /// Number of states `with_excess(layout, excess)` would hold, counted
    /// without enumerating them; saturates at `usize::MAX`.
    pub fn count(layout: &FockLayout, excess: usize) -> usize {
        let slots = layout.slot_count();
        let total_limit = layout.total_cap.map(|c| c + excess);
        let width = total_limit.map_or(1, |t| t + 1);
        // ways[e][t]: tuples so far using `e` excess quanta and total `t`.
        let mut ways = vec![vec![0usize; width]; excess + 1];
        ways[0][0] = 1;
        for slot in 0..slots {
            let cap = layout.slot_max(slot);
            let mut next = vec![vec![0usize; width]; excess + 1];
            for (e, row) in ways.iter().enumerate() {
                for (t, &w) in row.iter().enumerate() {
                    if w == 0 {
                        continue;
                    }
                    for n in 0..=cap + excess {
                        let e2 = e + n.saturating_sub(cap);
                        if e2 > excess {
                            break;
                        }
                        let t2 = if total_limit.is_some() { t + n } else { 0 };
                        if t2 >= width {
                            break;
                        }
                        next[e2][t2] = next[e2][t2].saturating_add(w);
                    }
                }
            }
            ways = next;
        }
        ways.iter()
            .flatten()
            .fold(0usize, |a, &w| a.saturating_add(w))
    }

    pub fn layout(&self) -> &FockLayout {
        &self.layout
    }

    pub fn excess(&self) -> usize {
        self.excess
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn modes(&self) -> usize {
        self.layout.modes
    }

    pub fn includes_mirror(&self) -> bool {
        self.layout.mirror_max.is_some()
    }

    /// Position of `slot` in the occupation tuple.
    pub fn slot_index(&self, slot: Slot) -> Result<usize> {
        match slot {
            Slot::Mode(k) if k >= 1 && k <= self.layout.modes => Ok(k - 1),
            Slot::Mode(k) => domain(format!("mode {k} outside 1..={}", self.layout.modes)),
            Slot::Mirror if self.includes_mirror() => Ok(self.layout.modes),
            Slot::Mirror => domain("basis has no mirror slot"),
        }
    }

    pub fn state(&self, index: usize) -> &[u16] {
        &self.states[index]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u16]> + '_ {
        self.states.iter().map(|s| &**s)
    }

    pub fn index_of(&self, occupations: &[u16]) -> Option<usize> {
        self.lookup.get(occupations).copied()
    }

    /// Index of a tuple, or a domain error naming it.
    pub fn require(&self, occupations: &[u16]) -> Result<usize> {
        match self.index_of(occupations) {
            Some(i) => Ok(i),
            None => domain(format!("occupation tuple {occupations:?} not in basis")),
        }
    }

    pub fn vacuum_index(&self) -> usize {
        0
    }

    /// True when every occupation is below its cap and the total is below the
    /// total cap, so one raising step cannot leave the basis.
    pub fn is_safe(&self, index: usize) -> bool {
        let state = &self.states[index];
        let below = state
            .iter()
            .enumerate()
            .all(|(i, &n)| (n as usize) < self.layout.slot_max(i) + self.excess);
        let total: usize = state.iter().map(|&n| n as usize).sum();
        below
            && self
                .layout
                .total_cap
                .is_none_or(|c| total < c + self.excess)
    }

    pub fn safe_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.is_safe(i)).collect()
    }

    /// Indices in `self` of the states of `smaller`, in `smaller`'s order.
    pub fn embedding_of(&self, smaller: &FockBasis) -> Result<Vec<usize>> {
        smaller.states().map(|s| self.require(s)).collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    layout: &FockLayout,
    limits: &[usize],
    excess_cap: usize,
    total_limit: Option<usize>,
    slot: usize,
    total: usize,
    excess: usize,
    current: &mut Vec<u16>,
    out: &mut Vec<Box<[u16]>>,
) {
    if slot == limits.len() {
        out.push(current.clone().into_boxed_slice());
        return;
    }
    let cap = layout.slot_max(slot);
    for n in 0..=limits[slot] {
        let over = n.saturating_sub(cap);
        if excess + over > excess_cap {
            break;
        }
        if total_limit.is_some_and(|t| total + n > t) {
            break;
        }
        current[slot] = n as u16;
        enumerate(
            layout,
            limits,
            excess_cap,
            total_limit,
            slot + 1,
            total + n,
            excess + over,
            current,
            out,
        );
    }
    current[slot] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_is_product_without_cap() {
        let b = FockBasis::new(FockLayout::field(3, 2).with_mirror(4)).unwrap();
        assert_eq!(b.dim(), 3 * 3 * 3 * 5);
    }

    #[test]
    fn dimension_counts_capped_tuples() {
        let layout = FockLayout::field(2, 3).with_total_cap(3);
        let b = FockBasis::new(layout).unwrap();
        let brute = (0..=3)
            .flat_map(|a| (0..=3).map(move |c| a + c))
            .filter(|&t| t <= 3)
            .count();
        assert_eq!(b.dim(), brute);
    }

    #[test]
    fn ordering_is_lexicographic_with_mirror_last() {
        let b = FockBasis::new(FockLayout::field(2, 1).with_mirror(1)).unwrap();
        let states: Vec<Vec<u16>> = b.states().map(|s| s.to_vec()).collect();
        let mut sorted = states.clone();
        sorted.sort();
        assert_eq!(states, sorted);
        assert_eq!(states[1], vec![0, 0, 1]);
        assert_eq!(b.slot_index(Slot::Mirror).unwrap(), 2);
    }

    #[test]
    fn indexer_round_trips() {
        let b = FockBasis::new(FockLayout::field(3, 3).with_mirror(2).with_total_cap(5)).unwrap();
        for i in 0..b.dim() {
            assert_eq!(b.index_of(b.state(i)), Some(i));
        }
    }

    #[test]
    fn excess_counts_quanta_above_caps() {
        let layout = FockLayout::field(2, 1);
        let b = FockBasis::with_excess(layout, 2).unwrap();
        for s in b.states() {
            let over: usize = s.iter().map(|&n| (n as usize).saturating_sub(1)).sum();
            assert!(over <= 2);
        }
        // 4 states with no excess, 2·2·2 with one slot over, 1 with both.
        assert_eq!(b.dim(), 4 + 8 + 1);
        let small = FockBasis::new(layout).unwrap();
        let embed = b.embedding_of(&small).unwrap();
        assert_eq!(embed.len(), small.dim());
    }

    #[test]
    fn count_matches_enumeration() {
        for layout in [
            FockLayout::field(2, 3),
            FockLayout::field(3, 2).with_mirror(4).with_total_cap(5),
            FockLayout::field(1, 1).with_mirror(2),
        ] {
            for excess in 0..4 {
                let b = FockBasis::with_excess(layout, excess).unwrap();
                assert_eq!(FockBasis::count(&layout, excess), b.dim());
            }
        }
    }

    #[test]
    fn invalid_slots_and_layouts() {
        let b = FockBasis::new(FockLayout::field(2, 2)).unwrap();
        assert!(b.slot_index(Slot::Mirror).is_err());
        assert!(b.slot_index(Slot::Mode(0)).is_err());
        assert!(b.slot_index(Slot::Mode(3)).is_err());
        assert!(FockBasis::new(FockLayout::field(0, 2)).is_err());
        assert!(b.require(&[5, 0]).is_err());
    }

    #[test]
    fn safe_states_are_below_every_cap() {
        let b = FockBasis::new(FockLayout::field(2, 2).with_total_cap(3)).unwrap();
        for i in b.safe_indices() {
            let s = b.state(i);
            assert!(s.iter().all(|&n| n < 2));
            assert!(s.iter().map(|&n| n as usize).sum::<usize>() < 3);
        }
    }
}
