//! 0/1 knapsack model shared by the flow scheduler and its reference solvers.
//!
//! A congested link is the knapsack, each parallel flow is an item whose weight is
//! its size in KB and whose value is its ToS tag. The exact solvers here are the
//! oracles that the swarm solver in [`crate::bpso`] is checked against.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on `(n + 1) * (capacity + 1)` cells for [`solve_exact_dp`].
pub const DEFAULT_DP_CELL_BUDGET: u64 = 100_000_000;

/// Largest instance [`solve_exhaustive`] accepts.
pub const MAX_EXHAUSTIVE_ITEMS: usize = 25;

pub const MIN_ITEM_VALUE: u32 = 1;
pub const MAX_ITEM_VALUE: u32 = 255;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KnapsackError {
    #[error("item {id} has value {value}, expected {MIN_ITEM_VALUE}..={MAX_ITEM_VALUE}")]
    InvalidValue { id: usize, value: u32 },
    #[error("item id {0} appears more than once")]
    DuplicateId(usize),
    #[error("dp table needs {cells} cells, budget is {budget}")]
    CapacityTooLarge { cells: u128, budget: u64 },
    #[error("exhaustive search limited to {MAX_EXHAUSTIVE_ITEMS} items, got {0}")]
    InstanceTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KnapsackItem {
    pub id: usize,
    /// Size in KB.
    pub weight: u64,
    pub value: u32,
}

impl KnapsackItem {
    pub fn new(id: usize, weight: u64, value: u32) -> Result<Self, KnapsackError> {
        if !(MIN_ITEM_VALUE..=MAX_ITEM_VALUE).contains(&value) {
            return Err(KnapsackError::InvalidValue { id, value });
        }
        Ok(Self { id, weight, value })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnapsackInstance {
    items: Vec<KnapsackItem>,
    capacity: u64,
}

impl KnapsackInstance {
    pub fn new(items: Vec<KnapsackItem>, capacity: u64) -> Result<Self, KnapsackError> {
        let mut seen = std::collections::HashSet::with_capacity(items.len());
        for item in &items {
            if !(MIN_ITEM_VALUE..=MAX_ITEM_VALUE).contains(&item.value) {
                return Err(KnapsackError::InvalidValue { id: item.id, value: item.value });
            }
            if !seen.insert(item.id) {
                return Err(KnapsackError::DuplicateId(item.id));
            }
        }
        Ok(Self { items, capacity })
    }

    /// Builds an instance from `(weight, value)` pairs, numbering items by position.
    pub fn from_pairs(pairs: &[(u64, u32)], capacity: u64) -> Result<Self, KnapsackError> {
        let items = pairs.iter().enumerate().map(|(id, &(w, v))| KnapsackItem::new(id, w, v)).collect::<Result<Vec<_>, _>>()?;
        Self::new(items, capacity)
    }

    pub fn items(&self) -> &[KnapsackItem] {
        &self.items
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total_value(&self) -> u64 {
        self.items.iter().map(|i| u64::from(i.value)).sum()
    }

    pub fn total_weight(&self) -> u64 {
        self.items.iter().map(|i| i.weight).sum()
    }

    /// `(value, weight)` of a selection; panics if the length does not match.
    pub fn evaluate(&self, selection: &[bool]) -> (u64, u64) {
        assert_eq!(selection.len(), self.items.len(), "selection length mismatch");
        self.items
            .iter()
            .zip(selection)
            .filter(|(_, &on)| on)
            .fold((0, 0), |(v, w), (item, _)| (v + u64::from(item.value), w + item.weight))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnapsackSolution {
    pub selection: Vec<bool>,
    pub total_value: u64,
    pub total_weight: u64,
}

impl KnapsackSolution {
    pub fn from_selection(instance: &KnapsackInstance, selection: Vec<bool>) -> Self {
        let (total_value, total_weight) = instance.evaluate(&selection);
        Self { selection, total_value, total_weight }
    }

    pub fn is_feasible(&self, instance: &KnapsackInstance) -> bool {
        self.total_weight <= instance.capacity()
    }

    pub fn selected_count(&self) -> usize {
        self.selection.iter().filter(|&&b| b).count()
    }
}

/// Exact optimum by dynamic programming, using [`DEFAULT_DP_CELL_BUDGET`].
pub fn solve_exact_dp(instance: &KnapsackInstance) -> Result<KnapsackSolution, KnapsackError> {
    solve_exact_dp_with_budget(instance, DEFAULT_DP_CELL_BUDGET)
}

/// Exact optimum by dynamic programming over suffixes of the item list.
///
/// Only one bit per `(item, capacity)` cell is kept: whether the item is required to
/// reach the suffix optimum. Walking the items front to back and skipping every item
/// that is not required yields the lexicographically smallest optimal selection.
pub fn solve_exact_dp_with_budget(instance: &KnapsackInstance, cell_budget: u64) -> Result<KnapsackSolution, KnapsackError> {
    let n = instance.len();
    let cells = (n as u128 + 1) * (u128::from(instance.capacity()) + 1);
    if cells > u128::from(cell_budget) {
        return Err(KnapsackError::CapacityTooLarge { cells, budget: cell_budget });
    }
    let width = instance.capacity() as usize + 1;
    let mut best = vec![0u64; width];
    let mut required = BitTable::new(n, width);

    for (i, item) in instance.items().iter().enumerate().rev() {
        let w = item.weight as usize;
        let v = u64::from(item.value);
        if w >= width {
            continue;
        }
        // Descending capacity so each item is used at most once.
        for c in (w..width).rev() {
            let with_item = best[c - w] + v;
            if with_item > best[c] {
                best[c] = with_item;
                required.set(i, c);
            }
        }
    }

    let mut selection = vec![false; n];
    let mut c = width - 1;
    for (i, item) in instance.items().iter().enumerate() {
        if required.get(i, c) {
            selection[i] = true;
            c -= item.weight as usize;
        }
    }
    let solution = KnapsackSolution::from_selection(instance, selection);
    debug_assert_eq!(solution.total_value, best[width - 1]);
    Ok(solution)
}

/// Exact optimum by enumerating every subset in lexicographic order of the selection.
pub fn solve_exhaustive(instance: &KnapsackInstance) -> Result<KnapsackSolution, KnapsackError> {
    let n = instance.len();
    if n > MAX_EXHAUSTIVE_ITEMS {
        return Err(KnapsackError::InstanceTooLarge(n));
    }
    let items = instance.items();
    let mut best_mask = 0u32;
    let mut best_value = 0u64;
    // Item i lives in bit n-1-i, so ascending masks are ascending selections.
    for mask in 1u32..(1u32 << n) {
        let mut weight = 0u64;
        let mut value = 0u64;
        for (i, item) in items.iter().enumerate() {
            if mask >> (n - 1 - i) & 1 == 1 {
                weight += item.weight;
                value += u64::from(item.value);
            }
        }
        if weight <= instance.capacity() && value > best_value {
            best_value = value;
            best_mask = mask;
        }
    }
    let selection = (0..n).map(|i| best_mask >> (n - 1 - i) & 1 == 1).collect();
    Ok(KnapsackSolution::from_selection(instance, selection))
}

/// Greedy by non-increasing value density; zero-weight items rank first.
pub fn solve_greedy_ratio(instance: &KnapsackInstance) -> KnapsackSolution {
    let mut selection = vec![false; instance.len()];
    let mut remaining = instance.capacity();
    for idx in density_order(instance) {
        let item = &instance.items()[idx];
        if item.weight <= remaining {
            remaining -= item.weight;
            selection[idx] = true;
        }
    }
    KnapsackSolution::from_selection(instance, selection)
}

/// Item positions sorted by non-increasing value/weight, ties by smaller id.
pub fn density_order(instance: &KnapsackInstance) -> Vec<usize> {
    let items = instance.items();
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| compare_density(&items[b], &items[a]).then_with(|| items[a].id.cmp(&items[b].id)));
    order
}

/// Orders two items by value/weight without floating point; weight 0 is +inf.
pub(crate) fn compare_density(a: &KnapsackItem, b: &KnapsackItem) -> std::cmp::Ordering {
    match (a.weight, b.weight) {
        (0, 0) => a.value.cmp(&b.value),
        (0, _) => std::cmp::Ordering::Greater,
        (_, 0) => std::cmp::Ordering::Less,
        (wa, wb) => {
            let lhs = u128::from(a.value) * u128::from(wb);
            let rhs = u128::from(b.value) * u128::from(wa);
            lhs.cmp(&rhs)
        }
    }
}

struct BitTable {
    width: usize,
    words: Vec<u64>,
}

impl BitTable {
    fn new(rows: usize, width: usize) -> Self {
        let bits = rows * width;
        Self { width, words: vec![0; bits.div_ceil(64)] }
    }

    fn set(&mut self, row: usize, col: usize) {
        let bit = row * self.width + col;
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    fn get(&self, row: usize, col: usize) -> bool {
        let bit = row * self.width + col;
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }
}
