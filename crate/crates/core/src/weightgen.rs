//! Attribution grids to per-cell repair penalty weights.
//!
//! Cells at or above the nearest-rank percentile threshold form a binary map;
//! two-pass connected component labeling finds the largest marked region,
//! which receives the low weight (cheap to change). Everything else gets the
//! high weight.

use thiserror::Error;

use crate::attribution::AttributionGrid;

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error("attribution grid is empty")]
    EmptyGrid,
    #[error("percentile must be strictly between 0 and 100, got {0}")]
    BadPercentile(f64),
    #[error("invalid weight csv: {0}")]
    InvalidFile(String),
}

/// Per-cell positive integer penalties, drawn from {low, high}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightGrid {
    rows: usize,
    cols: usize,
    values: Vec<u32>,
}

impl WeightGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<u32>) -> WeightGrid {
        assert_eq!(values.len(), rows * cols);
        assert!(values.iter().all(|w| *w > 0), "weights must be positive");
        WeightGrid { rows, cols, values }
    }

    /// All cells share one weight; with weight 1 this is the uniform baseline.
    pub fn uniform(rows: usize, cols: usize, weight: u32) -> WeightGrid {
        WeightGrid::new(rows, cols, vec![weight; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.values[row * self.cols + col]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.get(r, c).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<WeightGrid, WeightError> {
        let mut values = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: Result<Vec<u32>, _> = line.split(',').map(|v| v.trim().parse::<u32>()).collect();
            let row = row.map_err(|e| WeightError::InvalidFile(e.to_string()))?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(WeightError::InvalidFile("ragged rows".to_string()))
                }
                _ => {}
            }
            if row.iter().any(|w| *w == 0) {
                return Err(WeightError::InvalidFile("weights must be positive".to_string()));
            }
            values.extend(row);
            rows += 1;
        }
        let cols = cols.ok_or(WeightError::EmptyGrid)?;
        Ok(WeightGrid { rows, cols, values })
    }
}

/// A thresholded attribution map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    pub rows: usize,
    pub cols: usize,
    pub marked: Vec<bool>,
}

impl BinaryMap {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.marked[row * self.cols + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Marks cells at or above the nearest-rank percentile of the values.
///
/// The threshold is the value at rank `ceil(p/100 * n)` of the ascending-sorted
/// values (no interpolation), so the marked set captures the top values and is
/// invariant under positive rescaling.
pub fn threshold_percentile(grid: &AttributionGrid, p: f64) -> Result<BinaryMap, WeightError> {
    if grid.values().is_empty() {
        return Err(WeightError::EmptyGrid);
    }
    if !(0.0 < p && p < 100.0) {
        return Err(WeightError::BadPercentile(p));
    }
    let mut sorted: Vec<f64> = grid.values().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite attributions"));
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    let rank = rank.clamp(1, n);
    let threshold = sorted[rank - 1];
    Ok(BinaryMap {
        rows: grid.rows(),
        cols: grid.cols(),
        marked: grid.values().iter().map(|v| *v >= threshold).collect(),
    })
}

/// Dense labels from 1 in row-major discovery order; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabels {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u32>,
    /// `areas[i]` is the cell count of label `i + 1`.
    pub areas: Vec<usize>,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> DisjointSet {
        DisjointSet { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = x;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass connected component labeling of the marked cells.
pub fn connected_components(map: &BinaryMap, connectivity: Connectivity) -> ComponentLabels {
    let (rows, cols) = (map.rows, map.cols);
    let mut provisional = vec![0u32; rows * cols];
    let mut dsu = DisjointSet::new();

    for r in 0..rows {
        for c in 0..cols {
            if !map.get(r, c) {
                continue;
            }
            // earlier neighbors in scan order
            let mut neighbors: Vec<u32> = Vec::with_capacity(4);
            if c > 0 && map.get(r, c - 1) {
                neighbors.push(provisional[r * cols + c - 1]);
            }
            if r > 0 && map.get(r - 1, c) {
                neighbors.push(provisional[(r - 1) * cols + c]);
            }
            if connectivity == Connectivity::Eight && r > 0 {
                if c > 0 && map.get(r - 1, c - 1) {
                    neighbors.push(provisional[(r - 1) * cols + c - 1]);
                }
                if c + 1 < cols && map.get(r - 1, c + 1) {
                    neighbors.push(provisional[(r - 1) * cols + c + 1]);
                }
            }
            let label = match neighbors.iter().min() {
                None => dsu.make(),
                Some(&min) => {
                    for &n in &neighbors {
                        dsu.union(min, n);
                    }
                    min
                }
            };
            provisional[r * cols + c] = label;
        }
    }

    // second pass: resolve to dense labels in row-major order of first occurrence
    let mut dense: Vec<u32> = vec![0; dsu.parent.len()];
    let mut labels = vec![0u32; rows * cols];
    let mut areas = Vec::new();
    for i in 0..rows * cols {
        if provisional[i] == 0 {
            continue;
        }
        let root = dsu.find(provisional[i]);
        if dense[root as usize] == 0 {
            areas.push(0);
            dense[root as usize] = areas.len() as u32;
        }
        let label = dense[root as usize];
        labels[i] = label;
        areas[(label - 1) as usize] += 1;
    }
    ComponentLabels { rows, cols, labels, areas }
}

/// Knobs for [`attributions_to_weights`].
#[derive(Debug, Clone)]
pub struct WeightGenConfig {
    pub percentile: f64,
    pub low: u32,
    pub high: u32,
    pub connectivity: Connectivity,
}

impl Default for WeightGenConfig {
    fn default() -> Self {
        WeightGenConfig { percentile: 80.0, low: 1, high: 10, connectivity: Connectivity::Eight }
    }
}

/// The largest connected component of the thresholded map gets `low`; every
/// other cell gets `high`. Area ties break toward the smallest label (first in
/// row-major scan order). Constant inputs mark everything, yielding an all-low
/// grid.
pub fn attributions_to_weights(
    grid: &AttributionGrid,
    cfg: &WeightGenConfig,
) -> Result<WeightGrid, WeightError> {
    let map = threshold_percentile(grid, cfg.percentile)?;
    let components = connected_components(&map, cfg.connectivity);
    let mut values = vec![cfg.high; grid.rows() * grid.cols()];
    if let Some(best) = components
        .areas
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
        .map(|(i, _)| (i + 1) as u32)
    {
        for (v, l) in values.iter_mut().zip(components.labels.iter()) {
            if *l == best {
                *v = cfg.low;
            }
        }
    }
    Ok(WeightGrid::new(grid.rows(), grid.cols(), values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{uniform_attribution, AttributionMethod};
    use crate::level::{Level, TileKind};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn grid(rows: usize, cols: usize, values: Vec<f64>) -> AttributionGrid {
        AttributionGrid::new(rows, cols, values, AttributionMethod::IntegratedGradients)
    }

    #[test]
    fn nearest_rank_threshold() {
        let g = grid(2, 2, vec![0.1, 0.2, 0.3, 0.9]);
        let map = threshold_percentile(&g, 80.0).unwrap();
        // rank ceil(0.8 * 4) = 4 -> threshold 0.9, one marked cell
        assert_eq!(map.marked.iter().filter(|m| **m).count(), 1);
        assert!(map.get(1, 1));
    }

    #[test]
    fn ten_values_eighty() {
        let g = grid(2, 5, (1..=10).map(|v| v as f64).collect());
        let map = threshold_percentile(&g, 80.0).unwrap();
        // rank ceil(8) = 8 -> threshold 8, cells >= 8 marked (3 cells)
        assert_eq!(map.marked.iter().filter(|m| **m).count(), 3);
    }

    #[test]
    fn constant_grid_marks_everything() {
        let g = grid(3, 3, vec![0.7; 9]);
        let map = threshold_percentile(&g, 80.0).unwrap();
        assert!(map.marked.iter().all(|m| *m));
    }

    #[test]
    fn bad_percentile_rejected() {
        let g = grid(1, 2, vec![0.0, 1.0]);
        assert_eq!(threshold_percentile(&g, 0.0), Err(WeightError::BadPercentile(0.0)));
        assert_eq!(threshold_percentile(&g, 100.0), Err(WeightError::BadPercentile(100.0)));
    }

    #[test]
    fn checkerboard_connectivity() {
        let mut marked = vec![false; 16];
        for r in 0..4 {
            for c in 0..4 {
                if (r + c) % 2 == 0 {
                    marked[r * 4 + c] = true;
                }
            }
        }
        let map = BinaryMap { rows: 4, cols: 4, marked };
        let eight = connected_components(&map, Connectivity::Eight);
        assert_eq!(eight.areas.len(), 1);
        assert_eq!(eight.areas[0], 8);
        let four = connected_components(&map, Connectivity::Four);
        assert_eq!(four.areas.len(), 8);
        assert!(four.areas.iter().all(|a| *a == 1));
    }

    #[test]
    fn empty_map_has_no_components() {
        let map = BinaryMap { rows: 2, cols: 2, marked: vec![false; 4] };
        let labels = connected_components(&map, Connectivity::Eight);
        assert!(labels.areas.is_empty());
        assert!(labels.labels.iter().all(|l| *l == 0));
    }

    fn flood_fill_areas(map: &BinaryMap, connectivity: Connectivity) -> Vec<usize> {
        let mut seen = vec![false; map.rows * map.cols];
        let mut areas = Vec::new();
        let neighbors_8: &[(i64, i64)] =
            &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
        let neighbors_4: &[(i64, i64)] = &[(-1, 0), (1, 0), (0, -1), (0, 1)];
        let offsets = if connectivity == Connectivity::Eight { neighbors_8 } else { neighbors_4 };
        for start in 0..map.rows * map.cols {
            if seen[start] || !map.marked[start] {
                continue;
            }
            let mut stack = vec![start];
            seen[start] = true;
            let mut area = 0;
            while let Some(i) = stack.pop() {
                area += 1;
                let (r, c) = ((i / map.cols) as i64, (i % map.cols) as i64);
                for (dr, dc) in offsets {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= map.rows as i64 || nc >= map.cols as i64 {
                        continue;
                    }
                    let ni = nr as usize * map.cols + nc as usize;
                    if map.marked[ni] && !seen[ni] {
                        seen[ni] = true;
                        stack.push(ni);
                    }
                }
            }
            areas.push(area);
        }
        areas
    }

    #[test]
    fn labeling_matches_flood_fill_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for trial in 0..50 {
            let marked: Vec<bool> = (0..100).map(|_| rng.random::<f64>() < 0.45).collect();
            let map = BinaryMap { rows: 10, cols: 10, marked };
            for connectivity in [Connectivity::Four, Connectivity::Eight] {
                let labels = connected_components(&map, connectivity);
                let mut ours = labels.areas.clone();
                let mut oracle = flood_fill_areas(&map, connectivity);
                ours.sort_unstable();
                oracle.sort_unstable();
                assert_eq!(ours, oracle, "trial {trial}");
                // labels are dense from 1
                let max = labels.labels.iter().max().copied().unwrap_or(0);
                assert_eq!(max as usize, labels.areas.len());
            }
        }
    }

    #[test]
    fn single_peak_gets_low_weight() {
        let g = grid(2, 2, vec![0.1, 0.2, 0.3, 0.9]);
        let w = attributions_to_weights(&g, &WeightGenConfig::default()).unwrap();
        assert_eq!(w.get(1, 1), 1);
        assert_eq!(w.get(0, 0), 10);
        assert_eq!(w.get(0, 1), 10);
        assert_eq!(w.get(1, 0), 10);
    }

    #[test]
    fn uniform_attribution_gives_all_low() {
        let mut cells = vec![TileKind::Empty; 6 * 6];
        cells[0] = TileKind::Start;
        cells[35] = TileKind::Goal;
        let l = Level::new(6, 6, cells, "cave").unwrap();
        let w = attributions_to_weights(&uniform_attribution(&l), &WeightGenConfig::default()).unwrap();
        assert!(w.values().iter().all(|v| *v == 1));
    }

    #[test]
    fn larger_region_wins() {
        // two marked regions: area 3 (top-left) and area 5 (row 3), high values
        let mut values = vec![0.0; 30];
        let marked_big = [18, 19, 20, 21, 22];
        let marked_small = [0, 1, 6];
        for &i in marked_big.iter().chain(marked_small.iter()) {
            values[i] = 1.0;
        }
        let g = grid(5, 6, values);
        // 22 zeros and 8 ones: the 80th-percentile rank (24 of 30) lands on 1.0
        let map = threshold_percentile(&g, 80.0).unwrap();
        assert_eq!(map.marked.iter().filter(|m| **m).count(), 8);
        let w = attributions_to_weights(&g, &WeightGenConfig::default()).unwrap();
        for &i in &marked_big {
            assert_eq!(w.values()[i], 1);
        }
        for &i in &marked_small {
            assert_eq!(w.values()[i], 10);
        }
    }

    #[test]
    fn area_tie_breaks_to_first_label() {
        // two regions of area 2; the first in scan order wins
        let mut values = vec![0.0; 25];
        for &i in &[0, 1] {
            values[i] = 1.0;
        }
        for &i in &[23, 24] {
            values[i] = 1.0;
        }
        let g = grid(5, 5, values);
        // 21 zeros and 4 ones: the 90th-percentile rank (23 of 25) lands on 1.0
        let w = attributions_to_weights(
            &g,
            &WeightGenConfig { percentile: 90.0, ..WeightGenConfig::default() },
        )
        .unwrap();
        assert_eq!(w.values()[0], 1);
        assert_eq!(w.values()[1], 1);
        assert_eq!(w.values()[23], 10);
        assert_eq!(w.values()[24], 10);
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..20 {
            let values: Vec<f64> = (0..48).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect();
            let g = grid(6, 8, values.clone());
            let w1 = attributions_to_weights(&g, &WeightGenConfig::default()).unwrap();
            for scale in [0.001, 3.5, 1e6] {
                let scaled = grid(6, 8, values.iter().map(|v| v * scale).collect());
                let w2 = attributions_to_weights(&scaled, &WeightGenConfig::default()).unwrap();
                assert_eq!(w1, w2);
            }
        }
    }

    #[test]
    fn weight_csv_round_trip() {
        let w = WeightGrid::new(2, 3, vec![1, 10, 10, 1, 1, 10]);
        assert_eq!(WeightGrid::from_csv(&w.to_csv()).unwrap(), w);
    }
}
