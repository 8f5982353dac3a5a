//! Blocked storage and static work partitioning.
//!
//! A [`BlockedBuffer`] stores `lanes` values padded up to a multiple of the
//! block width `V`. Lanes inside one block are address-adjacent so per-lane
//! loops over a block compile to vector code. Storage starts on a 64-byte
//! boundary.

use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};

/// Width of the canonical variate layout. Every supported block width
/// divides it, so random variates are assigned to (lane, step) pairs the
/// same way whatever `V` a kernel runs with.
pub const LAYOUT_WIDTH: usize = 16;

pub const ALIGN_BYTES: usize = 64;

/// Number of lanes processed together. `V = 1` is the scalar reference mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockWidth(usize);

impl BlockWidth {
    pub const SCALAR: BlockWidth = BlockWidth(1);
    pub const SUPPORTED: [usize; 5] = [1, 2, 4, 8, 16];

    pub fn new(v: usize) -> Result<Self> {
        if Self::SUPPORTED.contains(&v) {
            Ok(BlockWidth(v))
        } else {
            Err(Error::InvalidShape(format!(
                "block width {v} is not one of 1, 2, 4, 8, 16"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    pub fn is_scalar(self) -> bool {
        self.0 == 1
    }
}

impl fmt::Display for BlockWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy)]
#[repr(C, align(64))]
struct Line([f64; 8]);

/// Contiguous, 64-byte aligned, zero-padded lane storage.
///
/// With `rows > 1` each block holds `rows` consecutive runs of `V` lanes:
/// lane `l` of row `r` in block `b` lives at `b * V * rows + r * V + l`.
#[derive(Clone)]
pub struct BlockedBuffer {
    storage: Vec<Line>,
    lanes: usize,
    rows: usize,
    width: BlockWidth,
}

impl BlockedBuffer {
    pub fn new(lanes: usize, width: BlockWidth) -> Result<Self> {
        Self::with_rows(lanes, 1, width)
    }

    pub fn with_rows(lanes: usize, rows: usize, width: BlockWidth) -> Result<Self> {
        if lanes == 0 || rows == 0 {
            return Err(Error::InvalidShape("buffer needs at least one lane".into()));
        }
        let v = width.get();
        let capacity = lanes.div_ceil(v) * v;
        let words = capacity * rows;
        Ok(BlockedBuffer {
            storage: vec![Line([0.0; 8]); words.div_ceil(8)],
            lanes,
            rows,
            width,
        })
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn block_width(&self) -> BlockWidth {
        self.width
    }

    /// Lanes including padding.
    pub fn capacity(&self) -> usize {
        self.lanes.div_ceil(self.width.get()) * self.width.get()
    }

    pub fn padding(&self) -> usize {
        self.capacity() - self.lanes
    }

    pub fn blocks(&self) -> usize {
        self.capacity() / self.width.get()
    }

    pub fn as_slice(&self) -> &[f64] {
        let len = self.capacity() * self.rows;
        // SAFETY: `Line` is repr(C) over [f64; 8], so the allocation is a
        // contiguous run of at least `len` initialized f64 values.
        unsafe { std::slice::from_raw_parts(self.storage.as_ptr().cast::<f64>(), len) }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        let len = self.capacity() * self.rows;
        // SAFETY: as above, and we hold the unique borrow.
        unsafe { std::slice::from_raw_parts_mut(self.storage.as_mut_ptr().cast::<f64>(), len) }
    }

    /// All rows of block `b`, `rows * V` values.
    pub fn block(&self, b: usize) -> &[f64] {
        let stride = self.width.get() * self.rows;
        &self.as_slice()[b * stride..(b + 1) * stride]
    }

    pub fn block_mut(&mut self, b: usize) -> &mut [f64] {
        let stride = self.width.get() * self.rows;
        &mut self.as_mut_slice()[b * stride..(b + 1) * stride]
    }

    pub fn get(&self, lane: usize, row: usize) -> f64 {
        let v = self.width.get();
        self.as_slice()[(lane / v) * v * self.rows + row * v + lane % v]
    }

    pub fn set(&mut self, lane: usize, row: usize, value: f64) {
        let v = self.width.get();
        let rows = self.rows;
        self.as_mut_slice()[(lane / v) * v * rows + row * v + lane % v] = value;
    }

    /// Logical (unpadded) values of one row, in lane order.
    pub fn row_values(&self, row: usize) -> Vec<f64> {
        (0..self.lanes).map(|l| self.get(l, row)).collect()
    }
}

impl fmt::Debug for BlockedBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockedBuffer")
            .field("lanes", &self.lanes)
            .field("rows", &self.rows)
            .field("block_width", &self.width.get())
            .finish()
    }
}

/// Static assignment of `[0, total)` to workers as contiguous ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkPartition {
    pub total: usize,
    pub workers: usize,
    pub block_width: usize,
    pub ranges: Vec<Range<usize>>,
}

impl WorkPartition {
    pub fn sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }
}

/// Splits `total` items over `workers` ranges made of whole blocks of
/// `align` items. Leftover whole blocks go to the leading workers and the
/// final partial block, if any, to the last worker.
pub fn partition(total: usize, workers: usize, align: usize) -> WorkPartition {
    let workers = workers.max(1);
    let align = align.max(1);
    let full_blocks = total / align;
    let per_worker = full_blocks / workers;
    let extra = full_blocks % workers;
    let mut ranges = Vec::with_capacity(workers);
    let mut start = 0;
    for w in 0..workers {
        let blocks = per_worker + usize::from(w < extra);
        let mut end = start + blocks * align;
        if w + 1 == workers {
            end = total;
        }
        ranges.push(start..end);
        start = end;
    }
    WorkPartition {
        total,
        workers,
        block_width: align,
        ranges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn capacity_rounds_up() {
        let b = BlockedBuffer::new(10, BlockWidth::new(4).unwrap()).unwrap();
        assert_eq!(b.capacity(), 12);
        assert_eq!(b.padding(), 2);
        let b = BlockedBuffer::new(8, BlockWidth::new(8).unwrap()).unwrap();
        assert_eq!((b.capacity(), b.padding()), (8, 0));
        let b = BlockedBuffer::new(1, BlockWidth::SCALAR).unwrap();
        assert_eq!((b.capacity(), b.lanes()), (1, 1));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(BlockWidth::new(3).unwrap_err().kind(), "invalid-shape");
        assert_eq!(BlockWidth::new(32).unwrap_err().kind(), "invalid-shape");
        assert!(BlockedBuffer::new(0, BlockWidth::SCALAR).is_err());
    }

    #[test]
    fn storage_is_aligned_and_zeroed() {
        for v in BlockWidth::SUPPORTED {
            let b = BlockedBuffer::with_rows(37, 2, BlockWidth::new(v).unwrap()).unwrap();
            assert_eq!(b.as_slice().as_ptr() as usize % ALIGN_BYTES, 0);
            assert!(b.as_slice().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn lanes_within_block_are_adjacent() {
        let mut b = BlockedBuffer::with_rows(8, 2, BlockWidth::new(4).unwrap()).unwrap();
        for lane in 0..8 {
            b.set(lane, 0, lane as f64);
            b.set(lane, 1, 100.0 + lane as f64);
        }
        assert_eq!(b.block(0), &[0.0, 1.0, 2.0, 3.0, 100.0, 101.0, 102.0, 103.0]);
        assert_eq!(b.block(1), &[4.0, 5.0, 6.0, 7.0, 104.0, 105.0, 106.0, 107.0]);
        assert_eq!(b.row_values(1)[5], 105.0);
    }

    #[test]
    fn partition_examples() {
        let p = partition(8064, 16, 4);
        assert_eq!(p.sizes(), vec![504; 16]);
        assert_eq!(partition(7, 2, 1).sizes(), vec![4, 3]);
        assert_eq!(partition(8, 1, 4).ranges, vec![0..8]);
    }

    proptest! {
        #[test]
        fn partition_covers_disjointly(n in 1usize..5000, p in 1usize..40, vi in 0usize..5) {
            let v = BlockWidth::SUPPORTED[vi];
            let part = partition(n, p, v);
            prop_assert_eq!(part.ranges.len(), p);
            prop_assert_eq!(part.ranges[0].start, 0);
            prop_assert_eq!(part.ranges[p - 1].end, n);
            for w in part.ranges.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
            for r in &part.ranges[..p - 1] {
                prop_assert!(r.end % v == 0 || r.end == n);
            }
            prop_assert_eq!(part.clone(), partition(n, p, v));
        }

        #[test]
        fn partition_is_balanced(n in 1usize..5000, p in 1usize..40, vi in 0usize..5) {
            let v = BlockWidth::SUPPORTED[vi];
            let sizes = partition(n, p, v).sizes();
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            prop_assert!(max - min <= v, "sizes {:?}", sizes);
        }
    }
}
