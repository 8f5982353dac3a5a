//! Fork-join execution over a fixed number of workers.
//!
//! With the `parallel` feature (default) jobs run on a dedicated rayon pool
//! sized to the requested worker count. Without it, or with one worker, jobs
//! run in order on the calling thread. Results come back in job order in both
//! cases, and since every job owns its random stream the two paths produce
//! identical output.

use std::ops::Range;

use crate::error::{Error, Result};

pub struct Workers {
    count: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("worker count must be at least 1".into()));
        }
        #[cfg(feature = "parallel")]
        {
            let pool = if count > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(count)
                        .build()
                        .map_err(|e| Error::InvalidArgument(e.to_string()))?,
                )
            } else {
                None
            };
            Ok(Workers { count, pool })
        }
        #[cfg(not(feature = "parallel"))]
        Ok(Workers { count })
    }

    /// Runs `count` logical workers in order on the calling thread.
    pub fn sequential(count: usize) -> Self {
        Workers {
            count: count.max(1),
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    pub fn map<J, T, F>(&self, jobs: Vec<J>, f: F) -> Vec<T>
    where
        J: Send,
        T: Send,
        F: Fn(J) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| jobs.into_par_iter().map(f).collect());
        }
        jobs.into_iter().map(f).collect()
    }
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workers")
            .field("count", &self.count)
            .field("parallel", &self.is_parallel())
            .finish()
    }
}

/// Splits `data` into disjoint mutable chunks, one per range, where each
/// logical item spans `stride` values.
pub fn split_ranges_mut<'a, T>(
    mut data: &'a mut [T],
    ranges: &[Range<usize>],
    stride: usize,
) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(ranges.len());
    let mut offset = 0;
    for r in ranges {
        debug_assert_eq!(r.start, offset);
        let (head, tail) = data.split_at_mut(r.len() * stride);
        out.push(head);
        data = tail;
        offset = r.end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_keep_job_order() {
        let jobs: Vec<usize> = (0..64).collect();
        let par = Workers::new(4).unwrap().map(jobs.clone(), |j| j * j);
        let seq = Workers::sequential(4).map(jobs, |j| j * j);
        assert_eq!(par, seq);
        assert_eq!(par[7], 49);
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(Workers::new(0).is_err());
    }

    #[test]
    fn split_ranges_are_disjoint() {
        let mut data: Vec<u32> = (0..20).collect();
        let ranges = vec![0..3, 3..3, 3..10];
        let chunks = split_ranges_mut(&mut data, &ranges, 2);
        assert_eq!(chunks.iter().map(|c| c.len()).collect::<Vec<_>>(), vec![6, 0, 14]);
        assert_eq!(chunks[2][0], 6);
    }
}
