//! Row-parallel stencil helpers with order-fixed reductions.
//!
//! Every reduction is split into fixed-size chunks whose partial sums are
//! combined sequentially, so serial and parallel execution agree bitwise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    #[default]
    Serial,
    Parallel,
}

impl Exec {
    /// Fills `data` row by row; `f(j, row)` writes row `j`.
    pub fn fill_rows<F>(self, data: &mut [f64], width: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        match self {
            Exec::Serial => data.chunks_mut(width).enumerate().for_each(|(j, row)| f(j, row)),
            Exec::Parallel => data.par_chunks_mut(width).enumerate().for_each(|(j, row)| f(j, row)),
        }
    }

    /// Elementwise fill, `f(k)` for flat index `k`.
    pub fn fill<F>(self, data: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        match self {
            Exec::Serial => data.iter_mut().enumerate().for_each(|(k, v)| *v = f(k)),
            Exec::Parallel => data.par_iter_mut().enumerate().for_each(|(k, v)| *v = f(k)),
        }
    }

    /// Deterministic sum of `f(k)` for `k in 0..n`.
    pub fn sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let chunks = n.div_ceil(CHUNK);
        let partial = |c: usize| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut s = 0.0;
            for k in lo..hi {
                s += f(k);
            }
            s
        };
        let partials: Vec<f64> = match self {
            Exec::Serial => (0..chunks).map(partial).collect(),
            Exec::Parallel => (0..chunks).into_par_iter().map(partial).collect(),
        };
        partials.iter().sum()
    }

    pub fn dot(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        self.sum(a.len(), |k| a[k] * b[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_and_parallel_sums_agree_bitwise() {
        let v: Vec<f64> = (0..10_007).map(|k| ((k as f64) * 0.37).sin() * 1e3).collect();
        let s = Exec::Serial.sum(v.len(), |k| v[k]);
        let p = Exec::Parallel.sum(v.len(), |k| v[k]);
        assert_eq!(s.to_bits(), p.to_bits());
    }

    #[test]
    fn fill_rows_visits_every_row() {
        let mut a = vec![0.0; 12];
        Exec::Parallel.fill_rows(&mut a, 4, |j, row| row.iter_mut().for_each(|v| *v = j as f64));
        assert_eq!(a, vec![0., 0., 0., 0., 1., 1., 1., 1., 2., 2., 2., 2.]);
    }
}
