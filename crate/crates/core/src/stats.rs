//! Scheduling-independent Monte-Carlo moment accumulation.

use rayon::prelude::*;

use crate::error::{Error, Result};

const BLOCK: usize = 64;

/// First and second moments of a vector-valued sample, accumulated over a
/// fixed block partition of the indices so the result never depends on the
/// number of worker threads.
#[derive(Debug, Clone)]
pub struct Moments {
    pub n: usize,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
}

impl Moments {
    fn zeros(width: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; width],
            sum_sq: vec![0.0; width],
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.n as f64).collect()
    }

    /// Standard error of the mean; NaN for a single sample.
    pub fn stderr(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                if self.n < 2 {
                    return f64::NAN;
                }
                let var = ((q - s * s / n) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
            .collect()
    }
}

fn tree(blocks: &[Moments], width: usize) -> Moments {
    match blocks.len() {
        0 => Moments::zeros(width),
        1 => blocks[0].clone(),
        len => {
            let mid = len / 2;
            tree(&blocks[..mid], width).merge(&tree(&blocks[mid..], width))
        }
    }
}

/// Accumulate `sample(i, buf)` for `i in 0..n`; `buf` has length `width`.
pub fn accumulate<F>(n: usize, width: usize, sample: F) -> Result<Moments>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let blocks: Vec<Moments> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut m = Moments::zeros(width);
            let mut buf = vec![0.0; width];
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                buf.iter_mut().for_each(|x| *x = 0.0);
                sample(i, &mut buf)?;
                m.n += 1;
                for (j, x) in buf.iter().enumerate() {
                    m.sum[j] += x;
                    m.sum_sq[j] += x * x;
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    Ok(tree(&blocks, width))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr_of_known_data() {
        let m = accumulate(4, 1, |i, b| {
            b[0] = i as f64;
            Ok(())
        })
        .unwrap();
        assert_eq!(m.mean(), vec![1.5]);
        // sample variance 5/3
        assert!((m.stderr()[0] - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(accumulate(0, 1, |_, _| Ok(())).is_err());
    }

    #[test]
    fn independent_of_thread_count() {
        let f = |i: usize, b: &mut [f64]| {
            b[0] = (i as f64 * 0.37).sin() * 1e3 + 1e-7 * i as f64;
            Ok(())
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| accumulate(10_001, 1, f)).unwrap();
        let b = four.install(|| accumulate(10_001, 1, f)).unwrap();
        assert_eq!(a.sum[0].to_bits(), b.sum[0].to_bits());
        assert_eq!(a.sum_sq[0].to_bits(), b.sum_sq[0].to_bits());
    }
}
