//! Complex 1-D FFT plans. Forward transforms are unnormalized; inverse
//! transforms scale by `1/N`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

pub type ComplexBuffer = Vec<Complex64>;

/// A reusable transform of one fixed length.
pub struct FftPlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: RefCell<Vec<Complex64>>,
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "FFT length must be >= 1");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
        Self { len, forward, inverse, scratch: RefCell::new(scratch) }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Transforms `data` in place as consecutive signals of the plan length.
    pub fn process(&self, data: &mut [Complex64], dir: Direction) {
        assert!(!data.is_empty() && data.len() % self.len == 0, "buffer of {} for length {}", data.len(), self.len);
        let mut scratch = self.scratch.borrow_mut();
        match dir {
            Direction::Forward => self.forward.process_with_scratch(data, &mut scratch),
            Direction::Inverse => {
                self.inverse.process_with_scratch(data, &mut scratch);
                let s = 1.0 / self.len as f64;
                data.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<FftPlan>>> = RefCell::new(HashMap::new());
}

/// Cached plan for `len`, shared within the current thread.
pub fn plan(len: usize) -> Rc<FftPlan> {
    PLANS.with(|p| {
        p.borrow_mut()
            .entry(len)
            .or_insert_with(|| Rc::new(FftPlan::new(len)))
            .clone()
    })
}

pub fn fft1d(x: &[Complex64], dir: Direction) -> ComplexBuffer {
    let mut out = x.to_vec();
    plan(x.len()).process(&mut out, dir);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn naive(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * ((j * k) % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn delta_and_constant() {
        let y = fft1d(&[c(1.0), c(0.0), c(0.0), c(0.0)], Direction::Forward);
        assert!(y.iter().all(|v| (v - c(1.0)).norm() < 1e-15));
        let y = fft1d(&[c(1.0); 4], Direction::Forward);
        assert!((y[0] - c(4.0)).norm() < 1e-15);
        assert!(y[1..].iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn length_six_matches_naive() {
        let x: Vec<Complex64> = (0..6).map(|i| Complex64::new(i as f64 * 0.3 - 1.0, (i * i) as f64 * 0.1)).collect();
        let (fast, slow) = (fft1d(&x, Direction::Forward), naive(&x));
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
        let back = fft1d(&fast, Direction::Inverse);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn assorted_lengths_match_naive() {
        for n in [3, 12, 20, 48, 63, 70, 11, 26, 97] {
            let x: Vec<Complex64> = (0..n).map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos())).collect();
            let (fast, slow) = (fft1d(&x, Direction::Forward), naive(&x));
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-10, "n={n}");
            }
            let back = fft1d(&fast, Direction::Inverse);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).norm() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn length_one() {
        let y = fft1d(&[Complex64::new(2.5, -1.0)], Direction::Inverse);
        assert_eq!(y, vec![Complex64::new(2.5, -1.0)]);
    }

    #[test]
    fn batched_buffer_equals_separate_calls() {
        let x: Vec<Complex64> = (0..36).map(|i| Complex64::new((i as f64).sin(), 0.5 * i as f64)).collect();
        let mut all = x.clone();
        plan(12).process(&mut all, Direction::Forward);
        for (i, chunk) in x.chunks(12).enumerate() {
            assert_eq!(fft1d(chunk, Direction::Forward), all[i * 12..(i + 1) * 12].to_vec());
        }
    }
}
