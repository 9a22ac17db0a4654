//! Exactly rounded summation.
//!
//! Representation vectors are averaged both in batch (training, evaluation)
//! and incrementally (online learning). Both paths go through [`ExactSum`],
//! whose result is the correctly rounded value of the exact sum and therefore
//! independent of the order in which terms arrive.

/// Shewchuk-style accumulator of non-overlapping partial sums.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        debug_assert!(value.is_finite());
        let mut x = value;
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Correctly rounded (round-half-even) value of the exact sum.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            let y = p[n - 1];
            n -= 1;
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }

    /// Exact sum divided by `n`, refined by one residual step so that `n`
    /// copies of `x` average back to exactly `x`.
    pub fn mean(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let d = n as f64;
        let q = self.value() / d;
        let prod = q * d;
        let err = q.mul_add(d, -prod);
        let mut residual = self.clone();
        residual.add(-prod);
        residual.add(-err);
        q + residual.value() / d
    }
}

/// Correctly rounded sum of a sequence.
pub fn fsum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Componentwise exact running sum of equal-length vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactVecSum {
    components: Vec<ExactSum>,
    count: usize,
}

impl ExactVecSum {
    pub fn new(dim: usize) -> Self {
        Self {
            components: vec![ExactSum::new(); dim],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.components.len(), "vector length mismatch");
        for (acc, &x) in self.components.iter_mut().zip(v) {
            acc.add(x);
        }
        self.count += 1;
    }

    /// Mean of everything added so far; the zero vector when empty.
    pub fn mean(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.components.len()];
        }
        self.components.iter().map(|c| c.mean(self.count)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_is_exact() {
        assert_eq!(fsum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(fsum([0.1; 10]), 1.0);
    }

    #[test]
    fn order_independent() {
        let xs = [0.3, 1e-17, -2.5e10, 7.0 / 3.0, 2.5e10, 1e-300, -0.1];
        let a = fsum(xs);
        let mut rev = xs;
        rev.reverse();
        assert_eq!(a.to_bits(), fsum(rev).to_bits());
    }

    #[test]
    fn empty_mean_is_zero() {
        let s = ExactVecSum::new(3);
        assert_eq!(s.mean(), vec![0.0; 3]);
    }

    #[test]
    fn mean_of_copies_is_exact() {
        for x in [979.405225107739, 0.1, -1.0 / 3.0, 1e-300, 3e300] {
            for n in 1..40 {
                let mut acc = ExactSum::new();
                (0..n).for_each(|_| acc.add(x));
                assert_eq!(acc.mean(n), x, "{x} × {n}");
            }
        }
    }
}
