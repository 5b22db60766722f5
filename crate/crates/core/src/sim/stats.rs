//! Node-wise running moments and order statistics.

/// Welford accumulators for a family of series sampled on the same nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMoments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl NodeMoments {
    pub fn new(len: usize) -> Self {
        NodeMoments {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Pairwise combination; deterministic for a fixed merge order.
    pub fn merge(&mut self, other: &NodeMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.count.max(2) - 1) as f64;
        self.m2.iter().map(|s| (s / d).max(0.0)).collect()
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.variance().iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Linearly interpolated quantile of unsorted data, `q` in `[0, 1]`.
pub fn quantile(data: &[f64], q: f64) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(data: &[f64]) -> f64 {
    quantile(data, 0.5)
}

/// Mean and unbiased standard deviation.
pub fn mean_sd(data: &[f64]) -> (f64, f64) {
    let n = data.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = data.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn quantiles() {
        let d = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&d), 2.5);
        assert_eq!(quantile(&d, 0.0), 1.0);
        assert_eq!(quantile(&d, 1.0), 4.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn moments_match_two_pass() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![i as f64, (i * i) as f64 * 0.1])
            .collect();
        let mut m = NodeMoments::new(2);
        rows.iter().for_each(|r| m.push(r));
        let col: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        let (mean, sd) = mean_sd(&col);
        assert_abs_diff_eq!(m.mean()[1], mean, epsilon = 1e-10);
        assert_abs_diff_eq!(m.variance()[1].sqrt(), sd, epsilon = 1e-10);
    }

    proptest! {
        #[test]
        fn merge_equals_single_pass(data in prop::collection::vec(-100.0f64..100.0, 2..60), split in 0usize..60) {
            let split = split.min(data.len());
            let mut whole = NodeMoments::new(1);
            let (mut a, mut b) = (NodeMoments::new(1), NodeMoments::new(1));
            for (i, &x) in data.iter().enumerate() {
                whole.push(&[x]);
                if i < split { a.push(&[x]) } else { b.push(&[x]) }
            }
            a.merge(&b);
            prop_assert_eq!(a.count(), whole.count());
            prop_assert!((a.mean()[0] - whole.mean()[0]).abs() <= 1e-9);
            prop_assert!((a.variance()[0] - whole.variance()[0]).abs() <= 1e-7 * whole.variance()[0].max(1.0));
        }
    }
}
