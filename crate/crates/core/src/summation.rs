//! Compensated accumulation used by every variation kernel.

/// Kahan–Babuška–Neumaier running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Extend<f64> for NeumaierSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

/// Compensated sum of an iterator.
pub fn sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = NeumaierSum::new();
    acc.extend(iter);
    acc.value()
}

/// Running compensated totals `out[0] = 0`, `out[j] = Σ_{i<j} terms[i]`.
///
/// Each entry is the compensated value of the prefix, so the last entry equals
/// [`sum`] over the same terms bit for bit.
pub fn prefix_sums<I: IntoIterator<Item = f64>>(terms: I) -> Vec<f64> {
    let iter = terms.into_iter();
    let mut out = Vec::with_capacity(iter.size_hint().0 + 1);
    out.push(0.0);
    let mut acc = NeumaierSum::new();
    for t in iter {
        acc.add(t);
        out.push(acc.value());
    }
    out
}
