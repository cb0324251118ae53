/// Dot product with a compensated (TwoSum) running total. Products are
/// rounded once; the accumulation error is carried separately.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Dot2 {
    sum: f64,
    err: f64,
}

impl Dot2 {
    #[inline]
    pub(crate) fn add(&mut self, a: f64, b: f64) {
        let p = a * b;
        let s = self.sum + p;
        let z = s - self.sum;
        self.err += (self.sum - (s - z)) + (p - z);
        self.sum = s;
    }

    #[inline]
    pub(crate) fn value(self) -> f64 {
        self.sum + self.err
    }
}
