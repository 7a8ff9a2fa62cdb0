use crate::scalar::Scalar;

/// Scores `s(i, j, l)` for every span `0 <= i < j <= n` and every label
/// index `l`; label 0 is the null label and its score is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanScoreTable<F> {
    n: usize,
    num_labels: usize,
    data: Vec<F>,
}

/// Number of spans over a sentence of length `n`.
pub fn span_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Dense index of span `(i, j)`; spans are ordered by start, then end.
#[inline]
pub fn span_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j <= n);
    // rows before i hold n, n-1, ..., n-i+1 spans
    i * n - i * i.saturating_sub(1) / 2 + (j - i - 1)
}

impl<F: Scalar> SpanScoreTable<F> {
    pub fn zeros(n: usize, num_labels: usize) -> Self {
        assert!(num_labels >= 1, "at least the null label");
        SpanScoreTable {
            n,
            num_labels,
            data: vec![F::zero(); span_count(n) * num_labels],
        }
    }

    /// Builds a table from `f(i, j, l)` for non-null labels.
    pub fn from_fn(n: usize, num_labels: usize, mut f: impl FnMut(usize, usize, usize) -> F) -> Self {
        let mut t = Self::zeros(n, num_labels);
        for (i, j) in t.spans() {
            for l in 1..num_labels {
                t.set(i, j, l, f(i, j, l));
            }
        }
        t
    }

    /// Sentence length.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of labels including the null label.
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn span_count(&self) -> usize {
        span_count(self.n)
    }

    /// All spans `(i, j)` in storage order.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..=n).map(move |j| (i, j)))
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        assert!(i < j && j <= self.n, "span ({i}, {j}) out of range for n = {}", self.n);
        span_index(self.n, i, j) * self.num_labels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> F {
        self.data[self.offset(i, j) + l]
    }

    /// Scores of all labels for span `(i, j)`.
    pub fn labels_of(&self, i: usize, j: usize) -> &[F] {
        let o = self.offset(i, j);
        &self.data[o..o + self.num_labels]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, l: usize, v: F) {
        assert!(l > 0 && l < self.num_labels, "label {l} is not a settable label");
        let o = self.offset(i, j);
        self.data[o + l] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, l: usize, v: F) {
        if l == 0 {
            return;
        }
        let o = self.offset(i, j);
        self.data[o + l] += v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    /// Raw storage, span-major with `num_labels` entries per span.
    pub fn as_slice(&self) -> &[F] {
        &self.data
    }
}
