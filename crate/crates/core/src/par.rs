//! Index ranges that run on rayon when the `parallel` feature is on and
//! sequentially otherwise. Callers collect in index order either way.

#[cfg(feature = "parallel")]
pub(crate) use rayon::iter::ParallelIterator;

#[cfg(feature = "parallel")]
pub(crate) trait MaybePar {
    fn maybe_par(self) -> rayon::range::Iter<usize>;
}

#[cfg(feature = "parallel")]
impl MaybePar for std::ops::Range<usize> {
    fn maybe_par(self) -> rayon::range::Iter<usize> {
        use rayon::prelude::*;
        self.into_par_iter()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) trait MaybePar {
    fn maybe_par(self) -> std::ops::Range<usize>;
}

#[cfg(not(feature = "parallel"))]
impl MaybePar for std::ops::Range<usize> {
    fn maybe_par(self) -> std::ops::Range<usize> {
        self
    }
}
