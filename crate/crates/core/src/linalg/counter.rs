use std::cell::Cell;

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of SVDs and symmetric eigendecompositions run on the current
/// thread so far.
pub fn factorization_count() -> u64 {
    FACTORIZATIONS.with(Cell::get)
}

pub(crate) fn record_factorization() {
    FACTORIZATIONS.with(|c| c.set(c.get() + 1));
}
