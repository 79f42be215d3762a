use crate::error::{Error, Result};

pub const DEFAULT_MAX_DIM: usize = 4096;
pub const DEFAULT_MAX_PERM_LEN: usize = 8;
pub const DEFAULT_MAX_DOUBLED: usize = 250_000;
pub const DEFAULT_MAX_TABLE_ENTRIES: usize = 32 * 1024 * 1024;

/// Resource limits applied before dense allocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeCap {
    /// Largest dense matrix dimension.
    pub max_dim: usize,
    /// Longest word for which a sum over all permutations is materialized.
    pub max_perm_len: usize,
    /// Largest dimension of the doubled space `F⊗F`.
    pub max_doubled: usize,
    /// Largest number of stored entries in a table of Wick-word operators.
    pub max_table_entries: usize,
}

impl Default for SizeCap {
    fn default() -> Self {
        SizeCap {
            max_dim: DEFAULT_MAX_DIM,
            max_perm_len: DEFAULT_MAX_PERM_LEN,
            max_doubled: DEFAULT_MAX_DOUBLED,
            max_table_entries: DEFAULT_MAX_TABLE_ENTRIES,
        }
    }
}

impl SizeCap {
    /// Default caps, with `max_dim` taken from `QFOCK_SIZE_CAP` when set.
    pub fn from_env() -> Result<Self> {
        let mut cap = SizeCap::default();
        if let Ok(v) = std::env::var("QFOCK_SIZE_CAP") {
            cap.max_dim = v
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("QFOCK_SIZE_CAP is not an integer: {v:?}")))?;
        }
        Ok(cap)
    }

    pub fn check_dim(&self, what: &str, requested: usize) -> Result<()> {
        check(what, requested, self.max_dim)
    }

    pub fn check_doubled(&self, what: &str, dim: usize) -> Result<()> {
        let requested = dim.saturating_mul(dim);
        check(what, requested, self.max_doubled)
    }
}

pub(crate) fn check(what: &str, requested: usize, cap: usize) -> Result<()> {
    if requested > cap {
        Err(Error::Capacity {
            what: what.to_string(),
            requested,
            cap,
        })
    } else {
        Ok(())
    }
}
