use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("q = {0} outside the open interval (-1, 1)")]
    QOutOfRange(f64),
    #[error("alphabet size must be at least 1")]
    ZeroAlphabet,
    #[error("capacity exceeded: {what} needs {requested}, cap is {cap}")]
    Capacity {
        what: String,
        requested: usize,
        cap: usize,
    },
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("invalid cycle ({k}->{l}) on {n} points")]
    InvalidCycle { k: usize, l: usize, n: usize },
    #[error("degenerate metric at level {level}: smallest Gram eigenvalue {min_eig:e}")]
    DegenerateMetric { level: usize, min_eig: f64 },
    #[error("level {level} exceeds truncation level {max}")]
    LevelOutOfRange { level: usize, max: usize },
    #[error("letter {letter} outside alphabet of size {alphabet}")]
    LetterOutOfRange { letter: usize, alphabet: usize },
    #[error("objects belong to different Fock contexts")]
    ContextMismatch,
    #[error("vector is not homogeneous")]
    NonHomogeneous,
    #[error("polynomial degree {degree} exceeds the admissible {max}")]
    DegreeOverflow { degree: usize, max: usize },
    #[error("square root unavailable: smallest Ritz value {min_ritz:e} is negative")]
    SqrtUnavailable { min_ritz: f64 },
    #[error("state is absorbing (rate 0)")]
    AbsorbingState,
    #[error("hat norm {value:e} is materially negative; cocycle spec is inconsistent")]
    NegativeHatNorm { value: f64 },
    #[error("group word length {len} exceeds cap {cap}")]
    WordLength { len: usize, cap: usize },
    #[error("invalid cocycle spec: {0}")]
    Spec(String),
    #[error("{0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
