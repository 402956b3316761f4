use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    EmptyDataset,
    DuplicateLabel {
        item: usize,
        worker: usize,
    },
    InvalidLabel {
        label: i64,
        num_classes: usize,
    },
    /// An item was given no labels at all.
    UnlabeledItem {
        item: usize,
    },
    InvalidConfig(&'static str),
    ShapeError {
        expected: usize,
        found: usize,
        what: &'static str,
    },
    /// The worker-ability model is defined for two classes only.
    BinaryOnly {
        num_classes: usize,
    },
    /// A class with zero prior mass received positive classifier mass.
    DegeneratePrior {
        class: usize,
    },
    NonFiniteGradient {
        epoch: usize,
        batch: usize,
    },
    NoGoldOverlap,
    /// Every grid point failed; holds the last error seen.
    AllGridPointsFailed(alloc::boxed::Box<Error>),
}

impl Error {
    /// True for failures caused by numerics rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DegeneratePrior { .. } | Error::NonFiniteGradient { .. } => true,
            Error::AllGridPointsFailed(inner) => inner.is_numerical(),
            _ => false,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyDataset => write!(f, "dataset contains no labels"),
            Error::DuplicateLabel { item, worker } => {
                write!(f, "duplicate label for item {item} from worker {worker}")
            }
            Error::InvalidLabel { label, num_classes } => {
                write!(f, "label {label} outside [1, {num_classes}]")
            }
            Error::UnlabeledItem { item } => write!(f, "item {item} has no labels"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::ShapeError { expected, found, what } => {
                write!(f, "shape mismatch for {what}: expected {expected}, found {found}")
            }
            Error::BinaryOnly { num_classes } => {
                write!(f, "worker-ability model requires 2 classes, dataset has {num_classes}")
            }
            Error::DegeneratePrior { class } => {
                write!(f, "class {} has zero prior mass but positive classifier mass; loss is infinite", class + 1)
            }
            Error::NonFiniteGradient { epoch, batch } => {
                write!(f, "non-finite gradient at epoch {epoch}, batch {batch}")
            }
            Error::NoGoldOverlap => write!(f, "no predicted item is covered by the gold labels"),
            Error::AllGridPointsFailed(last) => {
                write!(f, "every mu grid point failed; last error: {last}")
            }
        }
    }
}

impl core::error::Error for Error {}
