use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid radar frame: {0}")]
    InvalidFrame(String),

    #[error("frames are not congruent: {0}")]
    Incongruent(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pose ({x:.3}, {y:.3}) lies outside the scene bounds")]
    PoseOutsideScene { x: f64, y: f64 },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("registration input is empty")]
    EmptyInput,

    #[error("no correspondences within the gate")]
    NoCorrespondences,

    #[error("no timestamps associated within {max_dt} s (estimate spans {est_range:?}, reference spans {gt_range:?})")]
    NoAssociation {
        max_dt: f64,
        est_range: Option<(f64, f64)>,
        gt_range: Option<(f64, f64)>,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
