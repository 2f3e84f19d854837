use thiserror::Error;

pub type Result<T> = std::result::Result<T, AuditError>;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: expected {expected} fields, found {found}")]
    Arity { line: u64, expected: usize, found: usize },

    #[error("line {line}: unknown skin tone `{value}`")]
    UnknownSkinTone { line: u64, value: String },

    #[error("line {line}: column `{column}` value `{value}` is outside [a-z0-9_./-]")]
    InvalidIdentifier { line: u64, column: String, value: String },

    #[error("duplicate video_id `{0}`")]
    DuplicateVideoId(String),

    #[error("motion group {group} has two records for skin tone {tone}")]
    ToneCollision { group: String, tone: String },

    #[error("label `{0}` is empty after normalization")]
    EmptyLabel(String),

    #[error("vocabulary `{vocabulary}` lists `{label}` twice")]
    DuplicateLabel { vocabulary: String, label: String },

    #[error("vocabulary `{0}` is empty")]
    EmptyVocabulary(String),

    #[error("label `{0}` has no embedding")]
    MissingEmbedding(String),

    #[error("embedding for `{label}` has dimension {found}, expected {expected}")]
    EmbeddingDimension { label: String, expected: usize, found: usize },

    #[error("embedding for `{0}` is a zero vector")]
    ZeroEmbedding(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("path template is missing placeholder `{{{0}}}`")]
    MissingPlaceholder(String),

    #[error("path template has unknown placeholder `{{{0}}}`")]
    UnknownPlaceholder(String),

    #[error("render jobs collide on output path `{0}`")]
    OutputPathCollision(String),

    #[error("ablation cell ({action}, {viewpoint}, {background}) has no predictions for model `{model_id}`")]
    EmptyCell {
        model_id: String,
        action: String,
        viewpoint: String,
        background: String,
    },

    #[error("predictions for ({video_id}, {model_id}): ranks are not contiguous from 1")]
    RankGap { video_id: String, model_id: String },

    #[error("predictions for ({video_id}, {model_id}): scores increase with rank")]
    NonMonotoneScores { video_id: String, model_id: String },

    #[error("model `{model_id}` has no rank-1 prediction for {} video(s): {}", video_ids.len(), video_ids.join(", "))]
    MissingPredictions { model_id: String, video_ids: Vec<String> },

    #[error("motion group {0} is incomplete")]
    IncompleteGroup(String),

    #[error("no motion groups to evaluate")]
    NoGroups,

    #[error("action `{0}` has no matched target label")]
    UnmatchedAction(String),

    #[error("p-value {0} is outside [0, 1]")]
    PValueOutOfRange(f64),

    #[error("matrix is not square ({rows} rows, {cols} columns, {labels} labels)")]
    NonSquare { rows: usize, cols: usize, labels: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
