use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use storyweave::data::ValidityReport;
use storyweave::story::StoryError;
use storyweave::{DataError, InterpolationError};

/// Error response: a status, a named error class and a message, plus the
/// validity report when a fact was rejected.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub piece_index: Option<usize>,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            error,
            message: message.into(),
            report: None,
            piece_index: None,
        }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("no {what} `{id}`"))
    }

    pub fn conflict(error: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, error, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", message)
    }

    pub fn invalid_fact(report: ValidityReport, piece_index: Option<usize>) -> Self {
        let rules: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            error: "ValidationError",
            message: format!("invalid fact: {}", rules.join("; ")),
            report: Some(report),
            piece_index,
        }
    }

    /// Errors while loading an uploaded table.
    pub fn upload(e: DataError) -> Self {
        let class = match e {
            DataError::EmptyDataset => "EmptyDataset",
            DataError::Format { .. } => "FormatError",
            _ => "SchemaError",
        };
        Self::new(StatusCode::BAD_REQUEST, class, e.to_string())
    }
}

impl From<StoryError> for ApiError {
    fn from(e: StoryError) -> Self {
        let (status, class) = match e {
            StoryError::MissingNeighbors(_) => (StatusCode::CONFLICT, "MissingNeighbors"),
            StoryError::MalformedPiece { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "MalformedPiece"),
            StoryError::OutOfRange { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "OutOfRange"),
            StoryError::NotKeyframe(_) | StoryError::NoNextKeyframe(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "KeyframeError")
            }
        };
        let index = match &e {
            StoryError::MalformedPiece { index, .. } | StoryError::OutOfRange { index, .. } => Some(*index),
            StoryError::NotKeyframe(i) | StoryError::NoNextKeyframe(i) | StoryError::MissingNeighbors(i) => {
                Some(*i)
            }
        };
        ApiError {
            piece_index: index,
            ..Self::new(status, class, e.to_string())
        }
    }
}

impl From<InterpolationError> for ApiError {
    fn from(e: InterpolationError) -> Self {
        let unprocessable = |class| Self::new(StatusCode::UNPROCESSABLE_ENTITY, class, e.to_string());
        match &e {
            InterpolationError::DegenerateKeyframes | InterpolationError::DegenerateDirection => {
                unprocessable("DegenerateKeyframes")
            }
            InterpolationError::InvalidKeyframe(report) => Self::invalid_fact(report.clone(), None),
            InterpolationError::Config(_) => unprocessable("ConfigError"),
            InterpolationError::Data(DataError::Capacity { .. }) => unprocessable("CapacityError"),
            InterpolationError::Data(_) => unprocessable("DataError"),
            InterpolationError::Embed(_) | InterpolationError::Dimension { .. } => {
                Self::internal(e.to_string())
            }
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        let status = match e.status() {
            StatusCode::PAYLOAD_TOO_LARGE => StatusCode::PAYLOAD_TOO_LARGE,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, "ParseError", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}
