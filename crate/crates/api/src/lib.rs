//! Request and response bodies of the `/api` session service.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Rref,
    Variance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub policy: Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub outcome_id: usize,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub question: Option<Question>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Answer {
    pub outcome_id: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResult {
    pub type_weights: Vec<f64>,
    pub next_question: Option<Question>,
    pub outlier: Outlier,
    pub stop_suggested: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub outcome_id: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub model_id: String,
    /// Unix milliseconds.
    pub created_at: u64,
    pub policy: Policy,
    pub answers: Vec<Answer>,
    pub type_weights: Vec<f64>,
    pub most_probable_type: usize,
    pub next_question: Option<Question>,
    pub outlier: Outlier,
    pub stop_suggested: bool,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    /// Clusters of variable names.
    pub structure: Vec<Vec<String>>,
    pub basis_size: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub variables: Vec<Variable>,
    pub num_outcomes: usize,
    pub outcomes: Vec<String>,
    pub types: Vec<TypeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_defaults_to_rref() {
        let c: CreateSession = serde_json::from_str("{}").unwrap();
        assert_eq!(c.policy, Policy::Rref);
        let c: CreateSession = serde_json::from_str(r#"{"policy":"variance"}"#).unwrap();
        assert_eq!(c.policy, Policy::Variance);
        assert!(serde_json::from_str::<CreateSession>(r#"{"policy":"random"}"#).is_err());
    }

    #[test]
    fn null_next_question_serializes() {
        let r = AnswerResult {
            type_weights: vec![1.0],
            next_question: None,
            outlier: Outlier {
                score: 0.5,
                flagged: false,
            },
            stop_suggested: true,
        };
        let v = serde_json::to_value(&r).unwrap();
        assert!(v["next_question"].is_null());
        assert_eq!(v["outlier"]["flagged"], false);
    }
}
