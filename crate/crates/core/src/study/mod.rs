//! Quiz-study harness: rotation of resource configurations over groups,
//! quiz scoring, classical item difficulty, performance bands, normalized
//! correct-answer distributions, resource-usage tallies and a synthetic
//! cohort simulator.

mod design;
mod io;
mod report;
mod simulate;
mod stats;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use design::{config_for, config_for_names, Group, QuizId, ResourceConfigId};
pub use io::{read_records_dir, write_records_dir, StudyData};
pub use report::{analyze, write_analysis, ConfigSummary, ScoreRow, StudyAnalysis, ANALYSIS_FILES};
pub use simulate::{simulate_cohort, SimulatedCohort, SimulationParams};
pub use stats::{
    correct_answer_distribution, difficulty_index, difficulty_indices, partition_performance,
    partition_performance_per_quiz, resource_usage_report, score_quiz, BandAssignment, BandCuts, BandFilter,
    DistributionCell, QuizScore, UsageBreakdown,
};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("unknown quiz `{0}`")]
    UnknownQuiz(String),
    #[error("unknown resource configuration `{0}`")]
    UnknownConfig(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("invalid quiz item `{0}`: {1}")]
    InvalidItem(String, String),
    #[error("quiz {0} has no items")]
    EmptyQuiz(QuizId),
    #[error("item `{0}` has no attempts under configuration {1}")]
    NoAttempts(String, ResourceConfigId),
    #[error("no students")]
    NoStudents,
    #[error("invalid parameter `{0}`: {1}")]
    InvalidParameter(String, String),
    #[error("student `{student}` in {group} took {quiz} under {found}, but the rotation assigns {expected}")]
    ConfigMismatch {
        student: String,
        group: Group,
        quiz: QuizId,
        expected: ResourceConfigId,
        found: ResourceConfigId,
    },
    #[error("inconsistent records: {0}")]
    Inconsistent(String),
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizItem {
    pub quiz: QuizId,
    pub item_id: String,
    pub options: Vec<String>,
    pub correct_option: String,
}

impl QuizItem {
    pub fn new(
        quiz: QuizId,
        item_id: impl Into<String>,
        options: Vec<String>,
        correct_option: impl Into<String>,
    ) -> Result<Self, StudyError> {
        let item = QuizItem {
            quiz,
            item_id: item_id.into(),
            options,
            correct_option: correct_option.into(),
        };
        item.validate()?;
        Ok(item)
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        if self.options.len() < 2 {
            return Err(StudyError::InvalidItem(self.item_id.clone(), "needs at least two options".into()));
        }
        if !self.options.contains(&self.correct_option) {
            return Err(StudyError::InvalidItem(
                self.item_id.clone(),
                format!("correct option `{}` is not among the options", self.correct_option),
            ));
        }
        Ok(())
    }
}

/// Post-quiz survey answers: whether the student used each resource for at
/// least one question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsageFlags {
    pub used_blade: bool,
    pub used_materials: bool,
}

/// One student's attempt at one quiz.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub student_id: String,
    pub group: Group,
    pub quiz: QuizId,
    pub config: ResourceConfigId,
    /// item id → chosen option; unanswered items are absent.
    pub responses: BTreeMap<String, String>,
    pub usage: UsageFlags,
}

impl StudyRecord {
    pub fn check_rotation(&self) -> Result<(), StudyError> {
        let expected = config_for(self.group, self.quiz);
        if expected != self.config {
            return Err(StudyError::ConfigMismatch {
                student: self.student_id.clone(),
                group: self.group,
                quiz: self.quiz,
                expected,
                found: self.config,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemStats {
    pub item_id: String,
    pub quiz: QuizId,
    pub config: ResourceConfigId,
    pub n_attempts: u32,
    pub n_correct: u32,
    pub difficulty_index: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerformanceBand {
    Upper,
    Mid,
    Lower,
}

impl PerformanceBand {
    pub const ALL: [PerformanceBand; 3] = [PerformanceBand::Upper, PerformanceBand::Mid, PerformanceBand::Lower];

    pub fn as_str(self) -> &'static str {
        match self {
            PerformanceBand::Upper => "upper",
            PerformanceBand::Mid => "mid",
            PerformanceBand::Lower => "lower",
        }
    }
}
