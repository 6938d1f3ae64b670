//! Resource configurations and the group rotation across quizzes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StudyError;

/// Resources available to a student while taking a quiz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceConfigId {
    /// Assistant only.
    A,
    /// Assistant plus all course resources.
    B,
    /// Course resources only.
    C,
}

impl ResourceConfigId {
    pub const ALL: [ResourceConfigId; 3] = [ResourceConfigId::A, ResourceConfigId::B, ResourceConfigId::C];

    pub fn has_assistant(self) -> bool {
        matches!(self, ResourceConfigId::A | ResourceConfigId::B)
    }

    pub fn has_materials(self) -> bool {
        matches!(self, ResourceConfigId::B | ResourceConfigId::C)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceConfigId::A => "A",
            ResourceConfigId::B => "B",
            ResourceConfigId::C => "C",
        }
    }
}

impl fmt::Display for ResourceConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResourceConfigId {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(ResourceConfigId::A),
            "B" | "b" => Ok(ResourceConfigId::B),
            "C" | "c" => Ok(ResourceConfigId::C),
            other => Err(StudyError::UnknownConfig(other.to_string())),
        }
    }
}

/// One of the three student groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Group(u8);

impl Group {
    pub const ALL: [Group; 3] = [Group(1), Group(2), Group(3)];

    pub fn new(n: u8) -> Result<Self, StudyError> {
        if (1..=3).contains(&n) {
            Ok(Group(n))
        } else {
            Err(StudyError::UnknownGroup(n.to_string()))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "group{}", self.0)
    }
}

impl FromStr for Group {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let digits = t.strip_prefix("group").unwrap_or(&t).trim();
        digits
            .parse::<u8>()
            .ok()
            .and_then(|n| Group::new(n).ok())
            .ok_or_else(|| StudyError::UnknownGroup(s.to_string()))
    }
}

impl TryFrom<String> for Group {
    type Error = StudyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Group> for String {
    fn from(g: Group) -> String {
        g.to_string()
    }
}

/// One of the three quizzes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct QuizId(u8);

impl QuizId {
    pub const ALL: [QuizId; 3] = [QuizId(1), QuizId(2), QuizId(3)];

    pub fn new(n: u8) -> Result<Self, StudyError> {
        if (1..=3).contains(&n) {
            Ok(QuizId(n))
        } else {
            Err(StudyError::UnknownQuiz(n.to_string()))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }
}

impl fmt::Display for QuizId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "quiz{}", self.0)
    }
}

impl FromStr for QuizId {
    type Err = StudyError;

    /// Accepts `quiz2`, `Quiz 2` or `2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let digits = t.strip_prefix("quiz").unwrap_or(&t).trim();
        digits
            .parse::<u8>()
            .ok()
            .and_then(|n| QuizId::new(n).ok())
            .ok_or_else(|| StudyError::UnknownQuiz(s.to_string()))
    }
}

impl TryFrom<String> for QuizId {
    type Error = StudyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<QuizId> for String {
    fn from(q: QuizId) -> String {
        q.to_string()
    }
}

/// Group assigned to each configuration, per quiz (rows: quiz 1..3, columns A, B, C).
const ROTATION: [[u8; 3]; 3] = [[1, 2, 3], [2, 3, 1], [3, 1, 2]];

/// The configuration a group works under for a quiz.
pub fn config_for(group: Group, quiz: QuizId) -> ResourceConfigId {
    let row = &ROTATION[quiz.0 as usize - 1];
    let col = row.iter().position(|&g| g == group.0).expect("rotation rows are permutations");
    ResourceConfigId::ALL[col]
}

/// String-typed variant used at input boundaries.
pub fn config_for_names(group: &str, quiz: &str) -> Result<ResourceConfigId, StudyError> {
    Ok(config_for(group.parse()?, quiz.parse()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ResourceConfigId::*;

    #[test]
    fn table_cells() {
        assert_eq!(config_for_names("group2", "Quiz 1").unwrap(), B);
        assert_eq!(config_for_names("group1", "Quiz 2").unwrap(), C);
        let expected = [[A, B, C], [C, A, B], [B, C, A]];
        for (qi, q) in QuizId::ALL.iter().enumerate() {
            for (gi, g) in Group::ALL.iter().enumerate() {
                assert_eq!(config_for(*g, *q), expected[qi][gi], "{q} {g}");
            }
        }
    }

    #[test]
    fn latin_square() {
        for g in Group::ALL {
            let mut seen: Vec<_> = QuizId::ALL.iter().map(|q| config_for(g, *q)).collect();
            seen.sort();
            assert_eq!(seen, vec![A, B, C]);
        }
        for q in QuizId::ALL {
            let mut seen: Vec<_> = Group::ALL.iter().map(|g| config_for(*g, q)).collect();
            seen.sort();
            assert_eq!(seen, vec![A, B, C]);
        }
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(config_for_names("group4", "quiz1"), Err(StudyError::UnknownGroup(_))));
        assert!(matches!(config_for_names("group1", "quiz0"), Err(StudyError::UnknownQuiz(_))));
        assert!(matches!("D".parse::<ResourceConfigId>(), Err(StudyError::UnknownConfig(_))));
        assert_eq!("3".parse::<QuizId>().unwrap(), QuizId::new(3).unwrap());
    }
}
