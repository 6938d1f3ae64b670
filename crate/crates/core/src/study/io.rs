//! CSV layout of study data:
//!
//! * `students.csv`: `student_id,group`
//! * `quiz_keys.csv`: `quiz,item_id,options,correct_option` (options separated by `|`)
//! * `responses.csv`: `student_id,quiz,item_id,chosen_option`
//! * `survey.csv`: `student_id,quiz,config,used_blade,used_materials`
//!
//! A survey row marks that a student took a quiz; `config` may be left empty,
//! in which case it is derived from the rotation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{config_for, Group, QuizId, QuizItem, ResourceConfigId, StudyError, StudyRecord, UsageFlags};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StudyData {
    pub items: Vec<QuizItem>,
    pub records: Vec<StudyRecord>,
}

#[derive(Serialize, Deserialize)]
struct StudentRow {
    student_id: String,
    group: String,
}

#[derive(Serialize, Deserialize)]
struct KeyRow {
    quiz: String,
    item_id: String,
    options: String,
    correct_option: String,
}

#[derive(Serialize, Deserialize)]
struct ResponseRow {
    student_id: String,
    quiz: String,
    item_id: String,
    chosen_option: String,
}

#[derive(Serialize, Deserialize)]
struct SurveyRow {
    student_id: String,
    quiz: String,
    #[serde(default)]
    config: String,
    used_blade: String,
    used_materials: String,
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StudyError> {
    let csv_err = |source| StudyError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    reader.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), StudyError> {
    let csv_err = |source| StudyError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| StudyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_flag(s: &str, what: &str) -> Result<bool, StudyError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Ok(true),
        "0" | "false" | "no" | "n" | "" => Ok(false),
        other => Err(StudyError::InvalidParameter(what.into(), format!("`{other}` is not a yes/no value"))),
    }
}

/// Read and cross-check the four CSV files in `dir`.
pub fn read_records_dir(dir: &Path) -> Result<StudyData, StudyError> {
    let students: Vec<StudentRow> = read_rows(&dir.join("students.csv"))?;
    let keys: Vec<KeyRow> = read_rows(&dir.join("quiz_keys.csv"))?;
    let responses: Vec<ResponseRow> = read_rows(&dir.join("responses.csv"))?;
    let survey: Vec<SurveyRow> = read_rows(&dir.join("survey.csv"))?;

    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    for s in students {
        let g: Group = s.group.parse()?;
        if groups.insert(s.student_id.clone(), g).is_some() {
            return Err(StudyError::Inconsistent(format!("student `{}` listed twice", s.student_id)));
        }
    }

    let mut items = Vec::with_capacity(keys.len());
    let mut item_quiz: BTreeMap<String, QuizId> = BTreeMap::new();
    for k in keys {
        let quiz: QuizId = k.quiz.parse()?;
        let options = k.options.split('|').map(|o| o.trim().to_string()).collect();
        let item = QuizItem::new(quiz, k.item_id, options, k.correct_option)?;
        if item_quiz.insert(item.item_id.clone(), quiz).is_some() {
            return Err(StudyError::Inconsistent(format!("item `{}` defined twice", item.item_id)));
        }
        items.push(item);
    }

    let mut records: BTreeMap<(QuizId, String), StudyRecord> = BTreeMap::new();
    for s in survey {
        let quiz: QuizId = s.quiz.parse()?;
        let group = *groups
            .get(&s.student_id)
            .ok_or_else(|| StudyError::Inconsistent(format!("survey row for unknown student `{}`", s.student_id)))?;
        let expected = config_for(group, quiz);
        let config = if s.config.trim().is_empty() {
            expected
        } else {
            s.config.parse::<ResourceConfigId>()?
        };
        let record = StudyRecord {
            student_id: s.student_id.clone(),
            group,
            quiz,
            config,
            responses: BTreeMap::new(),
            usage: UsageFlags {
                used_blade: parse_flag(&s.used_blade, "used_blade")?,
                used_materials: parse_flag(&s.used_materials, "used_materials")?,
            },
        };
        record.check_rotation()?;
        if records.insert((quiz, s.student_id.clone()), record).is_some() {
            return Err(StudyError::Inconsistent(format!(
                "student `{}` has two survey rows for {quiz}",
                s.student_id
            )));
        }
    }

    for r in responses {
        let quiz: QuizId = r.quiz.parse()?;
        match item_quiz.get(&r.item_id) {
            None => return Err(StudyError::UnknownItem(r.item_id)),
            Some(q) if *q != quiz => {
                return Err(StudyError::Inconsistent(format!("item `{}` belongs to {q}, not {quiz}", r.item_id)))
            }
            _ => {}
        }
        let record = records.get_mut(&(quiz, r.student_id.clone())).ok_or_else(|| {
            StudyError::Inconsistent(format!("response from `{}` to {quiz} without a survey row", r.student_id))
        })?;
        if r.chosen_option.is_empty() {
            continue;
        }
        if record.responses.insert(r.item_id.clone(), r.chosen_option).is_some() {
            return Err(StudyError::Inconsistent(format!(
                "student `{}` answered `{}` twice",
                r.student_id, r.item_id
            )));
        }
    }

    Ok(StudyData {
        items,
        records: records.into_values().collect(),
    })
}

/// Write `data` in the layout read by [`read_records_dir`].
pub fn write_records_dir(dir: &Path, data: &StudyData) -> Result<(), StudyError> {
    std::fs::create_dir_all(dir).map_err(|source| StudyError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut students: BTreeMap<&str, Group> = BTreeMap::new();
    for r in &data.records {
        students.insert(&r.student_id, r.group);
    }
    let student_rows: Vec<StudentRow> = students
        .into_iter()
        .map(|(id, g)| StudentRow {
            student_id: id.to_string(),
            group: g.to_string(),
        })
        .collect();
    let key_rows: Vec<KeyRow> = data
        .items
        .iter()
        .map(|i| KeyRow {
            quiz: i.quiz.to_string(),
            item_id: i.item_id.clone(),
            options: i.options.join("|"),
            correct_option: i.correct_option.clone(),
        })
        .collect();
    let mut response_rows = Vec::new();
    let mut survey_rows = Vec::new();
    for r in &data.records {
        for (item, choice) in &r.responses {
            response_rows.push(ResponseRow {
                student_id: r.student_id.clone(),
                quiz: r.quiz.to_string(),
                item_id: item.clone(),
                chosen_option: choice.clone(),
            });
        }
        survey_rows.push(SurveyRow {
            student_id: r.student_id.clone(),
            quiz: r.quiz.to_string(),
            config: r.config.to_string(),
            used_blade: u8::from(r.usage.used_blade).to_string(),
            used_materials: u8::from(r.usage.used_materials).to_string(),
        });
    }
    let file = |name: &str| -> PathBuf { dir.join(name) };
    write_rows(&file("students.csv"), &student_rows)?;
    write_rows(&file("quiz_keys.csv"), &key_rows)?;
    write_rows(&file("responses.csv"), &response_rows)?;
    write_rows(&file("survey.csv"), &survey_rows)
}

/// Distinct student ids across records.
pub(crate) fn student_ids(records: &[StudyRecord]) -> BTreeSet<&str> {
    records.iter().map(|r| r.student_id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::super::{simulate_cohort, SimulationParams};
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = simulate_cohort(&SimulationParams {
            n_students: 12,
            skip_prob: 0.1,
            ..SimulationParams::default()
        })
        .unwrap();
        let data = StudyData {
            items: cohort.items,
            records: cohort.records,
        };
        write_records_dir(dir.path(), &data).unwrap();
        let back = read_records_dir(dir.path()).unwrap();
        assert_eq!(back.items, data.items);
        let mut expected = data.records.clone();
        expected.sort_by(|a, b| (a.quiz, &a.student_id).cmp(&(b.quiz, &b.student_id)));
        assert_eq!(back.records, expected);
        assert_eq!(student_ids(&back.records).len(), 12);
    }

    #[test]
    fn rotation_violation_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("students.csv"), "student_id,group\ns1,group1\n").unwrap();
        std::fs::write(dir.path().join("quiz_keys.csv"), "quiz,item_id,options,correct_option\nquiz1,i1,a|b,a\n").unwrap();
        std::fs::write(dir.path().join("responses.csv"), "student_id,quiz,item_id,chosen_option\ns1,quiz1,i1,a\n").unwrap();
        std::fs::write(
            dir.path().join("survey.csv"),
            "student_id,quiz,config,used_blade,used_materials\ns1,Quiz 1,B,1,0\n",
        )
        .unwrap();
        assert!(matches!(read_records_dir(dir.path()), Err(StudyError::ConfigMismatch { .. })));
        std::fs::write(
            dir.path().join("survey.csv"),
            "student_id,quiz,config,used_blade,used_materials\ns1,Quiz 1,,yes,no\n",
        )
        .unwrap();
        let data = read_records_dir(dir.path()).unwrap();
        assert_eq!(data.records[0].config, ResourceConfigId::A);
        assert!(data.records[0].usage.used_blade);
    }
}
