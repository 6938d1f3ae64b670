use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{config_for, Group, QuizId, QuizItem, ResourceConfigId, StudyError, StudyRecord, UsageFlags};

/// Parameters of a synthetic cohort. `effects` and `usage` are indexed by
/// configuration A, B, C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationParams {
    pub seed: u64,
    pub n_students: usize,
    pub items_per_quiz: usize,
    pub options_per_item: usize,
    pub skill_min: f64,
    pub skill_max: f64,
    /// Added to a student's skill to give the per-item probability of a
    /// correct answer under each configuration.
    pub effects: [f64; 3],
    /// Probability of reporting use of (assistant, materials) per configuration.
    pub usage: [(f64, f64); 3],
    pub skip_prob: f64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            seed: 7,
            n_students: 85,
            items_per_quiz: 10,
            options_per_item: 4,
            skill_min: 0.3,
            skill_max: 0.7,
            effects: [0.10, 0.20, 0.0],
            usage: [(0.9, 0.0), (0.8, 0.6), (0.0, 0.4)],
            skip_prob: 0.0,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<(), StudyError> {
        let bad = |name: &str, why: String| Err(StudyError::InvalidParameter(name.into(), why));
        if self.n_students == 0 {
            return bad("n_students", "must be at least 1".into());
        }
        if self.items_per_quiz == 0 {
            return bad("items_per_quiz", "must be at least 1".into());
        }
        if !(2..=26).contains(&self.options_per_item) {
            return bad("options_per_item", format!("{} is not in 2..=26", self.options_per_item));
        }
        let unit = |name: &str, v: f64| -> Result<(), StudyError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(StudyError::InvalidParameter(name.into(), format!("{v} is not in [0, 1]")))
            }
        };
        unit("skill_min", self.skill_min)?;
        unit("skill_max", self.skill_max)?;
        if self.skill_min > self.skill_max {
            return bad("skill_min", "exceeds skill_max".into());
        }
        for (i, c) in ResourceConfigId::ALL.iter().enumerate() {
            unit(&format!("effects.{c}"), self.effects[i])?;
            unit(&format!("usage.{c}.assistant"), self.usage[i].0)?;
            unit(&format!("usage.{c}.materials"), self.usage[i].1)?;
        }
        unit("skip_prob", self.skip_prob)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedCohort {
    pub items: Vec<QuizItem>,
    pub records: Vec<StudyRecord>,
}

/// Generate items and one record per (student, quiz). The same parameters
/// always give the same cohort.
pub fn simulate_cohort(params: &SimulationParams) -> Result<SimulatedCohort, StudyError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let options: Vec<String> = (0..params.options_per_item)
        .map(|i| ((b'a' + i as u8) as char).to_string())
        .collect();

    let mut items = Vec::new();
    for quiz in QuizId::ALL {
        for i in 0..params.items_per_quiz {
            let correct = options[rng.random_range(0..options.len())].clone();
            items.push(QuizItem::new(quiz, format!("q{}-{:02}", quiz.number(), i + 1), options.clone(), correct)?);
        }
    }

    let width = params.n_students.to_string().len().max(3);
    let mut order: Vec<usize> = (0..params.n_students).collect();
    order.shuffle(&mut rng);
    let mut students: Vec<(String, Group, f64)> = vec![(String::new(), Group::ALL[0], 0.0); params.n_students];
    for (slot, idx) in order.into_iter().enumerate() {
        students[idx].0 = format!("s{:0width$}", idx + 1);
        students[idx].1 = Group::ALL[slot % 3];
    }
    for s in &mut students {
        s.2 = if params.skill_max > params.skill_min {
            rng.random_range(params.skill_min..=params.skill_max)
        } else {
            params.skill_min
        };
    }

    let mut records = Vec::with_capacity(params.n_students * 3);
    for quiz in QuizId::ALL {
        for (student_id, group, skill) in &students {
            let config = config_for(*group, quiz);
            let ci = config as usize;
            let p = (skill + params.effects[ci]).clamp(0.0, 1.0);
            let mut responses = BTreeMap::new();
            for item in items.iter().filter(|i| i.quiz == quiz) {
                if rng.random_bool(params.skip_prob) {
                    continue;
                }
                let choice = if rng.random_bool(p) {
                    item.correct_option.clone()
                } else {
                    let wrong: Vec<&String> = item.options.iter().filter(|o| **o != item.correct_option).collect();
                    wrong[rng.random_range(0..wrong.len())].clone()
                };
                responses.insert(item.item_id.clone(), choice);
            }
            let (p_blade, p_materials) = params.usage[ci];
            let used_blade = rng.random_bool(p_blade) && config.has_assistant();
            let used_materials = rng.random_bool(p_materials) && config.has_materials();
            records.push(StudyRecord {
                student_id: student_id.clone(),
                group: *group,
                quiz,
                config,
                responses,
                usage: UsageFlags {
                    used_blade,
                    used_materials,
                },
            });
        }
    }
    Ok(SimulatedCohort { items, records })
}
