use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{ItemStats, PerformanceBand, QuizId, QuizItem, ResourceConfigId, StudyError, StudyRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizScore {
    pub score_pct: f64,
    pub per_item: BTreeMap<String, bool>,
}

/// Score one attempt against the items of its quiz. Unanswered items count
/// as incorrect.
pub fn score_quiz(record: &StudyRecord, items: &[QuizItem]) -> Result<QuizScore, StudyError> {
    let quiz_items: Vec<&QuizItem> = items.iter().filter(|i| i.quiz == record.quiz).collect();
    if quiz_items.is_empty() {
        return Err(StudyError::EmptyQuiz(record.quiz));
    }
    for item_id in record.responses.keys() {
        if !quiz_items.iter().any(|i| &i.item_id == item_id) {
            return Err(StudyError::UnknownItem(item_id.clone()));
        }
    }
    let per_item: BTreeMap<String, bool> = quiz_items
        .iter()
        .map(|i| (i.item_id.clone(), record.responses.get(&i.item_id) == Some(&i.correct_option)))
        .collect();
    let correct = per_item.values().filter(|c| **c).count();
    Ok(QuizScore {
        score_pct: 100.0 * correct as f64 / quiz_items.len() as f64,
        per_item,
    })
}

/// Classical difficulty index (proportion correct) of one item among the
/// students who took its quiz under `config`.
pub fn difficulty_index(
    item_id: &str,
    config: ResourceConfigId,
    records: &[StudyRecord],
    items: &[QuizItem],
) -> Result<ItemStats, StudyError> {
    let item = items
        .iter()
        .find(|i| i.item_id == item_id)
        .ok_or_else(|| StudyError::UnknownItem(item_id.to_string()))?;
    let mut n_attempts = 0u32;
    let mut n_correct = 0u32;
    for r in records {
        if r.quiz != item.quiz || r.config != config {
            continue;
        }
        n_attempts += 1;
        if r.responses.get(item_id) == Some(&item.correct_option) {
            n_correct += 1;
        }
    }
    if n_attempts == 0 {
        return Err(StudyError::NoAttempts(item_id.to_string(), config));
    }
    Ok(ItemStats {
        item_id: item_id.to_string(),
        quiz: item.quiz,
        config,
        n_attempts,
        n_correct,
        difficulty_index: f64::from(n_correct) / f64::from(n_attempts),
    })
}

/// Difficulty of every item under every configuration it was attempted in.
pub fn difficulty_indices(records: &[StudyRecord], items: &[QuizItem]) -> Vec<ItemStats> {
    let mut out = Vec::new();
    for item in items {
        for config in ResourceConfigId::ALL {
            if let Ok(stats) = difficulty_index(&item.item_id, config, records, items) {
                out.push(stats);
            }
        }
    }
    out
}

/// Fractions of ranked students placed in the upper, mid and lower bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCuts {
    pub upper: f64,
    pub mid: f64,
    pub lower: f64,
}

impl Default for BandCuts {
    fn default() -> Self {
        BandCuts {
            upper: 0.27,
            mid: 0.46,
            lower: 0.27,
        }
    }
}

impl BandCuts {
    pub fn validate(&self) -> Result<(), StudyError> {
        for (name, v) in [("upper", self.upper), ("mid", self.mid), ("lower", self.lower)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(StudyError::InvalidParameter(name.into(), format!("{v} is not in [0, 1]")));
            }
        }
        let sum = self.upper + self.mid + self.lower;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(StudyError::InvalidParameter("band cuts".into(), format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Band sizes for `n` ranked students: rounding half up, with a
    /// non-empty upper band.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let round = |x: f64| (x + 0.5 + 1e-9).floor() as usize;
        let upper = round(self.upper * n as f64).max(1).min(n);
        let mid = round(self.mid * n as f64).min(n - upper);
        (upper, mid, n - upper - mid)
    }

    fn assign(&self, mut ranked: Vec<(String, f64)>) -> Vec<(String, PerformanceBand)> {
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (upper, mid, _) = self.counts(ranked.len());
        ranked
            .into_iter()
            .enumerate()
            .map(|(i, (id, _))| {
                let band = if i < upper {
                    PerformanceBand::Upper
                } else if i < upper + mid {
                    PerformanceBand::Mid
                } else {
                    PerformanceBand::Lower
                };
                (id, band)
            })
            .collect()
    }
}

/// Band membership, either one band per student or one per (quiz, student).
#[derive(Debug, Clone, PartialEq)]
pub enum BandAssignment {
    Overall(BTreeMap<String, PerformanceBand>),
    PerQuiz(BTreeMap<(QuizId, String), PerformanceBand>),
}

impl BandAssignment {
    pub fn band_of(&self, quiz: QuizId, student: &str) -> Option<PerformanceBand> {
        match self {
            BandAssignment::Overall(m) => m.get(student).copied(),
            BandAssignment::PerQuiz(m) => m.get(&(quiz, student.to_string())).copied(),
        }
    }

    pub fn count(&self, band: PerformanceBand) -> usize {
        match self {
            BandAssignment::Overall(m) => m.values().filter(|b| **b == band).count(),
            BandAssignment::PerQuiz(m) => m.values().filter(|b| **b == band).count(),
        }
    }
}

/// Rank students by mean quiz score (descending, ties by student id) and cut
/// the ranking into bands.
pub fn partition_performance(
    records: &[StudyRecord],
    items: &[QuizItem],
    cuts: &BandCuts,
) -> Result<BandAssignment, StudyError> {
    cuts.validate()?;
    let mut sums: BTreeMap<String, (f64, u32)> = BTreeMap::new();
    for r in records {
        let s = score_quiz(r, items)?.score_pct;
        let e = sums.entry(r.student_id.clone()).or_default();
        e.0 += s;
        e.1 += 1;
    }
    if sums.is_empty() {
        return Err(StudyError::NoStudents);
    }
    let ranked = sums.into_iter().map(|(id, (s, n))| (id, s / f64::from(n))).collect();
    Ok(BandAssignment::Overall(cuts.assign(ranked).into_iter().collect()))
}

/// Like [`partition_performance`], ranking separately within each quiz.
pub fn partition_performance_per_quiz(
    records: &[StudyRecord],
    items: &[QuizItem],
    cuts: &BandCuts,
) -> Result<BandAssignment, StudyError> {
    cuts.validate()?;
    if records.is_empty() {
        return Err(StudyError::NoStudents);
    }
    let mut per_quiz: BTreeMap<QuizId, Vec<(String, f64)>> = BTreeMap::new();
    for r in records {
        per_quiz
            .entry(r.quiz)
            .or_default()
            .push((r.student_id.clone(), score_quiz(r, items)?.score_pct));
    }
    let mut out = BTreeMap::new();
    for (quiz, ranked) in per_quiz {
        for (id, band) in cuts.assign(ranked) {
            out.insert((quiz, id), band);
        }
    }
    Ok(BandAssignment::PerQuiz(out))
}

#[derive(Debug, Clone, Copy)]
pub enum BandFilter<'a> {
    All,
    Band(&'a BandAssignment, PerformanceBand),
}

impl BandFilter<'_> {
    fn admits(&self, r: &StudyRecord) -> bool {
        match self {
            BandFilter::All => true,
            BandFilter::Band(assignment, band) => assignment.band_of(r.quiz, &r.student_id) == Some(*band),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionCell {
    pub quiz: QuizId,
    pub config: ResourceConfigId,
    pub item_id: String,
    pub n_takers: u32,
    pub n_correct: u32,
    /// `None` when no filtered student took the quiz under this configuration.
    pub fraction: Option<f64>,
}

/// For every item and configuration: students (after filtering) who chose
/// the correct option, divided by the students who took that quiz under that
/// configuration.
pub fn correct_answer_distribution(
    records: &[StudyRecord],
    items: &[QuizItem],
    filter: BandFilter<'_>,
) -> Vec<DistributionCell> {
    let mut takers: HashMap<(QuizId, ResourceConfigId), Vec<&StudyRecord>> = HashMap::new();
    for r in records.iter().filter(|r| filter.admits(r)) {
        takers.entry((r.quiz, r.config)).or_default().push(r);
    }
    let mut out = Vec::with_capacity(items.len() * 3);
    for item in items {
        for config in ResourceConfigId::ALL {
            let cell = takers.get(&(item.quiz, config)).map(Vec::as_slice).unwrap_or(&[]);
            let n_takers = cell.len() as u32;
            let n_correct = cell
                .iter()
                .filter(|r| r.responses.get(&item.item_id).is_some_and(|c| *c == item.correct_option))
                .count() as u32;
            out.push(DistributionCell {
                quiz: item.quiz,
                config,
                item_id: item.item_id.clone(),
                n_takers,
                n_correct,
                fraction: (n_takers > 0).then(|| f64::from(n_correct) / f64::from(n_takers)),
            });
        }
    }
    out
}

/// Survey categories for one configuration, as percentages of its records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsageBreakdown {
    pub n_students: u32,
    pub used_blade_only: f64,
    pub used_materials_only: f64,
    pub used_both: f64,
    pub used_none: f64,
}

impl UsageBreakdown {
    /// Share of students who used at least one designated resource.
    pub fn used_any(&self) -> f64 {
        self.used_blade_only + self.used_materials_only + self.used_both
    }
}

/// Tally survey flags per configuration. A flag for a resource the
/// configuration does not provide is ignored. Configurations without records
/// are omitted.
pub fn resource_usage_report(records: &[StudyRecord]) -> BTreeMap<ResourceConfigId, UsageBreakdown> {
    let mut counts: BTreeMap<ResourceConfigId, [u32; 4]> = BTreeMap::new();
    for r in records {
        let blade = r.usage.used_blade && r.config.has_assistant();
        let materials = r.usage.used_materials && r.config.has_materials();
        let slot = match (blade, materials) {
            (true, false) => 0,
            (false, true) => 1,
            (true, true) => 2,
            (false, false) => 3,
        };
        counts.entry(r.config).or_default()[slot] += 1;
    }
    counts
        .into_iter()
        .map(|(config, c)| {
            let n: u32 = c.iter().sum();
            let pct = |x: u32| 100.0 * f64::from(x) / f64::from(n);
            (
                config,
                UsageBreakdown {
                    n_students: n,
                    used_blade_only: pct(c[0]),
                    used_materials_only: pct(c[1]),
                    used_both: pct(c[2]),
                    used_none: pct(c[3]),
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{Group, UsageFlags};
    use super::*;

    fn items(quiz: u8, n: usize) -> Vec<QuizItem> {
        (0..n)
            .map(|i| {
                QuizItem::new(
                    QuizId::new(quiz).unwrap(),
                    format!("q{quiz}i{i}"),
                    vec!["a".into(), "b".into(), "c".into()],
                    "a",
                )
                .unwrap()
            })
            .collect()
    }

    fn record(student: &str, group: u8, quiz: u8, correct: &[bool]) -> StudyRecord {
        let g = Group::new(group).unwrap();
        let q = QuizId::new(quiz).unwrap();
        StudyRecord {
            student_id: student.into(),
            group: g,
            quiz: q,
            config: super::super::config_for(g, q),
            responses: correct
                .iter()
                .enumerate()
                .map(|(i, c)| (format!("q{quiz}i{i}"), if *c { "a" } else { "b" }.to_string()))
                .collect(),
            usage: UsageFlags::default(),
        }
    }

    #[test]
    fn seven_of_ten() {
        let its = items(1, 10);
        let mut pattern = vec![true; 7];
        pattern.extend([false; 3]);
        let s = score_quiz(&record("s1", 1, 1, &pattern), &its).unwrap();
        assert_eq!(s.score_pct, 70.0);
        assert_eq!(s.per_item.values().filter(|c| **c).count(), 7);
    }

    #[test]
    fn empty_responses_score_zero() {
        let s = score_quiz(&record("s1", 1, 1, &[]), &items(1, 4)).unwrap();
        assert_eq!(s.score_pct, 0.0);
    }

    #[test]
    fn unknown_item_is_an_error() {
        let mut r = record("s1", 1, 1, &[true]);
        r.responses.insert("elsewhere".into(), "a".into());
        assert!(matches!(score_quiz(&r, &items(1, 2)), Err(StudyError::UnknownItem(_))));
    }

    #[test]
    fn difficulty_fifteen_of_twenty() {
        let its = items(1, 1);
        let records: Vec<StudyRecord> = (0..20).map(|i| record(&format!("s{i:02}"), 1, 1, &[i < 15])).collect();
        let stats = difficulty_index("q1i0", ResourceConfigId::A, &records, &its).unwrap();
        assert_eq!((stats.n_attempts, stats.n_correct), (20, 15));
        assert_eq!(stats.difficulty_index, 0.75);
        let all: Vec<StudyRecord> = (0..5).map(|i| record(&format!("s{i}"), 1, 1, &[true])).collect();
        assert_eq!(difficulty_index("q1i0", ResourceConfigId::A, &all, &its).unwrap().difficulty_index, 1.0);
        assert!(matches!(
            difficulty_index("q1i0", ResourceConfigId::B, &records, &its),
            Err(StudyError::NoAttempts(..))
        ));
    }

    #[test]
    fn band_counts() {
        let cuts = BandCuts::default();
        assert_eq!(cuts.counts(100), (27, 46, 27));
        assert_eq!(cuts.counts(1), (1, 0, 0));
        assert_eq!(cuts.counts(85), (23, 39, 23));
        assert_eq!(cuts.counts(2), (1, 1, 0));
        assert!(BandCuts { upper: 0.27, mid: 0.46, lower: 0.46 }.validate().is_err());
    }

    #[test]
    fn single_student_is_upper() {
        let its = items(1, 2);
        let bands = partition_performance(&[record("solo", 1, 1, &[false, false])], &its, &BandCuts::default()).unwrap();
        assert_eq!(bands.band_of(QuizId::new(1).unwrap(), "solo"), Some(PerformanceBand::Upper));
        assert!(matches!(
            partition_performance(&[], &its, &BandCuts::default()),
            Err(StudyError::NoStudents)
        ));
    }

    #[test]
    fn ties_at_boundary_favour_lower_id() {
        // four students, upper band has one slot; s2 and s3 tie at the top
        let its = items(1, 2);
        let recs = vec![
            record("s3", 1, 1, &[true, true]),
            record("s2", 1, 1, &[true, true]),
            record("s1", 1, 1, &[false, false]),
            record("s4", 1, 1, &[true, false]),
        ];
        let bands = partition_performance(&recs, &its, &BandCuts::default()).unwrap();
        let q = QuizId::new(1).unwrap();
        assert_eq!(bands.band_of(q, "s2"), Some(PerformanceBand::Upper));
        assert_eq!(bands.band_of(q, "s3"), Some(PerformanceBand::Mid));
    }

    #[test]
    fn six_of_ten_takers() {
        let its = items(1, 1);
        let recs: Vec<StudyRecord> = (0..10).map(|i| record(&format!("s{i}"), 2, 1, &[i < 6])).collect();
        let cells = correct_answer_distribution(&recs, &its, BandFilter::All);
        let b = cells.iter().find(|c| c.config == ResourceConfigId::B).unwrap();
        assert_eq!(b.fraction, Some(0.6));
        let a = cells.iter().find(|c| c.config == ResourceConfigId::A).unwrap();
        assert_eq!(a.fraction, None);
        assert_eq!(a.n_takers, 0);
    }

    #[test]
    fn usage_categories() {
        // config C (group3 on quiz1): 40% used materials
        let mut recs = Vec::new();
        for i in 0..10 {
            let mut r = record(&format!("s{i}"), 3, 1, &[]);
            r.usage.used_materials = i < 4;
            r.usage.used_blade = i == 9; // not available under C
            recs.push(r);
        }
        // config A (group1 on quiz1): materials flag is ignored
        for i in 0..4 {
            let mut r = record(&format!("a{i}"), 1, 1, &[]);
            r.usage.used_materials = true;
            r.usage.used_blade = i % 2 == 0;
            recs.push(r);
        }
        let report = resource_usage_report(&recs);
        let c = report[&ResourceConfigId::C];
        assert_eq!(c.used_materials_only, 40.0);
        assert_eq!(c.used_none, 60.0);
        assert_eq!(c.used_blade_only, 0.0);
        let a = report[&ResourceConfigId::A];
        assert_eq!(a.used_materials_only, 0.0);
        assert_eq!(a.used_blade_only, 50.0);
        assert!(!report.contains_key(&ResourceConfigId::B));
    }
}
