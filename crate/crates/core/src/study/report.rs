use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{student_ids, StudyData};
use super::{
    correct_answer_distribution, difficulty_indices, partition_performance, resource_usage_report, score_quiz,
    BandCuts, BandFilter, DistributionCell, ItemStats, PerformanceBand, QuizId, ResourceConfigId, StudyError,
    UsageBreakdown,
};

/// Files written by [`write_analysis`].
pub const ANALYSIS_FILES: [&str; 8] = [
    "correct_upper.csv",
    "correct_mid.csv",
    "correct_lower.csv",
    "correct_overall.csv",
    "scores.csv",
    "difficulty.csv",
    "resource_usage.csv",
    "summary.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub student_id: String,
    pub quiz: QuizId,
    pub config: ResourceConfigId,
    pub score_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub n_records: u32,
    pub mean_score_pct: f64,
    pub mean_difficulty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyAnalysis {
    pub n_students: usize,
    pub band_cuts: BandCuts,
    pub band_sizes: BTreeMap<PerformanceBand, usize>,
    pub scores: Vec<ScoreRow>,
    pub difficulty: Vec<ItemStats>,
    /// Keyed by `overall`, `upper`, `mid`, `lower`.
    pub distributions: BTreeMap<String, Vec<DistributionCell>>,
    pub usage: BTreeMap<ResourceConfigId, UsageBreakdown>,
    pub summary: BTreeMap<ResourceConfigId, ConfigSummary>,
}

impl StudyAnalysis {
    /// Configurations ordered by mean score, best first.
    pub fn config_order(&self) -> Vec<ResourceConfigId> {
        let mut order: Vec<_> = self.summary.iter().map(|(c, s)| (*c, s.mean_score_pct)).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        order.into_iter().map(|(c, _)| c).collect()
    }
}

pub fn analyze(data: &StudyData, cuts: &BandCuts) -> Result<StudyAnalysis, StudyError> {
    for item in &data.items {
        item.validate()?;
    }
    for r in &data.records {
        r.check_rotation()?;
    }
    let bands = partition_performance(&data.records, &data.items, cuts)?;

    let mut scores = Vec::with_capacity(data.records.len());
    let mut score_sums: BTreeMap<ResourceConfigId, (f64, u32)> = BTreeMap::new();
    for r in &data.records {
        let s = score_quiz(r, &data.items)?.score_pct;
        let e = score_sums.entry(r.config).or_default();
        e.0 += s;
        e.1 += 1;
        scores.push(ScoreRow {
            student_id: r.student_id.clone(),
            quiz: r.quiz,
            config: r.config,
            score_pct: s,
        });
    }

    let difficulty = difficulty_indices(&data.records, &data.items);
    let mut diff_sums: BTreeMap<ResourceConfigId, (f64, u32)> = BTreeMap::new();
    for d in &difficulty {
        let e = diff_sums.entry(d.config).or_default();
        e.0 += d.difficulty_index;
        e.1 += 1;
    }

    let mut distributions = BTreeMap::new();
    distributions.insert(
        "overall".to_string(),
        correct_answer_distribution(&data.records, &data.items, BandFilter::All),
    );
    let mut band_sizes = BTreeMap::new();
    for band in PerformanceBand::ALL {
        band_sizes.insert(band, bands.count(band));
        distributions.insert(
            band.as_str().to_string(),
            correct_answer_distribution(&data.records, &data.items, BandFilter::Band(&bands, band)),
        );
    }

    let summary = score_sums
        .iter()
        .map(|(c, (sum, n))| {
            let (dsum, dn) = diff_sums.get(c).copied().unwrap_or((0.0, 0));
            (
                *c,
                ConfigSummary {
                    n_records: *n,
                    mean_score_pct: sum / f64::from(*n),
                    mean_difficulty: if dn > 0 { dsum / f64::from(dn) } else { 0.0 },
                },
            )
        })
        .collect();

    Ok(StudyAnalysis {
        n_students: student_ids(&data.records).len(),
        band_cuts: *cuts,
        band_sizes,
        scores,
        difficulty,
        distributions,
        usage: resource_usage_report(&data.records),
        summary,
    })
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> StudyError + '_ {
    move |source| StudyError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    w.write_record(header).map_err(csv_error(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_error(path))?;
    }
    w.flush().map_err(|source| StudyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write the tables in [`ANALYSIS_FILES`] into `dir`.
pub fn write_analysis(dir: &Path, analysis: &StudyAnalysis) -> Result<(), StudyError> {
    std::fs::create_dir_all(dir).map_err(|source| StudyError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for key in ["upper", "mid", "lower", "overall"] {
        let rows = analysis.distributions[key].iter().map(|c| {
            vec![
                c.quiz.to_string(),
                c.config.to_string(),
                c.item_id.clone(),
                c.n_takers.to_string(),
                c.n_correct.to_string(),
                c.fraction.map(|f| f.to_string()).unwrap_or_default(),
            ]
        });
        write_csv(
            &dir.join(format!("correct_{key}.csv")),
            &["quiz", "config", "item_id", "n_takers", "n_correct", "fraction"],
            rows,
        )?;
    }
    write_csv(
        &dir.join("scores.csv"),
        &["student_id", "quiz", "config", "score_pct"],
        analysis.scores.iter().map(|s| {
            vec![s.student_id.clone(), s.quiz.to_string(), s.config.to_string(), s.score_pct.to_string()]
        }),
    )?;
    write_csv(
        &dir.join("difficulty.csv"),
        &["quiz", "item_id", "config", "n_attempts", "n_correct", "difficulty_index"],
        analysis.difficulty.iter().map(|d| {
            vec![
                d.quiz.to_string(),
                d.item_id.clone(),
                d.config.to_string(),
                d.n_attempts.to_string(),
                d.n_correct.to_string(),
                d.difficulty_index.to_string(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("resource_usage.csv"),
        &["config", "n_students", "used_blade_only", "used_materials_only", "used_both", "used_none"],
        analysis.usage.iter().map(|(c, u)| {
            vec![
                c.to_string(),
                u.n_students.to_string(),
                u.used_blade_only.to_string(),
                u.used_materials_only.to_string(),
                u.used_both.to_string(),
                u.used_none.to_string(),
            ]
        }),
    )?;
    let summary = serde_json::json!({
        "n_students": analysis.n_students,
        "band_cuts": analysis.band_cuts,
        "band_sizes": analysis.band_sizes,
        "configs": analysis.summary,
        "config_order": analysis.config_order(),
        "usage": analysis.usage,
    });
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&path, text + "\n").map_err(|source| StudyError::Io { path, source })
}

#[cfg(test)]
mod tests {
    use super::super::{simulate_cohort, SimulationParams};
    use super::*;

    #[test]
    fn default_cohort_orders_configs() {
        let cohort = simulate_cohort(&SimulationParams::default()).unwrap();
        let data = StudyData {
            items: cohort.items,
            records: cohort.records,
        };
        let a = analyze(&data, &BandCuts::default()).unwrap();
        assert_eq!(a.config_order(), vec![ResourceConfigId::B, ResourceConfigId::A, ResourceConfigId::C]);
        assert_eq!(a.band_sizes[&PerformanceBand::Upper], 23);
        let dir = tempfile::tempdir().unwrap();
        write_analysis(dir.path(), &a).unwrap();
        for f in ANALYSIS_FILES {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
    }
}
