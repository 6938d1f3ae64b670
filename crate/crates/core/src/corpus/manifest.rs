use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Resource, ResourceKind};

/// Segmentation parameters. Token counts use the crate tokenizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub target_tokens: u32,
    pub overlap_tokens: u32,
    pub transcript_window_s: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            target_tokens: 200,
            overlap_tokens: 40,
            transcript_window_s: 90.0,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.target_tokens == 0 {
            return Err(CorpusError::malformed("target_tokens", "must be positive"));
        }
        if self.overlap_tokens >= self.target_tokens {
            return Err(CorpusError::malformed(
                "overlap_tokens",
                format!(
                    "must be smaller than target_tokens ({} >= {})",
                    self.overlap_tokens, self.target_tokens
                ),
            ));
        }
        if !(self.transcript_window_s.is_finite() && self.transcript_window_s > 0.0) {
            return Err(CorpusError::malformed("transcript_window_s", "must be a positive number of seconds"));
        }
        Ok(())
    }

    pub(crate) fn window_ms(&self) -> u64 {
        (self.transcript_window_s * 1000.0).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub course_id: String,
    pub resources: Vec<Resource>,
    pub segmentation: SegmentationConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    course_id: Option<String>,
    #[serde(default)]
    resources: Vec<RawResource>,
    #[serde(default)]
    segmentation: RawSegmentation,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSegmentation {
    target_tokens: Option<i64>,
    overlap_tokens: Option<i64>,
    transcript_window_s: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResource {
    id: Option<String>,
    title: Option<String>,
    kind: Option<String>,
    module_tag: Option<String>,
    path: Option<String>,
    #[serde(default)]
    topics: Vec<String>,
    #[serde(default)]
    objectives: Vec<String>,
    first_page: Option<i64>,
}

/// Read and validate a TOML course manifest. Resource paths are resolved
/// relative to the manifest's directory and must exist.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest, CorpusError> {
    let path = path.as_ref();
    let src = super::read_file(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest_str(&src, base)
}

pub fn parse_manifest_str(src: &str, base_dir: &Path) -> Result<CorpusManifest, CorpusError> {
    let raw: RawManifest =
        toml::from_str(src).map_err(|e| CorpusError::malformed("manifest", e.message().to_string()))?;

    let course_id = nonempty(raw.course_id, "course_id")?;
    let segmentation = build_segmentation(raw.segmentation)?;

    if raw.resources.is_empty() {
        return Err(CorpusError::malformed("resources", "at least one resource is required"));
    }
    let mut seen = HashSet::new();
    let mut resources = Vec::with_capacity(raw.resources.len());
    for (i, r) in raw.resources.into_iter().enumerate() {
        let field = |name: &str| format!("resources[{i}].{name}");
        let id = nonempty(r.id, &field("id"))?;
        if id.contains('#') {
            return Err(CorpusError::malformed(field("id"), "must not contain `#`"));
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateResourceId(id));
        }
        let kind: ResourceKind = nonempty(r.kind, &field("kind"))?
            .parse()
            .map_err(|reason: String| CorpusError::malformed(field("kind"), reason))?;
        let module_tag = nonempty(r.module_tag, &field("module_tag"))?;
        let title = match r.title {
            Some(t) if !t.trim().is_empty() => t,
            _ => id.clone(),
        };
        let rel = nonempty(r.path, &field("path"))?;
        let resolved = resolve(base_dir, &rel);
        if !resolved.is_file() {
            return Err(CorpusError::MissingFile(resolved));
        }
        let first_page = match r.first_page {
            None => 1,
            Some(p) if p >= 1 && p <= u32::MAX as i64 => p as u32,
            Some(_) => return Err(CorpusError::malformed(field("first_page"), "must be a positive integer")),
        };
        resources.push(Resource {
            id,
            title,
            kind,
            module_tag,
            path: resolved,
            topics: clean_set(r.topics),
            objectives: clean_set(r.objectives),
            first_page,
        });
    }

    Ok(CorpusManifest {
        course_id,
        resources,
        segmentation,
    })
}

fn build_segmentation(raw: RawSegmentation) -> Result<SegmentationConfig, CorpusError> {
    let defaults = SegmentationConfig::default();
    let positive = |v: Option<i64>, name: &str, default: u32, allow_zero: bool| -> Result<u32, CorpusError> {
        match v {
            None => Ok(default),
            Some(x) if (x > 0 || (allow_zero && x == 0)) && x <= u32::MAX as i64 => Ok(x as u32),
            Some(x) => Err(CorpusError::malformed(name, format!("invalid value {x}"))),
        }
    };
    let cfg = SegmentationConfig {
        target_tokens: positive(raw.target_tokens, "target_tokens", defaults.target_tokens, false)?,
        overlap_tokens: positive(raw.overlap_tokens, "overlap_tokens", defaults.overlap_tokens, true)?,
        transcript_window_s: raw.transcript_window_s.unwrap_or(defaults.transcript_window_s),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn nonempty(v: Option<String>, field: &str) -> Result<String, CorpusError> {
    match v {
        Some(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Some(_) => Err(CorpusError::malformed(field, "must not be empty")),
        None => Err(CorpusError::malformed(field, "missing")),
    }
}

fn clean_set(items: Vec<String>) -> BTreeSet<String> {
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.md", "b.md", "c.vtt"] {
            std::fs::write(dir.path().join(name), "x").unwrap();
        }
        dir
    }

    fn resource_block(id: &str, path: &str) -> String {
        format!(
            "[[resources]]\nid = \"{id}\"\ntitle = \"T {id}\"\nkind = \"reading\"\nmodule_tag = \"w1\"\npath = \"{path}\"\n"
        )
    }

    #[test]
    fn three_resources_parse() {
        let dir = fixture_dir();
        let src = format!(
            "course_id = \"cs\"\n{}{}{}",
            resource_block("r1", "a.md"),
            resource_block("r2", "b.md"),
            resource_block("r3", "c.vtt")
        );
        let m = parse_manifest_str(&src, dir.path()).unwrap();
        assert_eq!(m.resources.len(), 3);
        assert_eq!(m.segmentation, SegmentationConfig::default());
        assert_eq!(m.resources[0].path, dir.path().join("a.md"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = fixture_dir();
        let src = format!(
            "course_id = \"cs\"\n{}{}",
            resource_block("lec7", "a.md"),
            resource_block("lec7", "b.md")
        );
        match parse_manifest_str(&src, dir.path()) {
            Err(CorpusError::DuplicateResourceId(id)) => assert_eq!(id, "lec7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlap_must_be_below_target() {
        let dir = fixture_dir();
        let src = format!(
            "course_id = \"cs\"\n[segmentation]\ntarget_tokens = 200\noverlap_tokens = 200\n{}",
            resource_block("r1", "a.md")
        );
        match parse_manifest_str(&src, dir.path()) {
            Err(CorpusError::MalformedManifest { field, .. }) => assert_eq!(field, "overlap_tokens"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        let dir = fixture_dir();
        let err = parse_manifest_str("resources = []", dir.path()).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedManifest { ref field, .. } if field == "course_id"));
        let err = parse_manifest_str("course_id = \"x\"", dir.path()).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedManifest { ref field, .. } if field == "resources"));
        let src = "course_id = \"x\"\n".to_string() + &resource_block("r1", "a.md").replace("reading", "video");
        let err = parse_manifest_str(&src, dir.path()).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedManifest { ref field, .. } if field == "resources[0].kind"));
        let src = "course_id = \"x\"\n".to_string() + &resource_block("r1", "gone.md");
        assert!(matches!(parse_manifest_str(&src, dir.path()), Err(CorpusError::MissingFile(_))));
        assert!(matches!(
            parse_manifest_str("course_id = [", dir.path()),
            Err(CorpusError::MalformedManifest { .. })
        ));
    }

    #[test]
    fn missing_manifest_file() {
        assert!(matches!(
            parse_manifest("/definitely/not/here.toml"),
            Err(CorpusError::MissingFile(_))
        ));
    }
}
