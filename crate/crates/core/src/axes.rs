//! Semantic axes built from positive/negative anchor sets.
//!
//! An axis is the difference between the mean embedding of its positive
//! anchors and the mean embedding of its negative anchors. Positive anchors
//! describe the low-symptom pole, so raw projections grow toward health.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Construct;

/// Norms below this are rejected as degenerate.
pub const MIN_AXIS_NORM: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorKind {
    /// Single words or short lexical items.
    Word,
    /// Full questionnaire items, embedded as sentences.
    Item,
}

/// Anchor texts for one axis. Serialized in the anchor-file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    #[serde(rename = "axis")]
    pub axis_name: String,
    pub construct: Construct,
    pub kind: AnchorKind,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl AnchorSet {
    /// Checks the pole invariants, returning every problem found.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.axis_name.trim().is_empty() {
            out.push("axis name is empty".to_string());
        }
        if self.positive.is_empty() {
            out.push("positive pole is empty".to_string());
        }
        if self.negative.is_empty() {
            out.push("negative pole is empty".to_string());
        }
        for text in self.positive.iter().chain(&self.negative) {
            if text.trim().is_empty() {
                out.push("anchor text is empty".to_string());
            }
            if self.kind == AnchorKind::Word && text.trim_end().ends_with(['.', '!', '?']) {
                out.push(format!("word anchor {text:?} ends with sentence punctuation"));
            }
        }
        let positive: HashSet<String> = self.positive.iter().map(|t| fold(t)).collect();
        for text in &self.negative {
            if positive.contains(&fold(text)) {
                out.push(format!("anchor {text:?} appears in both poles"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidAnchors {
                axis: self.axis_name.clone(),
                reason: problems.join("; "),
            })
        }
    }

    /// Every anchor text, positive pole first.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.positive.iter().chain(&self.negative).map(String::as_str)
    }

    /// The same anchors with the poles swapped.
    pub fn reversed(&self) -> AnchorSet {
        AnchorSet {
            positive: self.negative.clone(),
            negative: self.positive.clone(),
            ..self.clone()
        }
    }
}

fn fold(text: &str) -> String {
    text.trim().to_lowercase()
}

/// A named direction in one model's embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticAxis {
    pub name: String,
    pub construct: Construct,
    pub model_id: String,
    pub dim: usize,
    pub direction: Vec<f64>,
    pub norm: f64,
    pub provenance: AnchorSet,
}

impl SemanticAxis {
    /// Rejects use of the axis with vectors from a different model.
    pub fn check_model(&self, model_id: &str) -> Result<()> {
        if self.model_id == model_id {
            Ok(())
        } else {
            Err(Error::ModelMismatch {
                expected: self.model_id.clone(),
                found: model_id.to_string(),
            })
        }
    }

    /// The same axis pointing the other way.
    pub fn negated(&self) -> SemanticAxis {
        SemanticAxis {
            direction: self.direction.iter().map(|v| -v).collect(),
            provenance: self.provenance.reversed(),
            ..self.clone()
        }
    }
}

/// Builds the mean-difference axis for `anchors` from pre-computed anchor
/// embeddings.
pub fn build_axis(
    anchors: &AnchorSet,
    model_id: &str,
    anchor_embeddings: &HashMap<String, Vec<f32>>,
) -> Result<SemanticAxis> {
    anchors.validate()?;
    let lookup = |text: &str| {
        anchor_embeddings
            .get(text)
            .ok_or_else(|| Error::MissingEmbedding(text.to_string()))
    };
    let dim = lookup(&anchors.positive[0])?.len();
    if dim < 2 {
        return Err(Error::InvalidInput(format!(
            "embedding dimension must be at least 2, got {dim}"
        )));
    }
    let pole_mean = |texts: &[String]| -> Result<Vec<f64>> {
        let mut sum = vec![0.0f64; dim];
        for text in texts {
            let v = lookup(text)?;
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += f64::from(x);
            }
        }
        let n = texts.len() as f64;
        Ok(sum.into_iter().map(|s| s / n).collect())
    };
    let pos = pole_mean(&anchors.positive)?;
    let neg = pole_mean(&anchors.negative)?;
    let direction: Vec<f64> = pos.iter().zip(&neg).map(|(p, q)| p - q).collect();
    let norm = l2_norm(&direction);
    if norm.is_nan() || norm < MIN_AXIS_NORM {
        return Err(Error::DegenerateAxis {
            axis: anchors.axis_name.clone(),
            norm,
        });
    }
    Ok(SemanticAxis {
        name: anchors.axis_name.clone(),
        construct: anchors.construct,
        model_id: model_id.to_string(),
        dim,
        direction,
        norm,
        provenance: anchors.clone(),
    })
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine between two axis directions.
pub fn axis_similarity(a: &SemanticAxis, b: &SemanticAxis) -> Result<f64> {
    if a.dim != b.dim || a.direction.len() != b.direction.len() {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    let dot: f64 = a.direction.iter().zip(&b.direction).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm * b.norm)).clamp(-1.0, 1.0))
}

/// Named axes sharing one embedding model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisRegistry {
    axes: BTreeMap<String, SemanticAxis>,
}

impl AxisRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, axis: SemanticAxis) -> Result<()> {
        if let Some(existing) = self.axes.values().next() {
            if existing.model_id != axis.model_id {
                return Err(Error::ModelMismatch {
                    expected: existing.model_id.clone(),
                    found: axis.model_id,
                });
            }
            if existing.dim != axis.dim {
                return Err(Error::DimensionMismatch {
                    expected: existing.dim,
                    found: axis.dim,
                });
            }
        }
        if self.axes.contains_key(&axis.name) {
            return Err(Error::InvalidInput(format!("axis {} registered twice", axis.name)));
        }
        self.axes.insert(axis.name.clone(), axis);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&SemanticAxis> {
        self.axes.get(name)
    }

    /// Axes in name order.
    pub fn iter(&self) -> impl Iterator<Item = &SemanticAxis> {
        self.axes.values()
    }

    pub fn for_construct(&self, construct: Construct) -> Vec<&SemanticAxis> {
        self.iter().filter(|a| a.construct == construct).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn model_id(&self) -> Option<&str> {
        self.axes.values().next().map(|a| a.model_id.as_str())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let axes: Vec<&SemanticAxis> = self.iter().collect();
        let json = serde_json::to_vec_pretty(&axes)?;
        crate::datastore::write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let axes: Vec<SemanticAxis> = serde_json::from_slice(&bytes)?;
        let mut registry = AxisRegistry::new();
        for axis in axes {
            let recomputed = l2_norm(&axis.direction);
            if axis.direction.len() != axis.dim || (recomputed - axis.norm).abs() > 1e-9 * recomputed {
                return Err(Error::InvalidInput(format!(
                    "axis {} in {} has inconsistent dim or norm",
                    axis.name,
                    path.display()
                )));
            }
            registry.insert(axis)?;
        }
        Ok(registry)
    }
}

/// Low-dimensional layout of labelled vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaLayout {
    pub points: Vec<(String, Vec<f64>)>,
    /// Variance captured by each retained component.
    pub component_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

/// Projects centred vectors onto their leading principal components.
///
/// Component signs are fixed so that the largest-magnitude coordinate of each
/// component is positive.
pub fn pca_layout(embeddings: &[(String, Vec<f64>)], components: usize) -> Result<PcaLayout> {
    let components = components.max(1);
    let n = embeddings.len();
    let dim = embeddings.first().map(|(_, v)| v.len()).unwrap_or(0);
    for (_, v) in embeddings {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for (_, v) in embeddings {
        if !distinct.contains(&v) {
            distinct.push(v);
        }
    }
    if distinct.len() < components + 1 || dim < components {
        return Err(Error::InsufficientPoints {
            needed: components + 1,
            found: distinct.len(),
        });
    }

    let mut mean = vec![0.0; dim];
    for (_, v) in embeddings {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, dim, |i, j| embeddings[i].1[j] - mean[j]);
    let total_variance = centred.iter().map(|x| x * x).sum::<f64>() / (n - 1) as f64;

    let svd = centred.svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut points: Vec<(String, Vec<f64>)> = embeddings
        .iter()
        .map(|(label, _)| (label.clone(), Vec::with_capacity(components)))
        .collect();
    let mut component_variance = Vec::with_capacity(components);
    for &c in order.iter().take(components) {
        let s = svd.singular_values[c];
        let variance = s * s / (n - 1) as f64;
        if variance.is_nan() || variance <= total_variance * 1e-20 {
            return Err(Error::InsufficientPoints {
                needed: components + 1,
                found: distinct.len(),
            });
        }
        let scores: Vec<f64> = (0..n).map(|i| u[(i, c)] * s).collect();
        let pivot = scores
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (point, score) in points.iter_mut().zip(scores) {
            point.1.push(sign * score);
        }
        component_variance.push(variance);
    }
    let explained_variance_ratio = component_variance
        .iter()
        .map(|v| (v / total_variance).clamp(0.0, 1.0))
        .collect();
    Ok(PcaLayout {
        points,
        component_variance,
        explained_variance_ratio,
    })
}

/// Reconstructed default anchor lists for the six reference axes.
///
/// These are not the published anchor lists: word axes use common antonym
/// pairs and item axes use paraphrased questionnaire-style statements.
pub fn default_anchor_sets() -> Vec<AnchorSet> {
    serde_json::from_str(DEFAULT_ANCHORS).expect("bundled anchors parse")
}

pub const DEFAULT_ANCHORS: &str = include_str!("../data/anchors_default.json");

#[cfg(test)]
mod tests {
    use super::*;

    fn anchors(pos: &[&str], neg: &[&str]) -> AnchorSet {
        AnchorSet {
            axis_name: "TEST".into(),
            construct: Construct::Depression,
            kind: AnchorKind::Word,
            positive: pos.iter().map(|s| s.to_string()).collect(),
            negative: neg.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn table(entries: &[(&str, &[f32])]) -> HashMap<String, Vec<f32>> {
        entries.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect()
    }

    #[test]
    fn mean_difference_direction() {
        let set = anchors(&["p1", "p2"], &["q1"]);
        let emb = table(&[("p1", &[1.0, 0.0]), ("p2", &[1.0, 2.0]), ("q1", &[-1.0, -1.0])]);
        let axis = build_axis(&set, "m", &emb).unwrap();
        assert_eq!(axis.direction, vec![2.0, 2.0]);
        assert!((axis.norm - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(axis.dim, 2);
    }

    #[test]
    fn identical_poles_are_degenerate() {
        let set = anchors(&["p"], &["q"]);
        let emb = table(&[("p", &[3.0, 3.0]), ("q", &[3.0, 3.0])]);
        assert!(matches!(build_axis(&set, "m", &emb), Err(Error::DegenerateAxis { .. })));
    }

    #[test]
    fn missing_and_mismatched_embeddings() {
        let set = anchors(&["p"], &["q"]);
        let emb = table(&[("p", &[1.0, 0.0])]);
        assert!(matches!(
            build_axis(&set, "m", &emb),
            Err(Error::MissingEmbedding(t)) if t == "q"
        ));
        let emb = table(&[("p", &[1.0, 0.0]), ("q", &[1.0, 0.0, 2.0])]);
        assert!(matches!(
            build_axis(&set, "m", &emb),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn anchor_invariants() {
        assert!(anchors(&[], &["q"]).validate().is_err());
        assert!(anchors(&["Sad "], &["sad"]).validate().is_err());
        assert!(anchors(&["happy."], &["sad"]).validate().is_err());
        let mut item = anchors(&["I felt happy."], &["I felt sad."]);
        item.kind = AnchorKind::Item;
        assert!(item.validate().is_ok());
    }

    #[test]
    fn similarity_examples() {
        let set = anchors(&["p"], &["q"]);
        let emb = table(&[("p", &[1.0, 0.0]), ("q", &[0.0, 0.0])]);
        let a = build_axis(&set, "m", &emb).unwrap();
        let emb = table(&[("p", &[1.0, 1.0]), ("q", &[0.0, 0.0])]);
        let b = build_axis(&set, "m", &emb).unwrap();
        assert_eq!(axis_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(axis_similarity(&a, &a.negated()).unwrap(), -1.0);
        // cos 45 degrees
        let expected = 0.707_106_781_186_547_5;
        assert!((axis_similarity(&a, &b).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn registry_rejects_duplicates_and_foreign_models() {
        let set = anchors(&["p"], &["q"]);
        let emb = table(&[("p", &[1.0, 0.0]), ("q", &[0.0, 1.0])]);
        let a = build_axis(&set, "m1", &emb).unwrap();
        let mut reg = AxisRegistry::new();
        reg.insert(a.clone()).unwrap();
        assert!(reg.insert(a.clone()).is_err());
        let mut other = a.clone();
        other.name = "OTHER".into();
        other.model_id = "m2".into();
        assert!(matches!(reg.insert(other), Err(Error::ModelMismatch { .. })));
        assert!(a.check_model("m2").is_err());
    }

    #[test]
    fn pca_of_identical_points_is_rejected() {
        let pts: Vec<(String, Vec<f64>)> = (0..5).map(|i| (format!("p{i}"), vec![1.0, 2.0, 3.0])).collect();
        assert!(matches!(pca_layout(&pts, 2), Err(Error::InsufficientPoints { .. })));
    }

    #[test]
    fn default_anchors_are_valid() {
        let sets = default_anchor_sets();
        assert_eq!(sets.len(), 6);
        for s in &sets {
            s.validate().unwrap();
        }
    }
}
