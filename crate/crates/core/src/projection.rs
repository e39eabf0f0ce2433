//! Scalar positions of embedded texts along a semantic axis.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axes::SemanticAxis;
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::segmentation::SegmentedResponse;
use crate::types::{Construct, Representation, ResponseFormat};

/// One score for participant x construct x format x axis x representation.
///
/// `severity` is the negated projection, so larger means more symptomatic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub participant_id: String,
    pub time_point: u8,
    pub construct: Construct,
    pub format: ResponseFormat,
    #[serde(rename = "axis")]
    pub axis_name: String,
    pub representation: Representation,
    pub projection: f64,
    pub severity: f64,
}

impl ScoreRecord {
    pub fn sort_key(&self) -> (&str, u8, Construct, ResponseFormat, &str, Representation) {
        (
            &self.participant_id,
            self.time_point,
            self.construct,
            self.format,
            &self.axis_name,
            self.representation,
        )
    }
}

pub fn sort_records(records: &mut [ScoreRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// `(x . a) / |a|`
pub fn project(x: &[f64], axis: &SemanticAxis) -> Result<f64> {
    if x.len() != axis.direction.len() {
        return Err(Error::DimensionMismatch {
            expected: axis.direction.len(),
            found: x.len(),
        });
    }
    let dot: f64 = x.iter().zip(&axis.direction).map(|(a, b)| a * b).sum();
    Ok(dot / axis.norm)
}

pub fn project_f32(x: &[f32], axis: &SemanticAxis) -> Result<f64> {
    if x.len() != axis.direction.len() {
        return Err(Error::DimensionMismatch {
            expected: axis.direction.len(),
            found: x.len(),
        });
    }
    let dot: f64 = x.iter().zip(&axis.direction).map(|(&a, b)| f64::from(a) * b).sum();
    Ok(dot / axis.norm)
}

/// Arithmetic mean of unit scores.
pub fn mean_score(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no unit scores to aggregate".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// The signed score with the largest magnitude; ties go to the earliest unit.
pub fn maxabs_score(scores: &[f64]) -> Result<f64> {
    let mut best: Option<f64> = None;
    for &s in scores {
        match best {
            Some(b) if s.abs() <= b.abs() => {}
            _ => best = Some(s),
        }
    }
    best.ok_or_else(|| Error::InvalidInput("no unit scores to aggregate".into()))
}

fn embed_checked<P>(texts: &[&str], axis: &SemanticAxis, provider: &P) -> Result<Vec<Vec<f32>>>
where
    P: EmbeddingProvider + ?Sized,
{
    axis.check_model(provider.model_id())?;
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(Error::InvalidInput("cannot score empty text".into()));
    }
    let vectors = provider.embed_texts(texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::InvalidInput(format!(
            "provider returned {} vectors for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    Ok(vectors)
}

fn unit_scores<P>(units: &[String], axis: &SemanticAxis, provider: &P) -> Result<Vec<f64>>
where
    P: EmbeddingProvider + ?Sized,
{
    if units.is_empty() {
        return Err(Error::InvalidInput("response has no units".into()));
    }
    let texts: Vec<&str> = units.iter().map(String::as_str).collect();
    embed_checked(&texts, axis, provider)?
        .iter()
        .map(|v| project_f32(v, axis))
        .collect()
}

/// Embeds the complete text once and projects it.
pub fn score_whole<P>(text: &str, axis: &SemanticAxis, provider: &P) -> Result<f64>
where
    P: EmbeddingProvider + ?Sized,
{
    let v = embed_checked(&[text], axis, provider)?;
    project_f32(&v[0], axis)
}

pub fn score_units_mean<P>(units: &[String], axis: &SemanticAxis, provider: &P) -> Result<f64>
where
    P: EmbeddingProvider + ?Sized,
{
    mean_score(&unit_scores(units, axis, provider)?)
}

pub fn score_units_maxabs<P>(units: &[String], axis: &SemanticAxis, provider: &P) -> Result<f64>
where
    P: EmbeddingProvider + ?Sized,
{
    maxabs_score(&unit_scores(units, axis, provider)?)
}

/// Texts that must be embedded to score `response`.
pub fn texts_for(response: &SegmentedResponse) -> Vec<&str> {
    let mut texts = vec![response.source.text.as_str()];
    if response.source.format.is_aggregated() {
        texts.extend(response.units.iter().map(String::as_str));
    }
    texts
}

fn records_from_vectors(
    response: &SegmentedResponse,
    axis: &SemanticAxis,
    whole: &[f32],
    units: &[&[f32]],
) -> Result<Vec<ScoreRecord>> {
    let src = &response.source;
    let record = |representation, projection: f64| ScoreRecord {
        participant_id: src.participant_id.clone(),
        time_point: src.time_point,
        construct: src.construct,
        format: src.format,
        axis_name: axis.name.clone(),
        representation,
        projection,
        severity: -projection,
    };
    let mut out = vec![record(Representation::Whole, project_f32(whole, axis)?)];
    if src.format.is_aggregated() {
        let scores = units.iter().map(|v| project_f32(v, axis)).collect::<Result<Vec<_>>>()?;
        out.push(record(Representation::UnitMean, mean_score(&scores)?));
        out.push(record(Representation::UnitMaxabs, maxabs_score(&scores)?));
    }
    Ok(out)
}

/// Scores one response: a whole-text record for every format, plus unit mean
/// and max-abs records for free text.
pub fn score_response<P>(response: &SegmentedResponse, axis: &SemanticAxis, provider: &P) -> Result<Vec<ScoreRecord>>
where
    P: EmbeddingProvider + ?Sized,
{
    if response.units.is_empty() {
        return Err(Error::InvalidInput("response has no units".into()));
    }
    let texts = texts_for(response);
    let vectors = embed_checked(&texts, axis, provider)?;
    let units: Vec<&[f32]> = vectors[1..].iter().map(Vec::as_slice).collect();
    records_from_vectors(response, axis, &vectors[0], &units)
}

/// Scores every response against every axis of its construct.
///
/// All required texts are embedded in one provider call; the output is sorted
/// by the scores-file key.
pub fn score_all<P>(responses: &[SegmentedResponse], axes: &[&SemanticAxis], provider: &P) -> Result<Vec<ScoreRecord>>
where
    P: EmbeddingProvider + ?Sized,
{
    for axis in axes {
        axis.check_model(provider.model_id())?;
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut unique: Vec<&str> = Vec::new();
    for r in responses {
        for t in texts_for(r) {
            index.entry(t).or_insert_with(|| {
                unique.push(t);
                unique.len() - 1
            });
        }
    }
    if unique.iter().any(|t| t.trim().is_empty()) {
        return Err(Error::InvalidInput("cannot score empty text".into()));
    }
    let vectors = if unique.is_empty() {
        Vec::new()
    } else {
        provider.embed_texts(&unique)?
    };
    let per_response: Vec<Vec<ScoreRecord>> = responses
        .par_iter()
        .map(|r| {
            let texts = texts_for(r);
            let whole = &vectors[index[texts[0]]];
            let units: Vec<&[f32]> = texts[1..].iter().map(|t| vectors[index[t]].as_slice()).collect();
            let mut out = Vec::new();
            for axis in axes.iter().filter(|a| a.construct == r.source.construct) {
                out.extend(records_from_vectors(r, axis, whole, &units)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<ScoreRecord> = per_response.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(records)
}
