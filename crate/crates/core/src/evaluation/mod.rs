//! Report tables: validity correlations, split-half reliability, sensitivity
//! triples, distributional similarity and the sentiment baseline comparison.
//!
//! Every analysis runs on severity (`-projection`). Cells that cannot be
//! computed are [`Cell::Na`] with a reason; they never become zero.

mod render;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axes::SemanticAxis;
use crate::datastore::{ClinicalRecord, ScaleReliability};
use crate::embedding::{EmbeddingProvider, ProviderConfig};
use crate::error::{Error, Result};
use crate::projection::{maxabs_score, mean_score, project_f32, ScoreRecord};
use crate::psychometrics::{
    full_disattenuate, partial_disattenuate, pearson, spearman_brown, split_half_reliability, wasserstein_z, Corrected,
    CorrelationResult,
};
use crate::segmentation::{join_units, odd_even_split, RawResponse, SegmentedResponse};
use crate::sentiment::SentimentLexicon;
use crate::types::{Construct, ReportRow, Representation, ResponseFormat, Scale, TimePointFilter};

pub use render::{plot_tables, render_markdown};

/// Number of rows listed per construct in the distribution ranking.
pub const TOP_K: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaReason {
    UndefinedReliability,
    ZeroVariance,
    TooFewObservations,
    NoData,
}

impl NaReason {
    pub fn as_str(self) -> &'static str {
        match self {
            NaReason::UndefinedReliability => "undefined_reliability",
            NaReason::ZeroVariance => "zero_variance",
            NaReason::TooFewObservations => "too_few_observations",
            NaReason::NoData => "no_data",
        }
    }
}

/// A table value, or the reason it is missing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell<T> {
    Value(T),
    Na(NaReason),
}

impl<T> Cell<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Cell::Value(v) => Some(v),
            Cell::Na(_) => None,
        }
    }

    pub fn map<U>(&self, f: impl FnOnce(&T) -> U) -> Cell<U> {
        match self {
            Cell::Value(v) => Cell::Value(f(v)),
            Cell::Na(r) => Cell::Na(*r),
        }
    }

    pub fn try_map<U>(&self, f: impl FnOnce(&T) -> Result<U>) -> Result<Cell<U>> {
        match self {
            Cell::Value(v) => capture(f(v)),
            Cell::Na(r) => Ok(Cell::Na(*r)),
        }
    }
}

/// Turns the statistical errors that make a single cell undefined into NA
/// values; everything else still fails the table.
fn capture<T>(result: Result<T>) -> Result<Cell<T>> {
    match result {
        Ok(v) => Ok(Cell::Value(v)),
        Err(Error::ZeroVariance) => Ok(Cell::Na(NaReason::ZeroVariance)),
        Err(Error::TooFewObservations { .. }) => Ok(Cell::Na(NaReason::TooFewObservations)),
        Err(Error::UndefinedReliability) => Ok(Cell::Na(NaReason::UndefinedReliability)),
        Err(Error::EmptySeries) => Ok(Cell::Na(NaReason::NoData)),
        Err(e) => Err(e),
    }
}

fn scale_reliability(reliabilities: &BTreeMap<Scale, f64>, scales: &[Scale]) -> Result<Vec<f64>> {
    let missing: Vec<Scale> = scales
        .iter()
        .copied()
        .filter(|s| !reliabilities.contains_key(s))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingReliabilities(missing));
    }
    Ok(scales.iter().map(|s| reliabilities[s]).collect())
}

struct ClinicalIndex<'a>(HashMap<(&'a str, u8), &'a ClinicalRecord>);

impl<'a> ClinicalIndex<'a> {
    fn new(clinical: &'a [ClinicalRecord]) -> Result<Self> {
        let mut map = HashMap::with_capacity(clinical.len());
        for c in clinical {
            if map.insert((c.participant_id.as_str(), c.time_point), c).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate clinical record for {}/t{}",
                    c.participant_id, c.time_point
                )));
            }
        }
        Ok(ClinicalIndex(map))
    }

    fn get(&self, participant_id: &str, time_point: u8) -> Result<&'a ClinicalRecord> {
        self.0
            .get(&(participant_id, time_point))
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("no clinical record for {participant_id}/t{time_point}")))
    }
}

type Paired<'a> = Vec<(&'a ScoreRecord, &'a ClinicalRecord)>;

/// Score records of one construct grouped by report row and axis, each group
/// joined to clinical records and sorted by participant key.
fn group_scores<'a>(
    scores: &'a [ScoreRecord],
    clinical: &ClinicalIndex<'a>,
    construct: Construct,
    filter: TimePointFilter,
) -> Result<BTreeMap<(ReportRow, &'a str), Paired<'a>>> {
    let mut groups: BTreeMap<(ReportRow, &str), Paired> = BTreeMap::new();
    for s in scores {
        if s.construct != construct || !filter.admits(s.time_point) {
            continue;
        }
        let Some(row) = ReportRow::of(s.format, s.representation) else {
            return Err(Error::InvalidInput(format!(
                "{} has no {} representation",
                s.format, s.representation
            )));
        };
        let c = clinical.get(&s.participant_id, s.time_point)?;
        groups.entry((row, s.axis_name.as_str())).or_default().push((s, c));
    }
    for ((row, axis), pairs) in groups.iter_mut() {
        pairs.sort_by(|a, b| {
            (a.0.participant_id.as_str(), a.0.time_point).cmp(&(b.0.participant_id.as_str(), b.0.time_point))
        });
        if let Some(w) = pairs
            .windows(2)
            .find(|w| w[0].0.participant_id == w[1].0.participant_id && w[0].0.time_point == w[1].0.time_point)
        {
            return Err(Error::InvalidInput(format!(
                "duplicate score for {}/t{} in {row} on {axis}",
                w[0].0.participant_id, w[0].0.time_point
            )));
        }
    }
    Ok(groups)
}

fn axis_names(scores: &[ScoreRecord], construct: Construct) -> Vec<String> {
    scores
        .iter()
        .filter(|s| s.construct == construct)
        .map(|s| s.axis_name.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn series(pairs: &[(&ScoreRecord, &ClinicalRecord)], scale: Scale) -> (Vec<f64>, Vec<f64>) {
    pairs
        .iter()
        .map(|(s, c)| (s.severity, f64::from(c.total(scale))))
        .unzip()
}

fn correlate(x: &[f64], y: &[f64]) -> Result<Cell<CorrelationResult>> {
    if x.is_empty() {
        return Ok(Cell::Na(NaReason::NoData));
    }
    capture(pearson(x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub row: ReportRow,
    pub axis: String,
    pub scale: Scale,
    pub n: usize,
    /// Observed correlation; its p-value sets the significance stars.
    pub raw: Cell<CorrelationResult>,
    /// Corrected for the reliability of the clinical scale only.
    pub partial: Cell<Corrected>,
}

/// Validity correlations for one construct: rows by axes by scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub construct: Construct,
    pub rows: Vec<ReportRow>,
    pub axes: Vec<String>,
    pub scales: Vec<Scale>,
    pub cells: Vec<CorrelationCell>,
}

impl CorrelationTable {
    pub fn cell(&self, row: ReportRow, axis: &str, scale: Scale) -> Option<&CorrelationCell> {
        self.cells
            .iter()
            .find(|c| c.row == row && c.axis == axis && c.scale == scale)
    }
}

pub fn correlation_table(
    scores: &[ScoreRecord],
    clinical: &[ClinicalRecord],
    reliabilities: &BTreeMap<Scale, f64>,
    construct: Construct,
    filter: TimePointFilter,
) -> Result<CorrelationTable> {
    let scales = construct.scales().to_vec();
    let r_scale = scale_reliability(reliabilities, &scales)?;
    let index = ClinicalIndex::new(clinical)?;
    let groups = group_scores(scores, &index, construct, filter)?;
    let axes = axis_names(scores, construct);
    let rows = ReportRow::ALL.to_vec();
    let mut specs = Vec::new();
    for &row in &rows {
        for axis in &axes {
            for (si, &scale) in scales.iter().enumerate() {
                specs.push((row, axis.as_str(), scale, r_scale[si]));
            }
        }
    }
    let cells = specs
        .par_iter()
        .map(|&(row, axis, scale, rel)| {
            let pairs = groups.get(&(row, axis)).map(Vec::as_slice).unwrap_or(&[]);
            let (x, y) = series(pairs, scale);
            let raw = correlate(&x, &y)?;
            let partial = raw.try_map(|c| partial_disattenuate(c.r, rel))?;
            Ok(CorrelationCell {
                row,
                axis: axis.to_string(),
                scale,
                n: x.len(),
                raw,
                partial,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationTable {
        construct,
        rows,
        axes,
        scales,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCell {
    pub row: ReportRow,
    pub axis: String,
    pub construct: Construct,
    pub n_pairs: usize,
    /// Responses with fewer than two units.
    pub excluded: usize,
    pub r_half: Cell<f64>,
    pub r_sb: Cell<f64>,
}

/// Split-half reliability for every row and every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityTable {
    pub rows: Vec<ReportRow>,
    pub axes: Vec<String>,
    pub cells: Vec<ReliabilityCell>,
}

impl ReliabilityTable {
    pub fn cell(&self, row: ReportRow, axis: &str) -> Option<&ReliabilityCell> {
        self.cells.iter().find(|c| c.row == row && c.axis == axis)
    }

    /// The Spearman-Brown value for a cell, NA when absent or undefined.
    pub fn r_sb(&self, row: ReportRow, axis: &str) -> Cell<f64> {
        self.cell(row, axis).map_or(Cell::Na(NaReason::NoData), |c| c.r_sb)
    }
}

struct SplitResponse<'a> {
    response: &'a SegmentedResponse,
    halves: [Vec<String>; 2],
    joined: [String; 2],
}

/// Texts to embed for the split-half scores of `r`: the two re-joined halves,
/// plus every unit for aggregated formats.
fn split_texts<'a>(r: &'a SplitResponse<'_>) -> Vec<&'a str> {
    let mut texts: Vec<&str> = r.joined.iter().map(String::as_str).collect();
    if r.response.source.format.is_aggregated() {
        texts.extend(r.response.units.iter().map(String::as_str));
    }
    texts
}

/// Odd/even split-half reliability per row and axis.
///
/// Structured formats score each re-joined half as a whole text. For the
/// aggregated free-text rows each half's units are scored and re-aggregated
/// with the row's own representation.
pub fn reliability_table<P>(
    responses: &[SegmentedResponse],
    axes: &[&SemanticAxis],
    provider: &P,
    filter: TimePointFilter,
) -> Result<ReliabilityTable>
where
    P: EmbeddingProvider + ?Sized,
{
    for axis in axes {
        axis.check_model(provider.model_id())?;
    }
    let mut admitted: Vec<&SegmentedResponse> = responses
        .iter()
        .filter(|r| filter.admits(r.source.time_point))
        .collect();
    admitted.sort_by(|a, b| {
        let key = |r: &SegmentedResponse| {
            (
                r.source.participant_id.clone(),
                r.source.time_point,
                r.source.construct,
                r.source.format,
            )
        };
        key(a).cmp(&key(b))
    });
    let mut split: Vec<SplitResponse> = Vec::new();
    let mut excluded: HashMap<(Construct, ResponseFormat), usize> = HashMap::new();
    for r in admitted {
        if r.k() < 2 {
            *excluded.entry((r.source.construct, r.source.format)).or_default() += 1;
            continue;
        }
        let (a, b) = odd_even_split(&r.units)?;
        let joined = [join_units(&a, r.source.format), join_units(&b, r.source.format)];
        split.push(SplitResponse {
            response: r,
            halves: [a, b],
            joined,
        });
    }

    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut unique: Vec<&str> = Vec::new();
    for r in &split {
        for t in split_texts(r) {
            index.entry(t).or_insert_with(|| {
                unique.push(t);
                unique.len() - 1
            });
        }
    }
    let vectors = if unique.is_empty() {
        Vec::new()
    } else {
        provider.embed_texts(&unique)?
    };
    if vectors.len() != unique.len() {
        return Err(Error::InvalidInput(format!(
            "provider returned {} vectors for {} texts",
            vectors.len(),
            unique.len()
        )));
    }

    let rows = ReportRow::ALL.to_vec();
    let mut ordered: Vec<&SemanticAxis> = axes.to_vec();
    ordered.sort_by(|a, b| (a.construct, &a.name).cmp(&(b.construct, &b.name)));
    let mut specs = Vec::new();
    for &row in &rows {
        for &axis in &ordered {
            specs.push((row, axis));
        }
    }
    let severity = |text: &str, axis: &SemanticAxis| -> Result<f64> { Ok(-project_f32(&vectors[index[text]], axis)?) };
    let cells = specs
        .par_iter()
        .map(|&(row, axis)| {
            let format = row.format();
            let mut pairs = Vec::new();
            for r in split
                .iter()
                .filter(|r| r.response.source.construct == axis.construct && r.response.source.format == format)
            {
                let half = |i: usize| -> Result<f64> {
                    match row.representation() {
                        Representation::Whole => severity(&r.joined[i], axis),
                        rep => {
                            let scores = r.halves[i]
                                .iter()
                                .map(|u| severity(u, axis))
                                .collect::<Result<Vec<f64>>>()?;
                            if rep == Representation::UnitMean {
                                mean_score(&scores)
                            } else {
                                maxabs_score(&scores)
                            }
                        }
                    }
                };
                pairs.push((half(0)?, half(1)?));
            }
            let excluded = excluded.get(&(axis.construct, format)).copied().unwrap_or(0);
            let r_half = if pairs.is_empty() {
                if excluded > 0 {
                    Cell::Na(NaReason::TooFewObservations)
                } else {
                    Cell::Na(NaReason::NoData)
                }
            } else {
                capture(split_half_reliability(&pairs, excluded))?.map(|e| e.r_half.expect("pearson defined"))
            };
            let r_sb = match r_half {
                Cell::Value(r) => spearman_brown(r).map_or(Cell::Na(NaReason::UndefinedReliability), Cell::Value),
                Cell::Na(reason) => Cell::Na(reason),
            };
            Ok(ReliabilityCell {
                row,
                axis: axis.name.clone(),
                construct: axis.construct,
                n_pairs: pairs.len(),
                excluded,
                r_half,
                r_sb,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReliabilityTable {
        rows,
        axes: ordered.iter().map(|a| a.name.clone()).collect(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub row: ReportRow,
    pub axis: String,
    pub scale: Scale,
    pub raw: Cell<f64>,
    pub partial: Cell<Corrected>,
    /// Corrected for both the projection's split-half reliability and the
    /// scale reliability; an upper-bound approximation.
    pub full: Cell<Corrected>,
    pub r_projection: Cell<f64>,
    pub r_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub construct: Construct,
    pub cells: Vec<SensitivityCell>,
}

/// Raw, partially and fully corrected correlations per cell.
pub fn sensitivity_analysis(
    correlations: &[CorrelationTable],
    reliabilities: &BTreeMap<Scale, f64>,
    projection: &ReliabilityTable,
) -> Result<Vec<SensitivityTable>> {
    correlations
        .iter()
        .map(|table| {
            let r_scale = scale_reliability(reliabilities, &table.scales)?;
            let cells = table
                .cells
                .iter()
                .map(|c| {
                    let rel = r_scale[table.scales.iter().position(|s| *s == c.scale).expect("scale in table")];
                    let r_projection = projection.r_sb(c.row, &c.axis);
                    let full = match (&c.raw, r_projection) {
                        (Cell::Na(reason), _) => Cell::Na(*reason),
                        (Cell::Value(_), Cell::Na(_)) => Cell::Na(NaReason::UndefinedReliability),
                        (Cell::Value(raw), Cell::Value(r_sb)) => capture(full_disattenuate(raw.r, Some(r_sb), rel))?,
                    };
                    Ok(SensitivityCell {
                        row: c.row,
                        axis: c.axis.clone(),
                        scale: c.scale,
                        raw: c.raw.map(|r| r.r),
                        partial: c.partial,
                        full,
                        r_projection,
                        r_scale: rel,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SensitivityTable {
                construct: table.construct,
                cells,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionCell {
    pub row: ReportRow,
    pub axis: String,
    pub scale: Scale,
    pub n: usize,
    pub wd_z: Cell<f64>,
    pub raw_r: Cell<f64>,
}

/// The best cell of one of the lowest-WD_z rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub rank: usize,
    pub row: ReportRow,
    pub axis: String,
    pub scale: Scale,
    pub wd_z: f64,
    pub raw_r: Cell<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub construct: Construct,
    pub cells: Vec<DistributionCell>,
    /// Up to [`TOP_K`] rows ordered by their lowest WD_z; ties go to the
    /// earlier row name.
    pub top: Vec<RankedRow>,
}

pub fn distribution_similarity(
    scores: &[ScoreRecord],
    clinical: &[ClinicalRecord],
    construct: Construct,
    filter: TimePointFilter,
) -> Result<DistributionTable> {
    let index = ClinicalIndex::new(clinical)?;
    let groups = group_scores(scores, &index, construct, filter)?;
    let axes = axis_names(scores, construct);
    let mut specs = Vec::new();
    for &row in ReportRow::ALL {
        for axis in &axes {
            for scale in construct.scales() {
                specs.push((row, axis.as_str(), scale));
            }
        }
    }
    let cells = specs
        .par_iter()
        .map(|&(row, axis, scale)| {
            let pairs = groups.get(&(row, axis)).map(Vec::as_slice).unwrap_or(&[]);
            let (x, y) = series(pairs, scale);
            let wd_z = if x.is_empty() {
                Cell::Na(NaReason::NoData)
            } else {
                capture(wasserstein_z(&x, &y))?
            };
            Ok(DistributionCell {
                row,
                axis: axis.to_string(),
                scale,
                n: x.len(),
                wd_z,
                raw_r: correlate(&x, &y)?.map(|c| c.r),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let top = rank_rows(&cells);
    Ok(DistributionTable { construct, cells, top })
}

fn rank_rows(cells: &[DistributionCell]) -> Vec<RankedRow> {
    let mut best: BTreeMap<&str, (&DistributionCell, f64)> = BTreeMap::new();
    for c in cells {
        let Some(&w) = c.wd_z.value() else { continue };
        let name = c.row.as_str();
        match best.get(name) {
            Some(&(_, b)) if b <= w => {}
            _ => {
                best.insert(name, (c, w));
            }
        }
    }
    let mut ranked: Vec<(&str, &DistributionCell, f64)> = best.into_iter().map(|(n, (c, w))| (n, c, w)).collect();
    ranked.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(TOP_K)
        .enumerate()
        .map(|(i, (_, c, w))| RankedRow {
            rank: i + 1,
            row: c.row,
            axis: c.axis.clone(),
            scale: c.scale,
            wd_z: w,
            raw_r: c.raw_r,
        })
        .collect()
}

/// Lexicon sentiment of one raw response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub participant_id: String,
    pub time_point: u8,
    pub construct: Construct,
    pub format: ResponseFormat,
    pub compound: f64,
    pub distress: f64,
}

/// Scores every response on its raw text, sorted by response key.
pub fn sentiment_scores(responses: &[RawResponse], lexicon: &SentimentLexicon) -> Vec<SentimentScore> {
    let mut out: Vec<SentimentScore> = responses
        .par_iter()
        .map(|r| {
            let s = lexicon.analyze(&r.text);
            SentimentScore {
                participant_id: r.participant_id.clone(),
                time_point: r.time_point,
                construct: r.construct,
                format: r.format,
                compound: s.compound,
                distress: s.distress,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.participant_id, a.time_point, a.construct, a.format).cmp(&(
            &b.participant_id,
            b.time_point,
            b.construct,
            b.format,
        ))
    });
    out
}

/// The projection cell with the highest partially corrected correlation for
/// a format and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestProjection {
    pub row: ReportRow,
    pub axis: String,
    pub representation: Representation,
    pub n: usize,
    pub raw_r: f64,
    pub partial_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub construct: Construct,
    pub format: ResponseFormat,
    pub scale: Scale,
    pub projection: Cell<BestProjection>,
    pub sentiment_n: usize,
    pub sentiment_raw: Cell<CorrelationResult>,
    pub sentiment_partial: Cell<Corrected>,
    /// `projection.partial_r - sentiment_partial.value`.
    pub delta: Cell<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub cells: Vec<DeltaCell>,
}

impl DeltaTable {
    pub fn cell(&self, construct: Construct, format: ResponseFormat, scale: Scale) -> Option<&DeltaCell> {
        self.cells
            .iter()
            .find(|c| c.construct == construct && c.format == format && c.scale == scale)
    }
}

fn best_projection(table: &CorrelationTable, format: ResponseFormat, scale: Scale) -> Cell<BestProjection> {
    let mut best: Option<BestProjection> = None;
    for c in table
        .cells
        .iter()
        .filter(|c| c.row.format() == format && c.scale == scale)
    {
        let (Cell::Value(raw), Cell::Value(partial)) = (&c.raw, &c.partial) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| partial.value > b.partial_r) {
            best = Some(BestProjection {
                row: c.row,
                axis: c.axis.clone(),
                representation: c.row.representation(),
                n: c.n,
                raw_r: raw.r,
                partial_r: partial.value,
            });
        }
    }
    match best {
        Some(b) => Cell::Value(b),
        None => {
            let reasons: BTreeSet<NaReason> = table
                .cells
                .iter()
                .filter(|c| c.row.format() == format && c.scale == scale)
                .filter_map(|c| match c.partial {
                    Cell::Na(r) => Some(r),
                    Cell::Value(_) => None,
                })
                .collect();
            Cell::Na(reasons.into_iter().next().unwrap_or(NaReason::NoData))
        }
    }
}

/// Compares the best projection cell per format and scale with the distress
/// index of the raw text. Both sides use the partially corrected correlation.
pub fn baseline_delta(
    correlations: &[CorrelationTable],
    sentiment: &[SentimentScore],
    clinical: &[ClinicalRecord],
    reliabilities: &BTreeMap<Scale, f64>,
    filter: TimePointFilter,
) -> Result<DeltaTable> {
    let index = ClinicalIndex::new(clinical)?;
    let mut cells = Vec::new();
    for table in correlations {
        let r_scale = scale_reliability(reliabilities, &table.scales)?;
        for &format in ResponseFormat::ALL {
            let mut joined: Vec<(&SentimentScore, &ClinicalRecord)> = Vec::new();
            for s in sentiment
                .iter()
                .filter(|s| s.construct == table.construct && s.format == format && filter.admits(s.time_point))
            {
                joined.push((s, index.get(&s.participant_id, s.time_point)?));
            }
            joined.sort_by(|a, b| (&a.0.participant_id, a.0.time_point).cmp(&(&b.0.participant_id, b.0.time_point)));
            for (si, &scale) in table.scales.iter().enumerate() {
                let (x, y): (Vec<f64>, Vec<f64>) = joined
                    .iter()
                    .map(|(s, c)| (s.distress, f64::from(c.total(scale))))
                    .unzip();
                let sentiment_raw = correlate(&x, &y)?;
                let sentiment_partial = sentiment_raw.try_map(|c| partial_disattenuate(c.r, r_scale[si]))?;
                let projection = best_projection(table, format, scale);
                let delta = match (&projection, &sentiment_partial) {
                    (Cell::Value(p), Cell::Value(s)) => Cell::Value(p.partial_r - s.value),
                    (Cell::Na(r), _) | (_, Cell::Na(r)) => Cell::Na(*r),
                };
                cells.push(DeltaCell {
                    construct: table.construct,
                    format,
                    scale,
                    projection,
                    sentiment_n: x.len(),
                    sentiment_raw,
                    sentiment_partial,
                    delta,
                });
            }
        }
    }
    Ok(DeltaTable { cells })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconInfo {
    pub id: String,
    pub checksum: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusions {
    /// Input lines skipped under lenient loading.
    pub skipped_input_lines: usize,
    /// Responses with fewer than two units, per reliability row and axis.
    pub split_half: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    /// Wall-clock creation time; the only field that differs between
    /// identical runs.
    pub generated_at: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub model_id: String,
    pub time_point: TimePointFilter,
    pub constructs: Vec<Construct>,
    pub axes: Vec<String>,
    pub reliabilities: BTreeMap<Scale, ScaleReliability>,
    pub provider: ProviderConfig,
    pub n_responses: usize,
    pub n_participants: usize,
    pub n_observations: usize,
    /// Some participants contribute more than one time point to a pooled
    /// analysis, so p-values treat dependent observations as independent.
    pub non_independent_observations: bool,
    pub exclusions: Exclusions,
    /// Paths of corrected cells that overshot [-1, 1] and were clamped.
    pub clamped_cells: Vec<String>,
    pub sentiment_lexicon: LexiconInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: ReportMetadata,
    pub correlations: Vec<CorrelationTable>,
    pub reliability: ReliabilityTable,
    pub sensitivity: Vec<SensitivityTable>,
    pub distributions: Vec<DistributionTable>,
    pub baseline: DeltaTable,
}

impl EvaluationReport {
    /// Builds a report, filling the clamp flags and split-half exclusion
    /// counts in `metadata` from the tables.
    pub fn assemble(
        mut metadata: ReportMetadata,
        correlations: Vec<CorrelationTable>,
        reliability: ReliabilityTable,
        sensitivity: Vec<SensitivityTable>,
        distributions: Vec<DistributionTable>,
        baseline: DeltaTable,
    ) -> Self {
        let mut clamped = Vec::new();
        let flag = |v: &Cell<Corrected>| v.value().is_some_and(|c| c.clamped);
        for t in &correlations {
            for c in t.cells.iter().filter(|c| flag(&c.partial)) {
                clamped.push(format!(
                    "correlations/{}/{}/{}/{}/partial",
                    t.construct, c.row, c.axis, c.scale
                ));
            }
        }
        for t in &sensitivity {
            for c in t.cells.iter().filter(|c| flag(&c.full)) {
                clamped.push(format!(
                    "sensitivity/{}/{}/{}/{}/full",
                    t.construct, c.row, c.axis, c.scale
                ));
            }
        }
        for c in baseline.cells.iter().filter(|c| flag(&c.sentiment_partial)) {
            clamped.push(format!(
                "baseline/{}/{}/{}/sentiment_partial",
                c.construct, c.format, c.scale
            ));
        }
        metadata.clamped_cells = clamped;
        metadata.exclusions.split_half = reliability
            .cells
            .iter()
            .filter(|c| c.excluded > 0)
            .map(|c| (format!("{}/{}", c.row, c.axis), c.excluded))
            .collect();
        EvaluationReport {
            metadata,
            correlations,
            reliability,
            sensitivity,
            distributions,
            baseline,
        }
    }
}
