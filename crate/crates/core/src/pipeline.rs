//! File-based orchestration of the scoring and evaluation steps.
//!
//! Every step reads its inputs from the paths in [`RunConfig`] and writes
//! into the output directory:
//!
//! ```text
//! out/axes.json               axes build
//! out/plots/anchor_pca.csv    axes pca
//! out/scores.csv              score
//! out/score_summary.json      score
//! out/sentiment.csv           eval baseline
//! out/eval/<table>.json       eval correlations | reliability | sensitivity | distributions | baseline
//! out/report.json, report.md  report render
//! out/plots/*.csv             report render
//! ```

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::axes::{build_axis, default_anchor_sets, pca_layout, AnchorSet, AxisRegistry, PcaLayout, SemanticAxis};
use crate::datastore::{self, format_sig9, ClinicalRecord, Loaded, RunConfig};
use crate::embedding::{CachedProvider, EmbeddingCache, EmbeddingProvider, HttpService};
use crate::error::{Error, Result};
use crate::evaluation::{
    self, CorrelationTable, DeltaTable, DistributionTable, EvaluationReport, Exclusions, LexiconInfo, ReliabilityTable,
    ReportMetadata, SensitivityTable,
};
use crate::projection::{score_all, texts_for, ScoreRecord};
use crate::segmentation::{join_units, odd_even_split, RawResponse, SegmentedResponse, Segmenter};
use crate::sentiment::SentimentLexicon;
use crate::types::{Construct, Scale, TimePointFilter};

/// Command-line overrides; set fields win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub time_point: Option<TimePointFilter>,
    pub construct: Option<Construct>,
    pub seed: Option<u64>,
    pub service_url: Option<String>,
    pub cache_only: bool,
    pub lenient: bool,
}

/// Written by `score` so later steps can report input exclusions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub model_id: String,
    pub time_point: TimePointFilter,
    pub constructs: Vec<Construct>,
    pub n_responses: usize,
    pub skipped_input_lines: usize,
    pub n_records: usize,
}

/// One evaluation table with the run settings it was computed under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePart<T> {
    pub model_id: String,
    pub time_point: TimePointFilter,
    pub constructs: Vec<Construct>,
    pub table: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Correlations,
    Reliability,
    Sensitivity,
    Distributions,
    Baseline,
}

impl Table {
    pub fn file_name(self) -> &'static str {
        match self {
            Table::Correlations => "correlations.json",
            Table::Reliability => "reliability.json",
            Table::Sensitivity => "sensitivity.json",
            Table::Distributions => "distributions.json",
            Table::Baseline => "baseline.json",
        }
    }

    fn command(self) -> &'static str {
        match self {
            Table::Correlations => "eval correlations",
            Table::Reliability => "eval reliability",
            Table::Sensitivity => "eval sensitivity",
            Table::Distributions => "eval distributions",
            Table::Baseline => "eval baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EmbedSummary {
    pub texts: usize,
    pub cached_before: usize,
    pub cached_after: usize,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub filter: TimePointFilter,
    pub constructs: Vec<Construct>,
    pub out_dir: PathBuf,
    service_url: Option<String>,
    cache_only: bool,
    lenient: bool,
    segmenter: Segmenter,
}

impl Pipeline {
    pub fn new(mut config: RunConfig, overrides: Overrides) -> Result<Self> {
        if let Some(out) = overrides.out_dir {
            config.paths.out_dir = out;
        }
        if let Some(tp) = overrides.time_point {
            config.time_point = tp;
        }
        if let Some(seed) = overrides.seed {
            config.seed = Some(seed);
        }
        if overrides.service_url.is_some() {
            config.service_url = overrides.service_url;
        }
        config.validate()?;
        let constructs = match overrides.construct {
            Some(c) => vec![c],
            None => Construct::ALL.to_vec(),
        };
        Ok(Pipeline {
            filter: config.time_point,
            out_dir: config.paths.out_dir.clone(),
            service_url: config.service_url.clone(),
            segmenter: Segmenter::with_abbreviations(config.abbreviations.iter().cloned()),
            cache_only: overrides.cache_only,
            lenient: overrides.lenient,
            constructs,
            config,
        })
    }

    pub fn from_config_file(path: &Path, overrides: Overrides) -> Result<Self> {
        Pipeline::new(RunConfig::load(path)?, overrides)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn eval_path(&self, table: Table) -> PathBuf {
        self.out_dir.join("eval").join(table.file_name())
    }

    pub fn scores_path(&self) -> PathBuf {
        self.out("scores.csv")
    }

    pub fn report_path(&self) -> PathBuf {
        self.out("report.json")
    }

    fn scales(&self) -> Vec<Scale> {
        self.constructs.iter().flat_map(|c| c.scales()).collect()
    }

    /// Scale reliabilities for the selected constructs; fails naming every
    /// missing scale.
    pub fn reliabilities(&self) -> Result<std::collections::BTreeMap<Scale, f64>> {
        self.config.require_reliabilities(&self.scales())
    }

    /// A provider over the on-disk cache, backed by the embedding service
    /// unless running cache-only or no service URL is configured.
    pub fn provider(&self) -> Result<CachedProvider> {
        let cache = Arc::new(EmbeddingCache::open(&self.config.paths.cache_dir)?);
        match (&self.service_url, self.cache_only) {
            (Some(url), false) => {
                let service = HttpService::new(url, Duration::from_secs(self.config.request_timeout_secs));
                CachedProvider::with_service(
                    self.config.model_id.clone(),
                    cache,
                    Box::new(service),
                    self.config.provider,
                )
            }
            _ => Ok(CachedProvider::cache_only(self.config.model_id.clone(), cache)),
        }
    }

    pub fn anchors(&self) -> Result<Vec<AnchorSet>> {
        match &self.config.paths.anchors {
            Some(p) => datastore::load_anchors(p),
            None => Ok(default_anchor_sets()),
        }
    }

    /// Responses for the selected constructs and time points.
    pub fn responses(&self) -> Result<Loaded<RawResponse>> {
        let mut loaded = datastore::load_responses(&self.config.paths.responses, self.lenient)?;
        loaded
            .records
            .retain(|r| self.constructs.contains(&r.construct) && self.filter.admits(r.time_point));
        Ok(loaded)
    }

    pub fn segment(&self, responses: &[RawResponse]) -> Result<Vec<SegmentedResponse>> {
        responses
            .iter()
            .map(|r| {
                self.segmenter.segment(r).map_err(|e| {
                    Error::InvalidInput(format!(
                        "{}/t{}/{}/{}: {e}",
                        r.participant_id, r.time_point, r.construct, r.format
                    ))
                })
            })
            .collect()
    }

    /// Clinical records, checked to cover every response.
    pub fn clinical(&self, responses: &[RawResponse]) -> Result<Vec<ClinicalRecord>> {
        let clinical = datastore::load_clinical(&self.config.paths.clinical)?;
        datastore::check_references(responses, &clinical, &self.config.paths.responses)?;
        Ok(clinical)
    }

    fn anchor_vectors(
        &self,
        anchors: &[AnchorSet],
        provider: &dyn EmbeddingProvider,
    ) -> Result<HashMap<String, Vec<f32>>> {
        let texts: Vec<&str> = anchors
            .iter()
            .flat_map(|a| a.texts())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let vectors = provider.embed_texts(&texts)?;
        Ok(texts.into_iter().map(String::from).zip(vectors).collect())
    }

    pub fn build_axes(&self) -> Result<AxisRegistry> {
        let anchors = self.anchors()?;
        let provider = self.provider()?;
        let vectors = self.anchor_vectors(&anchors, &provider)?;
        let mut registry = AxisRegistry::new();
        for set in &anchors {
            registry.insert(build_axis(set, &self.config.model_id, &vectors)?)?;
        }
        registry.save(&self.out("axes.json"))?;
        Ok(registry)
    }

    pub fn load_axes(&self) -> Result<AxisRegistry> {
        let path = self.out("axes.json");
        if !path.exists() {
            return Err(missing_step(&path, "axes build"));
        }
        let registry = AxisRegistry::load(&path)?;
        if let Some(model) = registry.model_id() {
            if model != self.config.model_id {
                return Err(Error::ModelMismatch {
                    expected: self.config.model_id.clone(),
                    found: model.to_string(),
                });
            }
        }
        Ok(registry)
    }

    fn selected_axes<'a>(&self, registry: &'a AxisRegistry) -> Vec<&'a SemanticAxis> {
        registry
            .iter()
            .filter(|a| self.constructs.contains(&a.construct))
            .collect()
    }

    /// Two-component PCA of every anchor embedding, labelled `axis:pole:text`.
    pub fn anchor_pca(&self) -> Result<PcaLayout> {
        let anchors = self.anchors()?;
        let provider = self.provider()?;
        let vectors = self.anchor_vectors(&anchors, &provider)?;
        let mut labelled = Vec::new();
        for set in &anchors {
            for (pole, texts) in [("positive", &set.positive), ("negative", &set.negative)] {
                for t in texts {
                    let v = vectors[t].iter().map(|&x| f64::from(x)).collect();
                    labelled.push((format!("{}\t{pole}\t{t}", set.axis_name), v));
                }
            }
        }
        let layout = pca_layout(&labelled, 2)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["axis", "pole", "text", "pc1", "pc2"])?;
        for (label, point) in &layout.points {
            let mut fields: Vec<String> = label.split('\t').map(String::from).collect();
            fields.extend(point.iter().map(|v| format_sig9(*v)));
            w.write_record(&fields)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        datastore::write_atomic(&self.out("plots/anchor_pca.csv"), &bytes)?;
        datastore::write_json(
            &self.out("plots/anchor_pca_variance.json"),
            &layout.explained_variance_ratio,
        )?;
        Ok(layout)
    }

    /// Embeds every text later steps need, filling the cache.
    pub fn embed(&self) -> Result<EmbedSummary> {
        let anchors = self.anchors()?;
        let responses = self.segment(&self.responses()?.records)?;
        let mut texts: BTreeSet<String> = anchors.iter().flat_map(|a| a.texts()).map(String::from).collect();
        for r in &responses {
            texts.extend(texts_for(r).into_iter().map(String::from));
            if r.k() >= 2 {
                let (a, b) = odd_even_split(&r.units)?;
                texts.insert(join_units(&a, r.source.format));
                texts.insert(join_units(&b, r.source.format));
            }
        }
        let provider = self.provider()?;
        let all: Vec<&str> = texts.iter().map(String::as_str).collect();
        let cached = |p: &CachedProvider| {
            all.iter()
                .filter(|t| p.cache().contains(t, &self.config.model_id))
                .count()
        };
        let cached_before = cached(&provider);
        provider.embed_texts(&all)?;
        Ok(EmbedSummary {
            texts: all.len(),
            cached_before,
            cached_after: cached(&provider),
        })
    }

    pub fn score(&self) -> Result<Vec<ScoreRecord>> {
        let registry = self.load_axes()?;
        let loaded = self.responses()?;
        let responses = self.segment(&loaded.records)?;
        let provider = self.provider()?;
        let records = score_all(&responses, &self.selected_axes(&registry), &provider)?;
        datastore::write_scores(&records, &self.scores_path())?;
        datastore::write_json(
            &self.out("score_summary.json"),
            &ScoreSummary {
                model_id: self.config.model_id.clone(),
                time_point: self.filter,
                constructs: self.constructs.clone(),
                n_responses: responses.len(),
                skipped_input_lines: loaded.skipped.len(),
                n_records: records.len(),
            },
        )?;
        Ok(records)
    }

    /// Scores from a previous `score` run, restricted to this run's
    /// constructs and time points.
    pub fn load_scores(&self) -> Result<Vec<ScoreRecord>> {
        let path = self.scores_path();
        if !path.exists() {
            return Err(missing_step(&path, "score"));
        }
        let summary: ScoreSummary = datastore::read_json(&self.out("score_summary.json"))?;
        if summary.model_id != self.config.model_id {
            return Err(Error::ModelMismatch {
                expected: self.config.model_id.clone(),
                found: summary.model_id,
            });
        }
        let mut scores = datastore::load_scores(&path)?;
        scores.retain(|s| self.constructs.contains(&s.construct) && self.filter.admits(s.time_point));
        Ok(scores)
    }

    fn write_part<T: Serialize>(&self, table: Table, value: &T) -> Result<()> {
        datastore::write_json(
            &self.eval_path(table),
            &TablePart {
                model_id: self.config.model_id.clone(),
                time_point: self.filter,
                constructs: self.constructs.clone(),
                table: value,
            },
        )
    }

    fn read_part<T: DeserializeOwned>(&self, table: Table) -> Result<T> {
        let path = self.eval_path(table);
        if !path.exists() {
            return Err(missing_step(&path, table.command()));
        }
        let part: TablePart<T> = datastore::read_json(&path)?;
        if part.model_id != self.config.model_id || part.time_point != self.filter || part.constructs != self.constructs
        {
            return Err(Error::InvalidConfig(format!(
                "{} was computed for model {}, time points {}, constructs {:?}; rerun `{}`",
                path.display(),
                part.model_id,
                part.time_point,
                part.constructs,
                table.command()
            )));
        }
        Ok(part.table)
    }

    fn correlation_tables(&self, scores: &[ScoreRecord], clinical: &[ClinicalRecord]) -> Result<Vec<CorrelationTable>> {
        let reliabilities = self.reliabilities()?;
        self.constructs
            .iter()
            .map(|&c| evaluation::correlation_table(scores, clinical, &reliabilities, c, self.filter))
            .collect()
    }

    fn eval_inputs(&self) -> Result<(Vec<RawResponse>, Vec<ScoreRecord>, Vec<ClinicalRecord>)> {
        let responses = self.responses()?.records;
        let scores = self.load_scores()?;
        let clinical = self.clinical(&responses)?;
        Ok((responses, scores, clinical))
    }

    pub fn eval_correlations(&self) -> Result<Vec<CorrelationTable>> {
        self.reliabilities()?;
        let (_, scores, clinical) = self.eval_inputs()?;
        let tables = self.correlation_tables(&scores, &clinical)?;
        self.write_part(Table::Correlations, &tables)?;
        Ok(tables)
    }

    pub fn eval_reliability(&self) -> Result<ReliabilityTable> {
        let registry = self.load_axes()?;
        let responses = self.segment(&self.responses()?.records)?;
        let provider = self.provider()?;
        let table = evaluation::reliability_table(&responses, &self.selected_axes(&registry), &provider, self.filter)?;
        self.write_part(Table::Reliability, &table)?;
        Ok(table)
    }

    pub fn eval_sensitivity(&self) -> Result<Vec<SensitivityTable>> {
        let reliabilities = self.reliabilities()?;
        let projection: ReliabilityTable = self.read_part(Table::Reliability)?;
        let (_, scores, clinical) = self.eval_inputs()?;
        let correlations = self.correlation_tables(&scores, &clinical)?;
        let tables = evaluation::sensitivity_analysis(&correlations, &reliabilities, &projection)?;
        self.write_part(Table::Sensitivity, &tables)?;
        Ok(tables)
    }

    pub fn eval_distributions(&self) -> Result<Vec<DistributionTable>> {
        let (_, scores, clinical) = self.eval_inputs()?;
        let tables = self
            .constructs
            .iter()
            .map(|&c| evaluation::distribution_similarity(&scores, &clinical, c, self.filter))
            .collect::<Result<Vec<_>>>()?;
        self.write_part(Table::Distributions, &tables)?;
        Ok(tables)
    }

    pub fn eval_baseline(&self) -> Result<DeltaTable> {
        let reliabilities = self.reliabilities()?;
        let (responses, scores, clinical) = self.eval_inputs()?;
        let lexicon = SentimentLexicon::reference();
        let sentiment = evaluation::sentiment_scores(&responses, &lexicon);
        write_sentiment(&sentiment, &self.out("sentiment.csv"))?;
        let correlations = self.correlation_tables(&scores, &clinical)?;
        let table = evaluation::baseline_delta(&correlations, &sentiment, &clinical, &reliabilities, self.filter)?;
        self.write_part(Table::Baseline, &table)?;
        Ok(table)
    }

    /// Assembles report.json, report.md and the plot tables from the stored
    /// evaluation outputs.
    pub fn render_report(&self) -> Result<EvaluationReport> {
        let correlations: Vec<CorrelationTable> = self.read_part(Table::Correlations)?;
        let reliability: ReliabilityTable = self.read_part(Table::Reliability)?;
        let sensitivity: Vec<SensitivityTable> = self.read_part(Table::Sensitivity)?;
        let distributions: Vec<DistributionTable> = self.read_part(Table::Distributions)?;
        let baseline: DeltaTable = self.read_part(Table::Baseline)?;
        let summary: ScoreSummary = datastore::read_json(&self.out("score_summary.json"))?;
        let responses = self.responses()?.records;

        let observations: BTreeSet<(&str, u8)> = responses
            .iter()
            .map(|r| (r.participant_id.as_str(), r.time_point))
            .collect();
        let participants: BTreeSet<&str> = observations.iter().map(|(p, _)| *p).collect();
        let lexicon = SentimentLexicon::reference();
        let scales: BTreeSet<Scale> = self.scales().into_iter().collect();
        let metadata = ReportMetadata {
            generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.config.seed,
            model_id: self.config.model_id.clone(),
            time_point: self.filter,
            constructs: self.constructs.clone(),
            axes: reliability.axes.clone(),
            reliabilities: self
                .config
                .reliabilities
                .iter()
                .filter(|(s, _)| scales.contains(s))
                .map(|(s, r)| (*s, r.clone()))
                .collect(),
            provider: self.config.provider,
            n_responses: responses.len(),
            n_participants: participants.len(),
            n_observations: observations.len(),
            non_independent_observations: observations.len() > participants.len(),
            exclusions: Exclusions {
                skipped_input_lines: summary.skipped_input_lines,
                ..Exclusions::default()
            },
            clamped_cells: Vec::new(),
            sentiment_lexicon: LexiconInfo {
                id: lexicon.id.clone(),
                checksum: lexicon.checksum.clone(),
            },
        };
        let report = EvaluationReport::assemble(
            metadata,
            correlations,
            reliability,
            sensitivity,
            distributions,
            baseline,
        );
        write_report(&report, &self.out_dir)?;
        Ok(report)
    }

    /// Every step from axis construction to the rendered report.
    pub fn run_all(&self) -> Result<EvaluationReport> {
        self.reliabilities()?;
        self.build_axes()?;
        self.score()?;
        self.eval_correlations()?;
        self.eval_reliability()?;
        self.eval_sensitivity()?;
        self.eval_distributions()?;
        self.eval_baseline()?;
        self.render_report()
    }
}

fn missing_step(path: &Path, command: &str) -> Error {
    Error::InvalidInput(format!("{} not found; run `semproj {command}` first", path.display()))
}

fn write_sentiment(scores: &[evaluation::SentimentScore], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "participant_id",
        "time_point",
        "construct",
        "format",
        "compound",
        "distress",
    ])?;
    for s in scores {
        w.write_record([
            s.participant_id.clone(),
            s.time_point.to_string(),
            s.construct.to_string(),
            s.format.to_string(),
            format_sig9(s.compound),
            format_sig9(s.distress),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    datastore::write_atomic(path, &bytes)
}

/// Writes report.json, report.md and `plots/*.csv` under `dir`.
pub fn write_report(report: &EvaluationReport, dir: &Path) -> Result<()> {
    datastore::write_json(&dir.join("report.json"), report)?;
    datastore::write_atomic(&dir.join("report.md"), evaluation::render_markdown(report).as_bytes())?;
    for (name, contents) in evaluation::plot_tables(report)? {
        datastore::write_atomic(&dir.join("plots").join(name), contents.as_bytes())?;
    }
    Ok(())
}
