//! Synthetic datasets with known ground truth.
//!
//! Each construct gets a random unit direction `h`. Every generated text is
//! embedded as `-severity * h + e` with `e` orthogonal to `h`, so its
//! projection onto an axis parallel to `h` is exactly `-severity` (up to f32
//! rounding). Anchor vectors are placed so that every axis of a construct is
//! parallel to `h`.
//!
//! Severity model for a participant with latent trait `t`:
//!
//! * unit `i`: `g_i * t + N(0, unit_noise_sd^2)`, with `g_i = 1` unless the
//!   free-text signal is concentrated in one unit (`g = k` there, 0
//!   elsewhere);
//! * a text joining `j` of the `k` units (a half or the whole response):
//!   `mean(g) * t + N(0, text_noise_sd^2 * (k / 2) / j)`, so
//!   `text_noise_sd` is the noise of a half-length text;
//! * clinical totals: `c = r * z + sqrt(1 - r^2) * u` with `z` the
//!   standardized trait, observed per scale as `c + N(0, clinical_noise_sd^2)`
//!   and mapped to the instrument range by `round(mid + range / 8 * value)`.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::axes::{default_anchor_sets, AnchorSet};
use crate::datastore::{self, ClinicalRecord, RunConfig, ScaleReliability, Totals};
use crate::embedding::{EmbeddingCache, MemoryProvider};
use crate::error::{Error, Result};
use crate::psychometrics::spearman_brown;
use crate::segmentation::{join_units, odd_even_split, RawResponse, Segmenter};
use crate::types::{Construct, ResponseFormat, Scale};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormatSpec {
    pub units: usize,
    pub unit_noise_sd: f64,
    pub text_noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_participants: usize,
    pub time_points: u8,
    pub dim: usize,
    pub model_id: String,
    pub latent_mean: f64,
    pub latent_sd: f64,
    pub formats: BTreeMap<ResponseFormat, FormatSpec>,
    pub latent_clinical_r: f64,
    pub clinical_noise_sd: f64,
    /// Put all free-text signal into one randomly chosen unit.
    pub concentrated_text: bool,
    pub orthogonal_sd: f64,
    pub anchor_separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let spec = |units, text_noise_sd| FormatSpec {
            units,
            unit_noise_sd: 1.0,
            text_noise_sd,
        };
        SynthConfig {
            seed: 7,
            n_participants: 300,
            time_points: 1,
            dim: 32,
            model_id: "synthetic-v1".into(),
            latent_mean: 0.0,
            latent_sd: 1.0,
            formats: BTreeMap::from([
                (ResponseFormat::SelectWords, spec(4, 0.3)),
                (ResponseFormat::WriteWords, spec(4, 0.8)),
                (ResponseFormat::WritePhrases, spec(4, 1.3)),
                (ResponseFormat::WriteText, spec(6, 2.0)),
            ]),
            latent_clinical_r: 0.8,
            clinical_noise_sd: (1.0f64 / 0.81 - 1.0).sqrt(),
            concentrated_text: false,
            orthogonal_sd: 1.0,
            anchor_separation: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_participants < 3 {
            return bad("n_participants must be at least 3".into());
        }
        if !matches!(self.time_points, 1 | 2) {
            return bad("time_points must be 1 or 2".into());
        }
        if self.dim < 2 {
            return bad("dim must be at least 2".into());
        }
        if self.model_id.trim().is_empty() {
            return bad("model_id is empty".into());
        }
        let sds = [
            ("latent_sd", self.latent_sd),
            ("clinical_noise_sd", self.clinical_noise_sd),
            ("orthogonal_sd", self.orthogonal_sd),
        ];
        for (name, v) in sds {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0"));
            }
        }
        if self.latent_sd.is_nan() || self.latent_sd <= 0.0 {
            return bad("latent_sd must be positive".into());
        }
        if !self.latent_mean.is_finite() {
            return bad("latent_mean must be finite".into());
        }
        if !(-1.0..=1.0).contains(&self.latent_clinical_r) {
            return bad("latent_clinical_r must be in [-1, 1]".into());
        }
        if !(self.anchor_separation > 0.0 && self.anchor_separation.is_finite()) {
            return bad("anchor_separation must be positive".into());
        }
        if self.formats.is_empty() {
            return bad("no formats configured".into());
        }
        for (f, s) in &self.formats {
            if s.units == 0 {
                return bad(format!("{f}: units must be at least 1"));
            }
            if !(s.unit_noise_sd >= 0.0 && s.text_noise_sd >= 0.0)
                || !s.unit_noise_sd.is_finite()
                || !s.text_noise_sd.is_finite()
            {
                return bad(format!("{f}: noise sds must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// Reliability of a clinical total before discretization.
    pub fn scale_reliability(&self) -> f64 {
        1.0 / (1.0 + self.clinical_noise_sd.powi(2))
    }
}

/// Closed-form targets for one format under the diffuse-signal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatTheory {
    pub format: ResponseFormat,
    pub whole_reliability: f64,
    pub half_correlation: f64,
    pub spearman_brown: Option<f64>,
    pub unit_mean_reliability: f64,
    /// Expected raw correlation of whole-text severity with an observed
    /// clinical total (before discretization).
    pub whole_clinical_r: f64,
    pub unit_mean_clinical_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theory {
    pub scale_reliability: f64,
    pub latent_clinical_r: f64,
    pub formats: Vec<FormatTheory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub participant_id: String,
    pub time_point: u8,
    pub construct: Construct,
    pub latent: f64,
    pub clinical_latent: f64,
    /// Observed clinical values before rounding and clamping, by scale.
    pub clinical_observed: BTreeMap<Scale, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLedger {
    pub config: SynthConfig,
    pub theory: Theory,
    /// Set when the free-text signal is concentrated, which the closed forms
    /// do not cover.
    pub theory_excludes_write_text: bool,
    pub entries: Vec<LedgerEntry>,
}

pub fn theory(config: &SynthConfig) -> Theory {
    let var_t = config.latent_sd.powi(2);
    let r_scale = config.scale_reliability();
    let rho = config.latent_clinical_r;
    let formats = config
        .formats
        .iter()
        .map(|(&format, s)| {
            let k = s.units as f64;
            let whole_noise = if s.units == 1 {
                s.unit_noise_sd.powi(2)
            } else {
                s.text_noise_sd.powi(2) / 2.0
            };
            let whole = var_t / (var_t + whole_noise);
            // equal halves of k/2 units; odd k gives slightly unequal halves
            let half = var_t / (var_t + s.text_noise_sd.powi(2));
            let unit_mean = var_t / (var_t + s.unit_noise_sd.powi(2) / k);
            FormatTheory {
                format,
                whole_reliability: whole,
                half_correlation: half,
                spearman_brown: spearman_brown(half),
                unit_mean_reliability: unit_mean,
                whole_clinical_r: rho * (whole * r_scale).sqrt(),
                unit_mean_clinical_r: rho * (unit_mean * r_scale).sqrt(),
            }
        })
        .collect();
    Theory {
        scale_reliability: r_scale,
        latent_clinical_r: rho,
        formats,
    }
}

const AFFECT_TIERS: [&[&str]; 5] = [
    &["happy", "great", "wonderful", "cheerful", "hopeful", "joyful"],
    &["okay", "calm", "fine", "relaxed"],
    &["ordinary", "usual", "routine", "plain", "quiet"],
    &["sad", "worried", "tense", "lonely", "upset", "nervous"],
    &["hopeless", "miserable", "depressed", "devastated"],
];

fn affect_word(rng: &mut ChaCha8Rng, standardized: f64) -> &'static str {
    let tier = match standardized {
        s if s > 1.0 => 4,
        s if s > 0.35 => 3,
        s if s >= -0.35 => 2,
        s if s >= -1.0 => 1,
        _ => 0,
    };
    AFFECT_TIERS[tier].choose(rng).expect("non-empty tier")
}

fn format_code(f: ResponseFormat) -> char {
    match f {
        ResponseFormat::SelectWords => 's',
        ResponseFormat::WriteWords => 'w',
        ResponseFormat::WritePhrases => 'p',
        ResponseFormat::WriteText => 't',
    }
}

fn unit_text(format: ResponseFormat, word: &str, id: &str) -> String {
    match format {
        ResponseFormat::SelectWords | ResponseFormat::WriteWords => format!("{word} {id}"),
        ResponseFormat::WritePhrases => format!("mostly {word} {id}"),
        ResponseFormat::WriteText => format!("Today I felt {word} {id}."),
    }
}

/// Everything a generator run produces.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub model_id: String,
    pub responses: Vec<RawResponse>,
    pub clinical: Vec<ClinicalRecord>,
    pub anchors: Vec<AnchorSet>,
    /// Text and vector pairs, sorted by text.
    pub vectors: Vec<(String, Vec<f32>)>,
    pub ledger: SynthLedger,
}

struct Space {
    directions: BTreeMap<Construct, Vec<f64>>,
    dim: usize,
    orthogonal_sd: f64,
}

impl Space {
    fn orthogonal(&self, rng: &mut ChaCha8Rng, h: &[f64], sd: f64) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.dim)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let dot: f64 = z.iter().zip(h).map(|(a, b)| a * b).sum();
        for (zi, hi) in z.iter_mut().zip(h) {
            *zi -= dot * hi;
        }
        z
    }

    fn text_vector(&self, rng: &mut ChaCha8Rng, construct: Construct, severity: f64) -> Vec<f32> {
        let h = &self.directions[&construct];
        let e = self.orthogonal(rng, h, self.orthogonal_sd);
        h.iter().zip(&e).map(|(hi, ei)| (-severity * hi + ei) as f32).collect()
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sd).expect("finite sd").sample(rng)
    }
}

fn discretize(scale: Scale, value: f64) -> u32 {
    let (lo, hi) = scale.range();
    let (lo, hi) = (f64::from(lo), f64::from(hi));
    let mid = (lo + hi) / 2.0;
    (mid + (hi - lo) / 8.0 * value).round().clamp(lo, hi) as u32
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let space = Space {
        directions: Construct::ALL
            .iter()
            .map(|&c| (c, unit_direction(&mut rng, config.dim)))
            .collect(),
        dim: config.dim,
        orthogonal_sd: config.orthogonal_sd,
    };
    let mut vectors: HashMap<String, Vec<f32>> = HashMap::new();

    let anchors = default_anchor_sets();
    for set in &anchors {
        let h = &space.directions[&set.construct];
        let alpha = config.anchor_separation;
        let pos: Vec<Vec<f64>> = set
            .positive
            .iter()
            .map(|_| space.orthogonal(&mut rng, h, config.orthogonal_sd))
            .collect();
        let mut neg: Vec<Vec<f64>> = set
            .negative
            .iter()
            .map(|_| space.orthogonal(&mut rng, h, config.orthogonal_sd))
            .collect();
        // Shift the negative pole so both poles share one orthogonal mean.
        let mean = |vs: &[Vec<f64>], d: usize| vs.iter().map(|v| v[d]).sum::<f64>() / vs.len() as f64;
        for d in 0..config.dim {
            let shift = mean(&pos, d) - mean(&neg, d);
            for v in &mut neg {
                v[d] += shift;
            }
        }
        for (text, e) in set.positive.iter().zip(&pos) {
            let v = h.iter().zip(e).map(|(hi, ei)| (alpha * hi + ei) as f32).collect();
            if vectors.insert(text.clone(), v).is_some() {
                return Err(Error::InvalidConfig(format!("anchor {text:?} used twice")));
            }
        }
        for (text, e) in set.negative.iter().zip(&neg) {
            let v = h.iter().zip(e).map(|(hi, ei)| (-alpha * hi + ei) as f32).collect();
            if vectors.insert(text.clone(), v).is_some() {
                return Err(Error::InvalidConfig(format!("anchor {text:?} used twice")));
            }
        }
    }

    let segmenter = Segmenter::default();
    let rho = config.latent_clinical_r;
    let mut responses = Vec::new();
    let mut clinical = Vec::new();
    let mut entries = Vec::new();
    for p in 0..config.n_participants {
        let pid = format!("p{:04}", p + 1);
        for tp in 1..=config.time_points {
            let mut observed: BTreeMap<Scale, f64> = BTreeMap::new();
            for &construct in Construct::ALL {
                let t = config.latent_mean + normal(&mut rng, config.latent_sd);
                let z = (t - config.latent_mean) / config.latent_sd;
                let c_latent = rho * z + (1.0 - rho * rho).sqrt() * normal(&mut rng, 1.0);
                let mut obs = BTreeMap::new();
                for scale in construct.scales() {
                    let v = c_latent + normal(&mut rng, config.clinical_noise_sd);
                    obs.insert(scale, v);
                    observed.insert(scale, v);
                }
                entries.push(LedgerEntry {
                    participant_id: pid.clone(),
                    time_point: tp,
                    construct,
                    latent: t,
                    clinical_latent: c_latent,
                    clinical_observed: obs,
                });

                let cchar = construct.short().chars().next().unwrap().to_ascii_lowercase();
                for (&format, spec) in &config.formats {
                    let k = spec.units;
                    let gains: Vec<f64> = if config.concentrated_text && format == ResponseFormat::WriteText {
                        let star = rng.random_range(0..k);
                        (0..k).map(|i| if i == star { k as f64 } else { 0.0 }).collect()
                    } else {
                        vec![1.0; k]
                    };
                    let unit_sev: Vec<f64> = gains
                        .iter()
                        .map(|g| g * t + normal(&mut rng, spec.unit_noise_sd))
                        .collect();
                    let units: Vec<String> = unit_sev
                        .iter()
                        .enumerate()
                        .map(|(i, s)| {
                            let word = affect_word(&mut rng, (s - config.latent_mean) / config.latent_sd);
                            let id = format!("x{pid}t{tp}{cchar}{}u{}", format_code(format), i + 1);
                            unit_text(format, word, &id)
                        })
                        .collect();
                    let text = join_units(&units, format);
                    if segmenter.segment_text(format, &text)? != units {
                        return Err(Error::InvalidConfig(format!(
                            "generated {format} text does not segment back into its units"
                        )));
                    }
                    let joined = |rng: &mut ChaCha8Rng, idx: &[usize]| {
                        let g = idx.iter().map(|&i| gains[i]).sum::<f64>() / idx.len() as f64;
                        let var = spec.text_noise_sd.powi(2) * (k as f64 / 2.0) / idx.len() as f64;
                        g * t + normal(rng, var.sqrt())
                    };
                    let mut put = |rng: &mut ChaCha8Rng, text: String, sev: f64| {
                        if let Entry::Vacant(slot) = vectors.entry(text) {
                            slot.insert(space.text_vector(rng, construct, sev));
                        }
                    };
                    if format.is_aggregated() {
                        for (u, &s) in units.iter().zip(&unit_sev) {
                            put(&mut rng, u.clone(), s);
                        }
                    }
                    if k == 1 {
                        put(&mut rng, text.clone(), unit_sev[0]);
                    } else {
                        let idx: Vec<usize> = (0..k).collect();
                        let (a, b) = odd_even_split(&idx)?;
                        for half in [a, b] {
                            let half_units: Vec<&String> = half.iter().map(|&i| &units[i]).collect();
                            let sev = joined(&mut rng, &half);
                            put(&mut rng, join_units(&half_units, format), sev);
                        }
                        let sev = joined(&mut rng, &idx);
                        put(&mut rng, text.clone(), sev);
                    }
                    responses.push(RawResponse {
                        participant_id: pid.clone(),
                        time_point: tp,
                        construct,
                        format,
                        text,
                    });
                }
            }
            clinical.push(ClinicalRecord {
                participant_id: pid.clone(),
                time_point: tp,
                totals: Totals {
                    phq9: discretize(Scale::Phq9, observed[&Scale::Phq9]),
                    cesd: discretize(Scale::Cesd, observed[&Scale::Cesd]),
                    gad7: discretize(Scale::Gad7, observed[&Scale::Gad7]),
                    pswq: discretize(Scale::Pswq, observed[&Scale::Pswq]),
                },
            });
        }
    }

    let mut vectors: Vec<(String, Vec<f32>)> = vectors.into_iter().collect();
    vectors.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(SynthDataset {
        model_id: config.model_id.clone(),
        responses,
        clinical,
        anchors,
        vectors,
        ledger: SynthLedger {
            config: config.clone(),
            theory: theory(config),
            theory_excludes_write_text: config.concentrated_text,
            entries,
        },
    })
}

impl SynthDataset {
    pub fn populate(&self, cache: &EmbeddingCache) -> Result<()> {
        let items: Vec<(&str, &[f32])> = self.vectors.iter().map(|(t, v)| (t.as_str(), v.as_slice())).collect();
        cache.put_many(&self.model_id, &items)
    }

    pub fn in_memory_cache(&self) -> Result<Arc<EmbeddingCache>> {
        let cache = EmbeddingCache::in_memory();
        self.populate(&cache)?;
        Ok(Arc::new(cache))
    }

    pub fn memory_provider(&self) -> MemoryProvider {
        let mut p = MemoryProvider::new(self.model_id.clone());
        for (t, v) in &self.vectors {
            p.insert(t, v.clone());
        }
        p
    }

    /// A run config for this dataset, with the generator's scale reliability
    /// for every scale.
    pub fn run_config(&self) -> RunConfig {
        let mut config = RunConfig::new(self.model_id.clone());
        let r = self.ledger.config.scale_reliability();
        for &scale in Scale::ALL {
            config.reliabilities.insert(
                scale,
                ScaleReliability {
                    value: r,
                    source: Some("synthetic generator".into()),
                },
            );
        }
        config.seed = Some(self.ledger.config.seed);
        config.paths.anchors = Some("anchors.json".into());
        config
    }

    /// Writes the dataset in the regular input formats plus `ledger.json`,
    /// with the vectors in `dir/cache`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        datastore::write_responses(&self.responses, &dir.join("responses.jsonl"))?;
        datastore::write_clinical(&self.clinical, &dir.join("clinical.csv"))?;
        datastore::write_json(&dir.join("anchors.json"), &self.anchors)?;
        datastore::write_json(&dir.join("ledger.json"), &self.ledger)?;
        datastore::write_json(&dir.join("config.json"), &self.run_config())?;
        let cache_dir = dir.join("cache");
        if cache_dir.exists() {
            std::fs::remove_dir_all(&cache_dir).map_err(|e| Error::io(&cache_dir, e))?;
        }
        self.populate(&EmbeddingCache::open(&cache_dir)?)
    }
}
