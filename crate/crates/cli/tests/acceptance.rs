//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p semproj-cli --test acceptance`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use semproj_core::axes::{build_axis, SemanticAxis};
use semproj_core::embedding::CachedProvider;
use semproj_core::evaluation::{self, Cell, CorrelationTable, ReliabilityTable};
use semproj_core::projection::{maxabs_score, mean_score, project, score_all};
use semproj_core::psychometrics::{
    full_disattenuate, partial_disattenuate, pearson, spearman_brown, wasserstein_1d, wasserstein_z,
};
use semproj_core::segmentation::Segmenter;
use semproj_core::synthetic::{generate, FormatSpec, SynthConfig};
use semproj_core::{Construct, EmbeddingProvider, ReportRow, ResponseFormat, Scale, SentimentLexicon, TimePointFilter};
use statrs::distribution::{ContinuousCDF, StudentsT};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Option<Duration>,
}

fn timed(name: &'static str, limit: Option<Duration>, f: impl FnOnce() -> Result<(bool, String), String>) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    Outcome {
        name,
        pass: pass && in_time,
        detail: if in_time {
            detail
        } else {
            format!("{detail}; over time limit {:?}", limit.unwrap())
        },
        elapsed,
        limit,
    }
}

// ---------------------------------------------------------------------------
// Double-double arithmetic for the formula oracles (about 32 significant
// digits).

#[derive(Clone, Copy, Debug)]
struct Dd(f64, f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    fn from(x: f64) -> Dd {
        Dd(x, 0.0)
    }

    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = two_sum(self.1, o.1);
        let s = two_sum(s.0, s.1 + t.0);
        two_sum(s.0, s.1 + t.1)
    }

    fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        two_sum(p, e + self.0 * o.1 + self.1 * o.0)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.0 / o.0;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.0 / o.0;
        Dd::from(q1).add(Dd::from(q2)).add(Dd::from(q3))
    }

    fn sqrt(self) -> Dd {
        if self.0 <= 0.0 {
            return Dd::from(0.0);
        }
        let x = Dd::from(self.0.sqrt());
        // one Newton step doubles the precision
        x.add(self.sub(x.mul(x)).div(x.mul(Dd::from(2.0))))
    }

    fn val(self) -> f64 {
        self.0 + self.1
    }
}

fn dd_sum(xs: impl Iterator<Item = Dd>) -> Dd {
    xs.fold(Dd::from(0.0), Dd::add)
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = Dd::from(x.len() as f64);
    let mx = dd_sum(x.iter().map(|&v| Dd::from(v))).div(n);
    let my = dd_sum(y.iter().map(|&v| Dd::from(v))).div(n);
    let dx: Vec<Dd> = x.iter().map(|&v| Dd::from(v).sub(mx)).collect();
    let dy: Vec<Dd> = y.iter().map(|&v| Dd::from(v).sub(my)).collect();
    let sxy = dd_sum(dx.iter().zip(&dy).map(|(a, b)| a.mul(*b)));
    let sxx = dd_sum(dx.iter().map(|a| a.mul(*a)));
    let syy = dd_sum(dy.iter().map(|a| a.mul(*a)));
    let r = sxy.div(sxx.mul(syy).sqrt());
    let df = Dd::from(x.len() as f64 - 2.0);
    let t = r.mul(df.div(Dd::from(1.0).sub(r.mul(r))).sqrt());
    (r.val(), t.val())
}

fn oracle_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid df");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

fn formula_oracles() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let (mut max_r, mut max_t, mut max_p, mut max_corr) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut sb_mismatch = 0;
    for _ in 0..1000 {
        let n = rng.random_range(3..=80);
        let slope: f64 = rng.random_range(-3.0..3.0);
        let noise: f64 = rng.random_range(0.05..3.0);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| slope * v + noise * rng.sample::<f64, _>(StandardNormal) + 4.0)
            .collect();
        let got = pearson(&x, &y).map_err(|e| e.to_string())?;
        let (r, t) = oracle_pearson(&x, &y);
        max_r = max_r.max((got.r - r).abs());
        max_t = max_t.max((got.t - t).abs());
        max_p = max_p.max((got.p - oracle_p(t, n as f64 - 2.0)).abs());

        let r_obs: f64 = rng.random_range(-1.0..1.0);
        let r_scale: f64 = rng.random_range(0.05..=1.0);
        let r_proj: f64 = rng.random_range(0.05..=1.0);
        let want_partial = Dd::from(r_obs).div(Dd::from(r_scale).sqrt()).val().clamp(-1.0, 1.0);
        let want_full = Dd::from(r_obs)
            .div(Dd::from(r_proj).mul(Dd::from(r_scale)).sqrt())
            .val()
            .clamp(-1.0, 1.0);
        let partial = partial_disattenuate(r_obs, r_scale).map_err(|e| e.to_string())?;
        let full = full_disattenuate(r_obs, Some(r_proj), r_scale).map_err(|e| e.to_string())?;
        max_corr = max_corr
            .max((partial.value - want_partial).abs())
            .max((full.value - want_full).abs());

        let r_half: f64 = rng.random_range(-1.0..=1.0);
        let want_sb = (r_half > 0.0).then(|| {
            Dd::from(2.0)
                .mul(Dd::from(r_half))
                .div(Dd::from(1.0).add(Dd::from(r_half)))
                .val()
        });
        match (spearman_brown(r_half), want_sb) {
            (Some(a), Some(b)) => max_corr = max_corr.max((a - b).abs()),
            (None, None) => {}
            _ => sb_mismatch += 1,
        }
    }
    let pass = max_r <= 1e-9 && max_t <= 1e-9 && max_p <= 1e-6 && max_corr <= 1e-9 && sb_mismatch == 0;
    Ok((
        pass,
        format!(
            "1000 inputs; max |dr| {max_r:.1e}, |dt| {max_t:.1e}, |dp| {max_p:.1e}, corrections/SB {max_corr:.1e}, SB definedness mismatches {sb_mismatch}"
        ),
    ))
}

// ---------------------------------------------------------------------------

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_axis(rng: &mut ChaCha8Rng, dim: usize) -> SemanticAxis {
    let mut vectors = HashMap::new();
    let mut texts = |prefix: &str, vectors: &mut HashMap<String, Vec<f32>>| -> Vec<String> {
        (0..3)
            .map(|i| {
                let t = format!("{prefix}{i}");
                vectors.insert(t.clone(), gaussian(rng, dim).iter().map(|&v| v as f32).collect());
                t
            })
            .collect()
    };
    let positive = texts("pos", &mut vectors);
    let negative = texts("neg", &mut vectors);
    let anchors = semproj_core::AnchorSet {
        axis_name: "AX".into(),
        construct: Construct::Depression,
        kind: semproj_core::AnchorKind::Word,
        positive,
        negative,
    };
    build_axis(&anchors, "m", &vectors).expect("random anchors give a proper axis")
}

fn projection_geometry() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let dims = [2usize, 8, 64];
    let tol = 1e-9;
    let mut worst = 0.0f64;
    let mut bound_violations = 0;
    let mut vectors_checked = 0;
    let mut idx = 0;
    while vectors_checked < 10_000 {
        let dim = dims[idx % dims.len()];
        idx += 1;
        let axis = random_axis(&mut rng, dim);
        let c: f64 = 10f64.powf(rng.random_range(-2.0..2.0));
        let scaled = SemanticAxis {
            direction: axis.direction.iter().map(|v| v * c).collect(),
            norm: axis.norm * c,
            ..axis.clone()
        };
        let negated = axis.negated();
        let unit: Vec<f64> = axis.direction.iter().map(|v| v / axis.norm).collect();
        let k = rng.random_range(1..=8);
        let mut scores = Vec::with_capacity(k);
        let mut neg_scores = Vec::with_capacity(k);
        for _ in 0..k {
            let x = gaussian(&mut rng, dim);
            let s = project(&x, &axis).map_err(|e| e.to_string())?;
            worst = worst.max((project(&x, &scaled).map_err(|e| e.to_string())? - s).abs());
            let u = gaussian(&mut rng, dim);
            let dot: f64 = u.iter().zip(&unit).map(|(a, b)| a * b).sum();
            let shifted: Vec<f64> = x
                .iter()
                .zip(&u)
                .zip(&unit)
                .map(|((xi, ui), hi)| xi + 3.0 * (ui - dot * hi))
                .collect();
            worst = worst.max((project(&shifted, &axis).map_err(|e| e.to_string())? - s).abs());
            let ns = project(&x, &negated).map_err(|e| e.to_string())?;
            worst = worst.max((ns + s).abs());
            scores.push(s);
            neg_scores.push(ns);
            vectors_checked += 1;
        }
        let mean = mean_score(&scores).map_err(|e| e.to_string())?;
        let maxabs = maxabs_score(&scores).map_err(|e| e.to_string())?;
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo - tol <= mean && mean <= hi + tol && maxabs.abs() >= mean.abs() - tol) {
            bound_violations += 1;
        }
        let neg_maxabs = maxabs_score(&neg_scores).map_err(|e| e.to_string())?;
        worst = worst.max((neg_maxabs.abs() - maxabs.abs()).abs());
    }
    Ok((
        worst <= tol && bound_violations == 0,
        format!(
            "{vectors_checked} vectors, dims {dims:?}; max invariance error {worst:.1e}, bound violations {bound_violations}"
        ),
    ))
}

// ---------------------------------------------------------------------------

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials).
fn hungarian(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let (mut p, mut way) = (vec![0usize; n + 1], vec![0usize; n + 1]);
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

/// Optimal transport cost between uniform empirical distributions: each
/// sample is split into equal atoms so the plan becomes a perfect matching.
fn transport_oracle(x: &[f64], y: &[f64]) -> f64 {
    let (n, m) = (x.len(), y.len());
    let xs: Vec<f64> = x.iter().flat_map(|&v| std::iter::repeat_n(v, m)).collect();
    let ys: Vec<f64> = y.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect();
    let cost: Vec<Vec<f64>> = xs.iter().map(|a| ys.iter().map(|b| (a - b).abs()).collect()).collect();
    hungarian(&cost) / (n * m) as f64
}

fn sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if rng.random_bool(0.3) {
        (0..n).map(|_| f64::from(rng.random_range(-3i32..=3))).collect()
    } else {
        (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
    }
}

fn wasserstein_oracle() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut worst_lp = 0.0f64;
    for _ in 0..200 {
        let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let (x, y) = (sample(&mut rng, n), sample(&mut rng, m));
        let got = wasserstein_1d(&x, &y).map_err(|e| e.to_string())?;
        worst_lp = worst_lp.max((got - transport_oracle(&x, &y)).abs());
    }
    let mut worst_sorted = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=64);
        let (mut x, mut y) = (sample(&mut rng, n), sample(&mut rng, n));
        let got = wasserstein_1d(&x, &y).map_err(|e| e.to_string())?;
        x.sort_by(f64::total_cmp);
        y.sort_by(f64::total_cmp);
        let want = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
        worst_sorted = worst_sorted.max((got - want).abs());
    }
    let mut worst_affine = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=40);
        let m = rng.random_range(2..=40);
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
        let base = wasserstein_z(&x, &y).map_err(|e| e.to_string())?;
        let (a, b): (f64, f64) = (10f64.powf(rng.random_range(-2.0..2.0)), rng.random_range(-50.0..50.0));
        let (c, d): (f64, f64) = (10f64.powf(rng.random_range(-2.0..2.0)), rng.random_range(-50.0..50.0));
        let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let yt: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        worst_affine = worst_affine.max((wasserstein_z(&xt, &yt).map_err(|e| e.to_string())? - base).abs());
    }
    Ok((
        worst_lp <= 1e-9 && worst_sorted <= 1e-9 && worst_affine <= 1e-9,
        format!(
            "200 pairs vs transport optimum: max error {worst_lp:.1e}; sorted form {worst_sorted:.1e}; WD_z under 100 affine maps {worst_affine:.1e}"
        ),
    ))
}

// ---------------------------------------------------------------------------

struct SynthEval {
    correlations: Vec<CorrelationTable>,
    reliability: Option<ReliabilityTable>,
    reliabilities: BTreeMap<Scale, f64>,
}

/// Generates a dataset and evaluates it in memory through a cache-only
/// provider over the generator's vectors.
fn synth_eval(config: &SynthConfig, with_reliability: bool) -> Result<SynthEval, String> {
    let run = || -> semproj_core::Result<SynthEval> {
        let ds = generate(config)?;
        let provider = CachedProvider::cache_only(ds.model_id.clone(), ds.in_memory_cache()?);
        let texts: Vec<&str> = ds.anchors.iter().flat_map(|a| a.texts()).collect();
        let vectors: HashMap<String, Vec<f32>> = texts
            .iter()
            .map(|t| t.to_string())
            .zip(provider.embed_texts(&texts)?)
            .collect();
        let axes = ds
            .anchors
            .iter()
            .map(|a| build_axis(a, &ds.model_id, &vectors))
            .collect::<semproj_core::Result<Vec<_>>>()?;
        let axis_refs: Vec<&SemanticAxis> = axes.iter().collect();
        let segmenter = Segmenter::default();
        let segmented = ds
            .responses
            .iter()
            .map(|r| segmenter.segment(r))
            .collect::<semproj_core::Result<Vec<_>>>()?;
        let scores = score_all(&segmented, &axis_refs, &provider)?;
        let reliabilities: BTreeMap<Scale, f64> = Scale::ALL.iter().map(|&s| (s, config.scale_reliability())).collect();
        let correlations = Construct::ALL
            .iter()
            .map(|&c| evaluation::correlation_table(&scores, &ds.clinical, &reliabilities, c, TimePointFilter::Pooled))
            .collect::<semproj_core::Result<Vec<_>>>()?;
        let reliability = if with_reliability {
            Some(evaluation::reliability_table(
                &segmented,
                &axis_refs,
                &provider,
                TimePointFilter::Pooled,
            )?)
        } else {
            None
        };
        Ok(SynthEval {
            correlations,
            reliability,
            reliabilities,
        })
    };
    run().map_err(|e| e.to_string())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn ctt_recovery() -> Result<(bool, String), String> {
    let results: Vec<(f64, f64)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let config = SynthConfig {
                seed: 1000 + seed,
                n_participants: 500,
                dim: 16,
                formats: BTreeMap::from([(
                    ResponseFormat::WriteWords,
                    FormatSpec {
                        units: 4,
                        unit_noise_sd: 1.0,
                        text_noise_sd: 1.0,
                    },
                )]),
                ..SynthConfig::default()
            };
            let e = synth_eval(&config, true)?;
            let rel = e.reliability.as_ref().expect("requested");
            let sens =
                evaluation::sensitivity_analysis(&e.correlations, &e.reliabilities, rel).map_err(|e| e.to_string())?;
            let r_sb: Vec<f64> = rel
                .cells
                .iter()
                .filter(|c| c.row == ReportRow::WriteWords)
                .map(|c| c.r_sb.value().copied().ok_or("undefined r_sb"))
                .collect::<Result<_, _>>()?;
            let full: Vec<f64> = sens
                .iter()
                .flat_map(|t| &t.cells)
                .filter(|c| c.row == ReportRow::WriteWords)
                .map(|c| c.full.value().map(|v| v.value).ok_or("undefined full correction"))
                .collect::<Result<_, _>>()?;
            Ok((mean(&r_sb), mean(&full)))
        })
        .collect::<Result<_, String>>()?;
    let sb = mean(&results.iter().map(|r| r.0).collect::<Vec<_>>());
    let full = mean(&results.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok((
        (sb - 2.0 / 3.0).abs() <= 0.05 && (full - 0.8).abs() <= 0.05,
        format!("100 seeds, n = 500: mean r_sb {sb:.4} (target 0.667 +/- 0.05); mean fully corrected r {full:.4} (target 0.8 +/- 0.05)"),
    ))
}

/// One-sided sign-test p-value for `k` successes out of `n`.
fn sign_test_p(k: usize, n: usize) -> f64 {
    let choose = |n: usize, k: usize| -> f64 { (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
    (k..=n).map(|i| choose(n, i)).sum::<f64>() / 2f64.powi(n as i32)
}

/// Mean partially corrected correlation of a row across every axis and scale.
fn row_mean(table: &CorrelationTable, row: ReportRow) -> Result<f64, String> {
    let vals: Vec<f64> = table
        .cells
        .iter()
        .filter(|c| c.row == row)
        .map(|c| match c.partial {
            Cell::Value(v) => Ok(v.value),
            Cell::Na(r) => Err(format!("{row} is NA ({})", r.as_str())),
        })
        .collect::<Result<_, _>>()?;
    Ok(mean(&vals))
}

fn pattern_replication() -> Result<(bool, String), String> {
    const SEEDS: u64 = 20;
    let order = [
        ReportRow::SelectWords,
        ReportRow::WriteWords,
        ReportRow::WritePhrases,
        ReportRow::WriteText,
    ];
    // (construct, higher row, lower row) comparisons and success counts
    let mut comparisons: Vec<(Construct, ReportRow, ReportRow)> = Vec::new();
    for &c in Construct::ALL {
        for w in order.windows(2) {
            comparisons.push((c, w[0], w[1]));
        }
    }
    let diffuse: Vec<Vec<bool>> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let e = synth_eval(
                &SynthConfig {
                    seed: 500 + seed,
                    n_participants: 300,
                    ..SynthConfig::default()
                },
                false,
            )?;
            comparisons
                .iter()
                .map(|&(c, hi, lo)| {
                    let t = e.correlations.iter().find(|t| t.construct == c).expect("construct");
                    Ok(row_mean(t, hi)? > row_mean(t, lo)?)
                })
                .collect()
        })
        .collect::<Result<_, String>>()?;

    let aggregated: Vec<Vec<bool>> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let defaults = SynthConfig::default();
            let e = synth_eval(
                &SynthConfig {
                    seed: 900 + seed,
                    n_participants: 300,
                    concentrated_text: true,
                    formats: BTreeMap::from([(
                        ResponseFormat::WriteText,
                        defaults.formats[&ResponseFormat::WriteText],
                    )]),
                    ..defaults
                },
                false,
            )?;
            let mut out = Vec::new();
            for t in &e.correlations {
                let whole = row_mean(t, ReportRow::WriteText)?;
                out.push(row_mean(t, ReportRow::WriteTextMean)? > whole);
                out.push(row_mean(t, ReportRow::WriteTextMaxabs)? > whole);
            }
            Ok(out)
        })
        .collect::<Result<_, String>>()?;

    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &(c, hi, lo)) in comparisons.iter().enumerate() {
        let k = diffuse.iter().filter(|s| s[i]).count();
        let p = sign_test_p(k, SEEDS as usize);
        pass &= p < 0.01;
        parts.push(format!("{} {hi}>{lo} {k}/{SEEDS}", c.short()));
    }
    let labels = ["mean>whole", "maxabs>whole"];
    for (ci, c) in Construct::ALL.iter().enumerate() {
        for (li, label) in labels.iter().enumerate() {
            let idx = ci * 2 + li;
            let k = aggregated.iter().filter(|s| s[idx]).count();
            let p = sign_test_p(k, SEEDS as usize);
            pass &= p < 0.01;
            parts.push(format!("{} concentrated {label} {k}/{SEEDS}", c.short()));
        }
    }
    Ok((
        pass,
        format!(
            "n = 300, {SEEDS} seeds, sign test p < .01 needs >= 16/20: {}",
            parts.join("; ")
        ),
    ))
}

// ---------------------------------------------------------------------------

struct ParityCase {
    text: String,
    compound: f64,
}

fn parse_case(line: &str) -> Result<ParityCase, String> {
    let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    Ok(ParityCase {
        text: v["text"].as_str().ok_or("missing text")?.to_string(),
        compound: v["compound"].as_f64().ok_or("missing compound")?,
    })
}

fn sentiment_parity() -> Result<(bool, String), String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/vader_parity.jsonl");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cases: Vec<ParityCase> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_case)
        .collect::<Result<_, _>>()?;
    let lexicon = SentimentLexicon::reference();
    let mut worst = 0.0f64;
    let mut distress_exact = true;
    for case in &cases {
        let r = lexicon.analyze(&case.text);
        worst = worst.max((r.compound - case.compound).abs());
        distress_exact &= r.distress == -r.compound;
    }
    Ok((
        cases.len() == 50 && worst <= 1e-4 && distress_exact,
        format!(
            "{} sentences; max |compound - reference| {worst:.1e}; distress = -compound exactly: {distress_exact}",
            cases.len()
        ),
    ))
}

// ---------------------------------------------------------------------------

fn semproj(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_semproj"))
        .args(args)
        .current_dir(dir)
        .env_remove("SEMPROJ_EMBED_URL")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`semproj {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

const PIPELINE: &[&[&str]] = &[
    &["axes", "build"],
    &["score"],
    &["eval", "correlations"],
    &["eval", "reliability"],
    &["eval", "sensitivity"],
    &["eval", "distributions"],
    &["eval", "baseline"],
    &["report", "render"],
];

fn full_cli_run(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    semproj(dir, &["synth", "generate", "--seed", "7", "--out", "data"])?;
    let data = dir.join("data");
    for step in PIPELINE {
        let mut args = vec!["--config", "config.json", "--cache-only"];
        args.extend_from_slice(step);
        semproj(&data, &args)?;
    }
    let report = std::fs::read(data.join("out/report.json")).map_err(|e| e.to_string())?;
    let scores = std::fs::read(data.join("out/scores.csv")).map_err(|e| e.to_string())?;
    Ok((report, scores))
}

fn without_timestamp(report: &[u8]) -> Result<Vec<u8>, String> {
    let text = std::str::from_utf8(report).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"generated_at\":"))
        .collect();
    if lines.len() + 1 != text.lines().count() {
        return Err("report.json should have exactly one generated_at field".into());
    }
    Ok(lines.join("\n").into_bytes())
}

fn determinism() -> Result<(bool, String), String> {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (report_a, scores_a) = full_cli_run(a.path())?;
    let (report_b, scores_b) = full_cli_run(b.path())?;
    let same_report = without_timestamp(&report_a)? == without_timestamp(&report_b)?;
    let same_scores = scores_a == scores_b;
    Ok((
        same_report && same_scores && !scores_a.is_empty(),
        format!(
            "two CLI runs with seed 7: report.json identical except timestamp: {same_report}; scores.csv identical: {same_scores} ({} bytes)",
            scores_a.len()
        ),
    ))
}

fn main() {
    let secs = Duration::from_secs;
    let mut outcomes = vec![
        timed("formula oracles", Some(secs(5)), formula_oracles),
        timed("projection geometry", Some(secs(10)), projection_geometry),
        timed("wasserstein oracle", Some(secs(30)), wasserstein_oracle),
        timed("classical test theory recovery", Some(secs(120)), ctt_recovery),
        timed("qualitative pattern replication", None, pattern_replication),
        timed("sentiment parity", Some(secs(5)), sentiment_parity),
        timed("determinism", None, determinism),
    ];
    // The synthetic criteria above ran through cache-only providers and a CLI
    // with --cache-only and no service URL; any cache miss would have failed
    // them.
    let offline: Vec<&Outcome> = outcomes
        .iter()
        .filter(|o| {
            matches!(
                o.name,
                "classical test theory recovery" | "qualitative pattern replication" | "determinism"
            )
        })
        .collect();
    let completed = offline.iter().all(|o| !o.detail.starts_with("error:"));
    outcomes.push(Outcome {
        name: "offline synthetic cache",
        pass: completed,
        detail: format!(
            "{} synthetic criteria completed from generator-populated caches without an embedding service: {completed}",
            offline.len()
        ),
        elapsed: Duration::ZERO,
        limit: None,
    });

    let mut failed = 0;
    for o in &outcomes {
        let status = if o.pass { "PASS" } else { "FAIL" };
        let limit = o
            .limit
            .map_or_else(String::new, |l| format!(" (limit {}s)", l.as_secs()));
        println!(
            "{status} {}: {} [{:.2}s{limit}]",
            o.name,
            o.detail,
            o.elapsed.as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} of {} acceptance criteria failed", outcomes.len());
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", outcomes.len());
}
