//! End-to-end runs over generated data with known ground truth.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use semproj_core::evaluation::Cell;
use semproj_core::pipeline::{Overrides, Pipeline};
use semproj_core::psychometrics::wasserstein_z;
use semproj_core::synthetic::{generate, FormatSpec, SynthConfig};
use semproj_core::{Construct, EvaluationReport, ReportRow, ResponseFormat, Scale};

fn run(config: &SynthConfig) -> EvaluationReport {
    let dir = tempfile::tempdir().unwrap();
    generate(config).unwrap().write(dir.path()).unwrap();
    let overrides = Overrides {
        cache_only: true,
        ..Overrides::default()
    };
    Pipeline::from_config_file(&dir.path().join("config.json"), overrides)
        .unwrap()
        .run_all()
        .unwrap()
}

#[test]
fn noiseless_data_give_near_perfect_correlations() {
    let config = SynthConfig {
        seed: 21,
        n_participants: 500,
        latent_clinical_r: 1.0,
        clinical_noise_sd: 0.0,
        formats: BTreeMap::from([(
            ResponseFormat::SelectWords,
            FormatSpec {
                units: 4,
                unit_noise_sd: 0.0,
                text_noise_sd: 0.0,
            },
        )]),
        ..SynthConfig::default()
    };
    let report = run(&config);
    for table in &report.correlations {
        for cell in table.cells.iter().filter(|c| c.row == ReportRow::SelectWords) {
            let r = cell.raw.value().unwrap().r;
            // only the integer rounding of clinical totals remains
            assert!(r >= 0.99, "{} {} {}: r = {r}", table.construct, cell.axis, cell.scale);
        }
    }
}

#[test]
fn skewed_samples_are_farther_from_normal_than_normal_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let skewed = Exp::new(1.0).unwrap();
    let a: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
    let c: Vec<f64> = (0..2000).map(|_| skewed.sample(&mut rng)).collect();
    let symmetric = wasserstein_z(&a, &b).unwrap();
    let asymmetric = wasserstein_z(&a, &c).unwrap();
    assert!(symmetric < 0.1, "{symmetric}");
    assert!(asymmetric > 2.0 * symmetric, "{asymmetric} vs {symmetric}");
}

#[test]
fn concentrated_free_text_favours_unit_scores() {
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        seed: 33,
        n_participants: 400,
        concentrated_text: true,
        ..defaults
    };
    let report = run(&config);
    for table in &report.correlations {
        let row_mean = |row: ReportRow| {
            let vals: Vec<f64> = table
                .cells
                .iter()
                .filter(|c| c.row == row)
                .map(|c| c.partial.value().unwrap().value)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let whole = row_mean(ReportRow::WriteText);
        assert!(row_mean(ReportRow::WriteTextMaxabs) > whole, "{}", table.construct);
        assert!(row_mean(ReportRow::WriteTextMean) > whole, "{}", table.construct);
    }
    // every baseline cell has both a projection and a sentiment side
    for &construct in Construct::ALL {
        for &scale in &construct.scales() {
            let cell = report
                .baseline
                .cell(construct, ResponseFormat::WriteText, scale)
                .unwrap();
            assert!(matches!(cell.delta, Cell::Value(_)), "{construct} {scale}");
        }
    }
    assert!(report.metadata.reliabilities.contains_key(&Scale::Pswq));
}

#[test]
fn identical_seeds_give_identical_reports() {
    let config = SynthConfig {
        seed: 5,
        n_participants: 60,
        ..SynthConfig::default()
    };
    let mut a = run(&config);
    let mut b = run(&config);
    a.metadata.generated_at.clear();
    b.metadata.generated_at.clear();
    assert_eq!(a, b);
}
