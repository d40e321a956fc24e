//! The generate → train → evaluate stages, in memory and on disk.

use std::path::Path;

use crate::baselines::{self, FeatureMap, LinearModel};
use crate::config::RunConfig;
use crate::dataset::{self, GenerationStats, Normalizer, Sample, Split};
use crate::error::{Error, Result};
use crate::evaluation::{self, Distribution, EvalReport, Section, UncertaintyRow, UncertaintySummary};
use crate::fbg::WavelengthFrame;
use crate::kinematics::ShapeFrame;
use crate::nn::{self, EpochLoss, MlpModel, N_OUTPUTS};
use crate::seed::derive_seed;
use crate::uncertainty;

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_ID_CSV: &str = "test_id.csv";
pub const TEST_OOD_CSV: &str = "test_ood.csv";
pub const STATS_JSON: &str = "generation.json";
pub const MLP_FILE: &str = "mlp.cdms";
pub const LINEAR_FILE: &str = "linear.cdms";
pub const POLY2_FILE: &str = "poly2.cdms";
pub const LOSS_CSV: &str = "loss_curve.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";
pub const UNCERTAINTY_CSV: &str = "uncertainty.csv";

pub const MLP_NAME: &str = "DNN";
pub const LINEAR_NAME: &str = "Linear";
pub const POLY2_NAME: &str = "Poly2";

pub fn generate(cfg: &RunConfig) -> Result<(Split, GenerationStats)> {
    cfg.validate()?;
    let data = dataset::generate_dataset(&cfg.scenarios, &cfg.geometry, &cfg.fibers(), &cfg.generation)?;
    let split = dataset::split_by_bend(data.samples, &cfg.split.ood, cfg.split.train_fraction)?;
    Ok((split, data.stats))
}

pub fn write_split(split: &Split, stats: &GenerationStats, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    dataset::write_csv(&split.train, dir.join(TRAIN_CSV))?;
    dataset::write_csv(&split.test_id, dir.join(TEST_ID_CSV))?;
    dataset::write_csv(&split.test_ood, dir.join(TEST_OOD_CSV))?;
    let json = serde_json::to_string_pretty(stats).map_err(|e| Error::Argument(e.to_string()))?;
    write_text(&dir.join(STATS_JSON), &(json + "\n"))
}

pub fn read_split(dir: &Path) -> Result<Split> {
    Ok(Split {
        train: dataset::read_csv(dir.join(TRAIN_CSV))?,
        test_id: dataset::read_csv(dir.join(TEST_ID_CSV))?,
        test_ood: dataset::read_csv(dir.join(TEST_OOD_CSV))?,
    })
}

pub fn read_stats(dir: &Path) -> Result<GenerationStats> {
    let path = dir.join(STATS_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

#[derive(Clone, Debug)]
pub struct Models {
    pub mlp: MlpModel,
    pub linear: LinearModel,
    pub poly2: LinearModel,
    pub curve: Vec<EpochLoss>,
}

/// Fits the normalizer on `train`, trains the network and both baselines.
pub fn train_models(cfg: &RunConfig, train: &[Sample]) -> Result<Models> {
    let normalizer = Normalizer::fit(train.iter().map(|s| &s.features.0))?;
    let mut mlp = MlpModel::new(normalizer, &cfg.model.hidden, cfg.model.dropout, cfg.model.seed)?;
    let curve = nn::train(&mut mlp, train, &cfg.training)?;
    Ok(Models {
        mlp,
        linear: baselines::fit_samples(train, FeatureMap::Identity)?,
        poly2: baselines::fit_samples(train, FeatureMap::Poly2)?,
        curve,
    })
}

pub fn save_models(models: &Models, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    models.mlp.save(dir.join(MLP_FILE))?;
    models.linear.save(dir.join(LINEAR_FILE))?;
    models.poly2.save(dir.join(POLY2_FILE))?;
    nn::write_loss_curve(&models.curve, dir.join(LOSS_CSV))
}

/// Loads the checkpoints; the loss curve is not reloaded.
pub fn load_models(dir: &Path) -> Result<Models> {
    Ok(Models {
        mlp: MlpModel::load(dir.join(MLP_FILE))?,
        linear: LinearModel::load(dir.join(LINEAR_FILE))?,
        poly2: LinearModel::load(dir.join(POLY2_FILE))?,
        curve: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub table: Vec<UncertaintyRow>,
}

/// Scores every model on both test splits. The network's point estimate is
/// the Monte Carlo mean, as at deployment; the same passes give the
/// uncertainty table.
pub fn evaluate(cfg: &RunConfig, models: &Models, split: &Split) -> Result<Evaluation> {
    let u = &cfg.uncertainty;
    let mut sections = Vec::new();
    let mut table = Vec::new();
    let parts = [
        (Distribution::Id, &split.test_id, 0u64),
        (Distribution::Ood, &split.test_ood, 1u64),
    ];
    for (tag, samples, stream) in parts {
        if samples.is_empty() {
            continue;
        }
        let frames: Vec<_> = samples.iter().map(|s| s.features).collect();
        let truths: Vec<ShapeFrame> = samples.iter().map(|s| s.target).collect();
        let mc = uncertainty::mc_predict_all(&models.mlp, &frames, u.k, derive_seed(u.seed, stream))?;
        let means: Vec<ShapeFrame> = mc.iter().map(|p| p.mean_shape()).collect();
        table.extend(evaluation::uncertainty_error_table(&mc, &truths, &vec![tag; mc.len()])?);

        sections.push(Section {
            model: MLP_NAME.into(),
            split: tag,
            rows: evaluation::scenario_table(&means, samples)?,
        });
        for (name, model) in [(LINEAR_NAME, &models.linear), (POLY2_NAME, &models.poly2)] {
            sections.push(Section {
                model: name.into(),
                split: tag,
                rows: evaluation::scenario_table(&model.predict(&frames)?, samples)?,
            });
        }
    }
    if table.is_empty() {
        return Err(Error::Empty("test samples"));
    }
    let summary = UncertaintySummary::from_table(&table, u.k, u.error_threshold, u.std_threshold)?;
    Ok(Evaluation {
        report: EvalReport {
            sections,
            uncertainty: Some(summary),
        },
        table,
    })
}

pub fn write_evaluation(eval: &Evaluation, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join(REPORT_TXT), &eval.report.render())?;
    write_text(&dir.join(REPORT_JSON), &(eval.report.to_json()? + "\n"))?;
    evaluation::write_uncertainty_csv(&eval.table, dir.join(UNCERTAINTY_CSV))
}

/// One inferred shape: the MC mean and its `ω·std` interval, mm.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub mean: [f64; N_OUTPUTS],
    pub interval: [f64; N_OUTPUTS],
}

pub fn infer(model: &MlpModel, frames: &[WavelengthFrame], k: usize, omega: f64, seed: u64) -> Result<Vec<Inference>> {
    uncertainty::mc_predict_all(model, frames, k, seed)?
        .into_iter()
        .map(|p| {
            Ok(Inference {
                interval: uncertainty::confidence_interval(&p, omega)?,
                mean: p.mean,
            })
        })
        .collect()
}

/// `row,p1x,p1y,…,p30x,p30y,u1x,u1y,…,u30x,u30y`.
pub fn write_inference_csv(rows: &[Inference], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["row".to_string()];
    header.extend(dataset::marker_columns());
    header.extend(dataset::marker_columns().iter().map(|c| c.replacen('p', "u", 1)));
    w.write_record(&header)?;
    for (i, r) in rows.iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(r.mean.iter().chain(&r.interval).map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}
