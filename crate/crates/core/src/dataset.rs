//! Synthetic wavelength/shape pairs, marker repair, bend-level splits,
//! feature normalization and the sample CSV format.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbg::{self, FiberSpec, WavelengthFrame, N_FEATURES};
use crate::kinematics::{
    self, CdmConfig, CurvatureProfile, Obstacle, Placement, ShapeFrame, Side, SolverOptions,
    N_MARKERS,
};
use crate::seed::derive_seed;

pub const MIN_VELOCITY: f64 = 0.1;
pub const MAX_VELOCITY: f64 = 0.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioKind {
    FreespaceLeft,
    FreespaceRight,
    BaseLeft,
    CenterLeft,
    TipLeft,
    BaseRight,
    CenterRight,
    TipRight,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::FreespaceLeft,
        ScenarioKind::FreespaceRight,
        ScenarioKind::BaseLeft,
        ScenarioKind::CenterLeft,
        ScenarioKind::TipLeft,
        ScenarioKind::BaseRight,
        ScenarioKind::CenterRight,
        ScenarioKind::TipRight,
    ];

    pub fn placement(self) -> Option<Placement> {
        match self {
            ScenarioKind::FreespaceLeft | ScenarioKind::FreespaceRight => None,
            ScenarioKind::BaseLeft => Some(Placement::BaseLeft),
            ScenarioKind::CenterLeft => Some(Placement::CenterLeft),
            ScenarioKind::TipLeft => Some(Placement::TipLeft),
            ScenarioKind::BaseRight => Some(Placement::BaseRight),
            ScenarioKind::CenterRight => Some(Placement::CenterRight),
            ScenarioKind::TipRight => Some(Placement::TipRight),
        }
    }

    pub fn side(self) -> Side {
        match self {
            ScenarioKind::FreespaceLeft => Side::Left,
            ScenarioKind::FreespaceRight => Side::Right,
            other => other.placement().map(Placement::side).unwrap_or(Side::Left),
        }
    }

    pub fn is_freespace(self) -> bool {
        self.placement().is_none()
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::FreespaceLeft => "FreespaceLeft",
            ScenarioKind::FreespaceRight => "FreespaceRight",
            ScenarioKind::BaseLeft => "BaseLeft",
            ScenarioKind::CenterLeft => "CenterLeft",
            ScenarioKind::TipLeft => "TipLeft",
            ScenarioKind::BaseRight => "BaseRight",
            ScenarioKind::CenterRight => "CenterRight",
            ScenarioKind::TipRight => "TipRight",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown scenario `{s}`")))
    }
}

/// A recording session: `bends` triangle sweeps 0 → max → 0 at constant
/// cable velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Cable velocity, mm/s.
    pub velocity: f64,
    /// Sample rate, Hz.
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default = "one")]
    pub bends: usize,
    pub seed: u64,
}

fn default_sample_rate() -> f64 {
    50.0
}

fn one() -> usize {
    1
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_VELOCITY..=MAX_VELOCITY).contains(&self.velocity) {
            return Err(Error::Config(format!(
                "{} velocity {} mm/s outside [{MIN_VELOCITY}, {MAX_VELOCITY}]",
                self.kind, self.velocity
            )));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Config(format!(
                "{} sample rate must be positive",
                self.kind
            )));
        }
        Ok(())
    }

    /// Number of samples in one bend.
    pub fn samples_per_bend(&self, config: &CdmConfig) -> usize {
        (2.0 * config.max_cable_disp / self.velocity * self.sample_rate).round() as usize
    }

    /// Signed cable displacement of sample `k` within a bend of `n` samples.
    /// Rising and falling halves share the exact same displacement values.
    fn displacement(&self, k: usize, n: usize, config: &CdmConfig) -> f64 {
        let rise = k.min(n - k) as f64;
        let delta = (self.velocity * rise / self.sample_rate).min(config.max_cable_disp);
        self.kind.side().sign() * delta
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: WavelengthFrame,
    pub target: ShapeFrame,
    pub scenario: ScenarioKind,
    pub bend_id: u32,
    /// Seconds since the start of the bend.
    pub t: f64,
}

/// Measurement model knobs used while generating samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationOptions {
    /// Interrogator noise, nm.
    pub noise_sigma: f64,
    /// Per-sample uniform temperature change drawn from ±range, °C.
    pub temperature_range: f64,
    /// Obstacle radius, mm.
    pub obstacle_radius: f64,
    pub solver: SolverOptions,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        Self {
            noise_sigma: 0.002,
            temperature_range: 2.0,
            obstacle_radius: 10.0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub attempted: usize,
    pub skipped: usize,
    pub obstacle_samples: usize,
    /// Deepest accepted obstacle penetration, mm (negative when never touched).
    pub max_penetration: f64,
}

impl GenerationStats {
    pub fn skip_fraction(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.skipped as f64 / self.attempted as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub stats: GenerationStats,
}

/// Simulates every bend of every scenario. Bend ids are assigned in scenario
/// order starting at 0; each bend draws from its own seeded stream.
pub fn generate_dataset(
    scenarios: &[Scenario],
    config: &CdmConfig,
    fibers: &[FiberSpec; 2],
    opts: &GenerationOptions,
) -> Result<Dataset> {
    if scenarios.is_empty() {
        return Err(Error::Empty("scenario list"));
    }
    config.validate()?;
    opts.solver.validate()?;
    for s in scenarios {
        s.validate()?;
    }
    if !(opts.temperature_range >= 0.0 && opts.temperature_range.is_finite()) {
        return Err(Error::Config("temperature_range must be >= 0".into()));
    }

    let mut samples = Vec::new();
    let mut stats = GenerationStats {
        max_penetration: f64::NEG_INFINITY,
        ..GenerationStats::default()
    };
    let mut bend_id = 0u32;
    for scenario in scenarios {
        let obstacle = scenario
            .kind
            .placement()
            .map(|p| Obstacle::at(p, opts.obstacle_radius))
            .transpose()?;
        if let Some(obs) = &obstacle {
            if !obs.clear_of_straight_pose(config) {
                return Err(Error::Config(format!(
                    "{} obstacle touches the straight pose",
                    scenario.kind
                )));
            }
        }
        // Every bend of a scenario repeats the same displacements; solve each once.
        let mut solved = HashMap::new();
        for bend in 0..scenario.bends {
            let seed = derive_seed(scenario.seed, bend as u64);
            generate_bend(
                scenario,
                obstacle.as_ref(),
                bend_id,
                seed,
                config,
                fibers,
                opts,
                &mut solved,
                &mut samples,
                &mut stats,
            )?;
            bend_id += 1;
        }
    }
    Ok(Dataset { samples, stats })
}

#[allow(clippy::too_many_arguments)]
fn generate_bend(
    scenario: &Scenario,
    obstacle: Option<&Obstacle>,
    bend_id: u32,
    seed: u64,
    config: &CdmConfig,
    fibers: &[FiberSpec; 2],
    opts: &GenerationOptions,
    solved: &mut HashMap<u64, Option<CurvatureProfile>>,
    out: &mut Vec<Sample>,
    stats: &mut GenerationStats,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = scenario.samples_per_bend(config);
    for k in 0..n {
        let delta = scenario.displacement(k, n, config);
        // Draw the measurement randomness before any skip so that the stream
        // does not depend on solver outcomes.
        let delta_t = if opts.temperature_range > 0.0 {
            rng.random_range(-opts.temperature_range..=opts.temperature_range)
        } else {
            0.0
        };
        let noise_seed = rng.random::<u64>();
        stats.attempted += 1;

        let profile = match obstacle {
            None => Some(kinematics::free_bend_curvature(delta, config)?),
            Some(obs) => {
                stats.obstacle_samples += 1;
                *solved.entry(delta.to_bits()).or_insert_with(|| {
                    kinematics::constrained_bend(delta, obs, config, &opts.solver)
                        .ok()
                        .filter(|s| s.profile.within_bound(config))
                        .map(|s| s.profile)
                })
            }
        };
        let Some(profile) = profile else {
            stats.skipped += 1;
            continue;
        };
        let line = kinematics::shape_from_curvatures(&profile, config);
        if let Some(obs) = obstacle {
            stats.max_penetration = stats.max_penetration.max(obs.penetration(&line, config));
        }
        let raw = fbg::raw_shifts(&profile, fibers, delta_t, config)?;
        let noisy = fbg::add_measurement_noise(&raw, opts.noise_sigma, noise_seed)?;
        out.push(Sample {
            features: fbg::common_mode_correct(&noisy),
            target: line.shape,
            scenario: scenario.kind,
            bend_id,
            t: k as f64 / scenario.sample_rate,
        });
    }
    Ok(())
}

/// Why a marker frame was dropped by [`repair_markers`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    /// More than one marker flagged.
    MultipleOutliers(usize),
    /// The single outlier is the first or last marker.
    Endpoint(usize),
}

/// Replaces a single flagged marker by the constant-curvature arc midpoint
/// between its neighbors; rejects frames with more than one outlier.
///
/// The arc is the circle through markers `i−1`, `i+1` and one further
/// neighbor (`i−2`, or `i+2` when `i = 1`). Locally straight runs fall back
/// to the chord midpoint.
pub fn repair_markers(
    markers: &[[f64; 2]; N_MARKERS],
    outliers: &[bool; N_MARKERS],
) -> std::result::Result<ShapeFrame, Rejection> {
    let flagged: Vec<usize> = (0..N_MARKERS).filter(|&i| outliers[i]).collect();
    match flagged.as_slice() {
        [] => Ok(ShapeFrame { markers: *markers }),
        [i] if *i == 0 || *i == N_MARKERS - 1 => Err(Rejection::Endpoint(*i)),
        &[i] => {
            let (a, b) = (markers[i - 1], markers[i + 1]);
            let third = if i >= 2 { markers[i - 2] } else { markers[i + 2] };
            let mut repaired = *markers;
            repaired[i] = arc_midpoint(a, b, third);
            Ok(ShapeFrame { markers: repaired })
        }
        many => Err(Rejection::MultipleOutliers(many.len())),
    }
}

/// Midpoint of the minor arc from `a` to `b` on the circle through `a`, `b`, `c`.
fn arc_midpoint(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let (bx, by) = (b[0] - a[0], b[1] - a[1]);
    let (cx, cy) = (c[0] - a[0], c[1] - a[1]);
    let det = 2.0 * (bx * cy - by * cx);
    let scale = (bx * bx + by * by).max(cx * cx + cy * cy);
    if det.abs() <= 1e-12 * scale {
        return mid;
    }
    let (b2, c2) = (bx * bx + by * by, cx * cx + cy * cy);
    let center = [
        a[0] + (cy * b2 - by * c2) / det,
        a[1] + (bx * c2 - cx * b2) / det,
    ];
    let radius = (a[0] - center[0]).hypot(a[1] - center[1]);
    let (dx, dy) = (mid[0] - center[0], mid[1] - center[1]);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return mid;
    }
    [center[0] + radius * dx / len, center[1] + radius * dy / len]
}

/// Result of [`split_by_bend`].
#[derive(Clone, Debug, Default)]
pub struct Split {
    pub train: Vec<Sample>,
    pub test_id: Vec<Sample>,
    pub test_ood: Vec<Sample>,
}

/// Assigns whole bends to train / in-distribution test / out-of-distribution
/// test. Scenarios in `ood` go entirely to `test_ood`. The remaining bends are
/// ordered round-robin across scenarios (first bend of every scenario, then
/// the second, ...) and the first `round(n · train_fraction)` go to train, so
/// every scenario keeps its later bends for testing.
pub fn split_by_bend(samples: Vec<Sample>, ood: &[ScenarioKind], train_fraction: f64) -> Result<Split> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config(format!(
            "train_fraction {train_fraction} outside [0, 1]"
        )));
    }
    let mut per_scenario: HashMap<ScenarioKind, BTreeSet<u32>> = HashMap::new();
    for s in samples.iter().filter(|s| !ood.contains(&s.scenario)) {
        per_scenario.entry(s.scenario).or_default().insert(s.bend_id);
    }
    let mut kinds: Vec<_> = per_scenario.keys().copied().collect();
    kinds.sort();
    let lists: Vec<Vec<u32>> = kinds
        .iter()
        .map(|k| per_scenario[k].iter().copied().collect())
        .collect();
    let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
    let order: Vec<u32> = (0..longest)
        .flat_map(|pos| lists.iter().filter_map(move |l| l.get(pos).copied()))
        .collect();
    let n_train = (order.len() as f64 * train_fraction).round() as usize;
    let train_bends: BTreeSet<u32> = order[..n_train].iter().copied().collect();
    if train_bends.is_empty() {
        return Err(Error::Config("split leaves the training set empty".into()));
    }

    let mut split = Split::default();
    for s in samples {
        if ood.contains(&s.scenario) {
            split.test_ood.push(s);
        } else if train_bends.contains(&s.bend_id) {
            split.train.push(s);
        } else {
            split.test_id.push(s);
        }
    }
    Ok(split)
}

/// Per-feature min-max scaling fitted on training features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    min: [f64; N_FEATURES],
    max: [f64; N_FEATURES],
}

impl Normalizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64; N_FEATURES]>) -> Result<Self> {
        let mut min = [f64::INFINITY; N_FEATURES];
        let mut max = [f64::NEG_INFINITY; N_FEATURES];
        let mut count = 0usize;
        for row in rows {
            for j in 0..N_FEATURES {
                if !row[j].is_finite() {
                    return Err(Error::Argument(format!("non-finite feature in column {j}")));
                }
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
            count += 1;
        }
        match count {
            0 => Err(Error::Empty("normalizer training rows")),
            1 => Err(Error::Argument(
                "normalizer needs at least two training rows".into(),
            )),
            _ => Ok(Self { min, max }),
        }
    }

    pub fn from_bounds(min: [f64; N_FEATURES], max: [f64; N_FEATURES]) -> Result<Self> {
        if min.iter().zip(&max).any(|(a, b)| !(a <= b)) {
            return Err(Error::Argument("normalizer requires min <= max".into()));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> &[f64; N_FEATURES] {
        &self.min
    }

    pub fn max(&self) -> &[f64; N_FEATURES] {
        &self.max
    }

    /// `(x − min)/(max − min)`, unclipped; constant features map to 0.
    pub fn normalize(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| {
            let span = self.max[j] - self.min[j];
            if span > 0.0 {
                (x[j] - self.min[j]) / span
            } else {
                0.0
            }
        })
    }

    pub fn denormalize(&self, z: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| self.min[j] + z[j] * (self.max[j] - self.min[j]))
    }
}

// ---- CSV ----------------------------------------------------------------

pub fn feature_columns() -> Vec<String> {
    (1..=N_FEATURES).map(|j| format!("dl{j}")).collect()
}

pub fn marker_columns() -> Vec<String> {
    (1..=N_MARKERS)
        .flat_map(|i| [format!("p{i}x"), format!("p{i}y")])
        .collect()
}

pub fn csv_header() -> Vec<String> {
    let mut h = vec!["bend_id".to_string(), "t".into(), "scenario".into()];
    h.extend(feature_columns());
    h.extend(marker_columns());
    h
}

pub fn write_csv(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_csv_to(samples, std::io::BufWriter::new(file))
}

/// Floats use Rust's shortest round-trip formatting, so reading back is exact.
pub fn write_csv_to<W: Write>(samples: &[Sample], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(csv_header())?;
    let mut record = Vec::with_capacity(3 + N_FEATURES + 2 * N_MARKERS);
    for s in samples {
        record.clear();
        record.push(s.bend_id.to_string());
        record.push(s.t.to_string());
        record.push(s.scenario.to_string());
        record.extend(s.features.0.iter().map(f64::to_string));
        record.extend(s.target.to_flat().iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_csv_from(std::io::BufReader::new(file))
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<Vec<Sample>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = r.headers()?.clone();
    let columns = column_indices(&headers, &csv_header())?;
    let (bend_col, t_col, scenario_col) = (columns[0], columns[1], columns[2]);
    let feature_cols = &columns[3..3 + N_FEATURES];
    let marker_cols = &columns[3 + N_FEATURES..];

    let mut samples = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::Parse {
                line,
                msg: format!("row has {} fields, expected column {}", record.len(), idx + 1),
            })
        };
        let float = |idx: usize| -> Result<f64> {
            let raw = field(idx)?;
            raw.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("column `{}`: `{raw}`: {e}", &headers[idx]),
            })
        };
        let bend_id = field(bend_col)?.trim().parse::<u32>().map_err(|e| Error::Parse {
            line,
            msg: format!("column `bend_id`: {e}"),
        })?;
        let scenario = field(scenario_col)?
            .trim()
            .parse::<ScenarioKind>()
            .map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        let mut features = [0.0; N_FEATURES];
        for (f, &c) in features.iter_mut().zip(feature_cols) {
            *f = float(c)?;
        }
        let mut flat = [0.0; 2 * N_MARKERS];
        for (f, &c) in flat.iter_mut().zip(marker_cols) {
            *f = float(c)?;
        }
        samples.push(Sample {
            features: WavelengthFrame(features),
            target: ShapeFrame::from_flat(&flat)?,
            scenario,
            bend_id,
            t: float(t_col)?,
        });
    }
    Ok(samples)
}

/// Reads only the `dl1..dl8` columns of any CSV, ignoring other columns.
pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Vec<WavelengthFrame>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_features_from(std::io::BufReader::new(file))
}

pub fn read_features_from<R: Read>(reader: R) -> Result<Vec<WavelengthFrame>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = r.headers()?.clone();
    let cols = column_indices(&headers, &feature_columns())?;
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = [0.0; N_FEATURES];
        for (v, &c) in row.iter_mut().zip(&cols) {
            let raw = record.get(c).ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing field for column `{}`", &headers[c]),
            })?;
            *v = raw.trim().parse().map_err(|e| Error::Parse {
                line,
                msg: format!("column `{}`: `{raw}`: {e}", &headers[c]),
            })?;
        }
        out.push(WavelengthFrame(row));
    }
    Ok(out)
}

fn column_indices(headers: &csv::StringRecord, wanted: &[String]) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))
        })
        .collect()
}
