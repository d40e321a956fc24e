//! Marker error metrics, per-scenario TPE/DSE tables, the uncertainty/error
//! table and its calibration statistics.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, ScenarioKind};
use crate::error::{Error, Result};
use crate::kinematics::{ShapeFrame, N_MARKERS};
use crate::uncertainty::McPrediction;

/// Euclidean error of every marker, mm.
pub fn marker_errors(pred: &ShapeFrame, truth: &ShapeFrame) -> [f64; N_MARKERS] {
    std::array::from_fn(|i| {
        let (p, t) = (pred.markers[i], truth.markers[i]);
        (p[0] - t[0]).hypot(p[1] - t[1])
    })
}

/// [`marker_errors`] on interleaved coordinate slices.
pub fn marker_errors_flat(pred: &[f64], truth: &[f64]) -> Result<[f64; N_MARKERS]> {
    Ok(marker_errors(&ShapeFrame::from_flat(pred)?, &ShapeFrame::from_flat(truth)?))
}

/// Element of rank `(n − 1) / 2` (rounded down) in sorted order.
pub fn lower_median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("error pool"));
    }
    let mut v = values.to_vec();
    let k = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    Ok(*m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        Ok(Self {
            median: lower_median(values)?,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Tip marker only.
    pub tpe: Summary,
    /// All markers of all samples pooled.
    pub dse: Summary,
    pub samples: usize,
}

pub fn aggregate(errors: &[[f64; N_MARKERS]]) -> Result<Aggregate> {
    if errors.is_empty() {
        return Err(Error::Empty("error rows"));
    }
    let tip: Vec<f64> = errors.iter().map(|e| e[N_MARKERS - 1]).collect();
    let pooled: Vec<f64> = errors.iter().flatten().copied().collect();
    Ok(Aggregate {
        tpe: Summary::of(&tip)?,
        dse: Summary::of(&pooled)?,
        samples: errors.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Id,
    Ood,
}

impl Distribution {
    pub fn tag(self) -> &'static str {
        match self {
            Distribution::Id => "id",
            Distribution::Ood => "ood",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRow {
    /// `‖(std_x, std_y)‖` at the tip, mm.
    pub tip_std: f64,
    pub tip_error: f64,
    pub tag: Distribution,
}

pub fn uncertainty_error_table(
    preds: &[McPrediction],
    truths: &[ShapeFrame],
    tags: &[Distribution],
) -> Result<Vec<UncertaintyRow>> {
    if preds.len() != truths.len() || preds.len() != tags.len() {
        return Err(Error::Shape {
            what: "uncertainty table inputs",
            expected: preds.len(),
            got: if truths.len() != preds.len() { truths.len() } else { tags.len() },
        });
    }
    Ok(preds
        .iter()
        .zip(truths)
        .zip(tags)
        .map(|((p, t), &tag)| UncertaintyRow {
            tip_std: p.tip_std(),
            tip_error: marker_errors(&p.mean_shape(), t)[N_MARKERS - 1],
            tag,
        })
        .collect())
}

pub fn write_uncertainty_csv(rows: &[UncertaintyRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    write_uncertainty_csv_to(rows, std::io::BufWriter::new(file))
}

pub fn write_uncertainty_csv_to<W: Write>(rows: &[UncertaintyRow], mut w: W) -> Result<()> {
    writeln!(w, "tip_std_mm,tip_error_mm,tag")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.tip_std, r.tip_error, r.tag.tag())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_uncertainty_csv(path: impl AsRef<Path>) -> Result<Vec<UncertaintyRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_uncertainty_csv_from(std::io::BufReader::new(file))
}

pub fn read_uncertainty_csv_from<R: std::io::Read>(reader: R) -> Result<Vec<UncertaintyRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (c_std, c_err, c_tag) = (col("tip_std_mm")?, col("tip_error_mm")?, col("tag")?);
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |msg: String| Error::Parse { line, msg };
        let num = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            raw.parse().map_err(|e| parse_err(format!("`{raw}`: {e}")))
        };
        let tag = match record.get(c_tag).unwrap_or("") {
            "id" => Distribution::Id,
            "ood" => Distribution::Ood,
            other => return Err(parse_err(format!("unknown tag `{other}`"))),
        };
        rows.push(UncertaintyRow {
            tip_std: num(c_std)?,
            tip_error: num(c_err)?,
            tag,
        });
    }
    Ok(rows)
}

/// Rows that are confidently wrong: error above `error_threshold` while the
/// predicted std is below `std_threshold`.
pub fn false_positive_count(rows: &[UncertaintyRow], error_threshold: f64, std_threshold: f64) -> Result<usize> {
    if !(error_threshold > 0.0 && std_threshold > 0.0) {
        return Err(Error::Argument("false-positive thresholds must be positive".into()));
    }
    Ok(rows
        .iter()
        .filter(|r| r.tip_error > error_threshold && r.tip_std < std_threshold)
        .count())
}

/// Rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            what: "spearman inputs",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Argument("spearman needs at least two pairs".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Argument("spearman is undefined for a constant input".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their average
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = avg;
        }
        start = end;
    }
    out
}

/// One line of a results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub label: String,
    #[serde(flatten)]
    pub metrics: Aggregate,
}

/// Rows `Freespace`, `Obstacles`, then each obstacle placement present.
pub fn scenario_table(preds: &[ShapeFrame], samples: &[Sample]) -> Result<Vec<ScenarioRow>> {
    if preds.len() != samples.len() {
        return Err(Error::Shape {
            what: "predictions",
            expected: samples.len(),
            got: preds.len(),
        });
    }
    let errors: Vec<[f64; N_MARKERS]> = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| marker_errors(p, &s.target))
        .collect();
    let group = |keep: &dyn Fn(ScenarioKind) -> bool| -> Vec<[f64; N_MARKERS]> {
        errors
            .iter()
            .zip(samples)
            .filter(|(_, s)| keep(s.scenario))
            .map(|(e, _)| *e)
            .collect()
    };
    let mut rows = Vec::new();
    let mut push = |label: &str, errs: Vec<[f64; N_MARKERS]>| -> Result<()> {
        if !errs.is_empty() {
            rows.push(ScenarioRow {
                label: label.to_string(),
                metrics: aggregate(&errs)?,
            });
        }
        Ok(())
    };
    push("All", errors.clone())?;
    push("Freespace", group(&|k| k.is_freespace()))?;
    push("Obstacles", group(&|k| !k.is_freespace()))?;
    for kind in ScenarioKind::ALL.into_iter().filter(|k| !k.is_freespace()) {
        push(kind.name(), group(&|k| k == kind))?;
    }
    Ok(rows)
}

/// Results of one model on one test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub model: String,
    pub split: Distribution,
    pub rows: Vec<ScenarioRow>,
}

impl Section {
    pub fn row(&self, label: &str) -> Option<&Aggregate> {
        self.rows.iter().find(|r| r.label == label).map(|r| &r.metrics)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary {
    pub k: usize,
    pub mean_tip_std_id: f64,
    pub mean_tip_std_ood: Option<f64>,
    pub spearman: f64,
    pub error_threshold: f64,
    pub std_threshold: f64,
    pub false_positives: usize,
    pub rows: usize,
}

impl UncertaintySummary {
    pub fn from_table(
        table: &[UncertaintyRow],
        k: usize,
        error_threshold: f64,
        std_threshold: f64,
    ) -> Result<Self> {
        let mean_of = |tag| {
            let v: Vec<f64> = table.iter().filter(|r| r.tag == tag).map(|r| r.tip_std).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let std: Vec<f64> = table.iter().map(|r| r.tip_std).collect();
        let err: Vec<f64> = table.iter().map(|r| r.tip_error).collect();
        Ok(Self {
            k,
            mean_tip_std_id: mean_of(Distribution::Id).ok_or(Error::Empty("in-distribution rows"))?,
            mean_tip_std_ood: mean_of(Distribution::Ood),
            spearman: spearman(&std, &err)?,
            error_threshold,
            std_threshold,
            false_positives: false_positive_count(table, error_threshold, std_threshold)?,
            rows: table.len(),
        })
    }

    pub fn false_positive_fraction(&self) -> f64 {
        self.false_positives as f64 / self.rows.max(1) as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sections: Vec<Section>,
    pub uncertainty: Option<UncertaintySummary>,
}

impl EvalReport {
    pub fn section(&self, model: &str, split: Distribution) -> Option<&Section> {
        self.sections.iter().find(|s| s.model == model && s.split == split)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Argument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }

    /// Fixed-width text tables, one per model and split.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let _ = writeln!(out, "{} ({})", s.model, s.split.tag());
            let _ = writeln!(
                out,
                "  {:<14} {:>7} {:>10} {:>10} {:>10} {:>10}",
                "scenario", "n", "TPE med", "TPE max", "DSE med", "DSE max"
            );
            for r in &s.rows {
                let m = &r.metrics;
                let _ = writeln!(
                    out,
                    "  {:<14} {:>7} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                    r.label, m.samples, m.tpe.median, m.tpe.max, m.dse.median, m.dse.max
                );
            }
            out.push('\n');
        }
        if let Some(u) = &self.uncertainty {
            let _ = writeln!(out, "uncertainty (K = {})", u.k);
            let _ = writeln!(out, "  mean tip std id:  {:.4} mm", u.mean_tip_std_id);
            if let Some(ood) = u.mean_tip_std_ood {
                let _ = writeln!(out, "  mean tip std ood: {ood:.4} mm");
            }
            let _ = writeln!(out, "  spearman(std, error): {:.4}", u.spearman);
            let _ = writeln!(
                out,
                "  false positives (error > {} mm, std < {} mm): {} of {} ({:.4} %)",
                u.error_threshold,
                u.std_threshold,
                u.false_positives,
                u.rows,
                100.0 * u.false_positive_fraction()
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbg::WavelengthFrame;

    fn frame(offset: f64) -> ShapeFrame {
        ShapeFrame {
            markers: std::array::from_fn(|i| [i as f64 + offset, 0.5 * i as f64]),
        }
    }

    #[test]
    fn marker_error_examples() {
        let a = frame(0.0);
        assert_eq!(marker_errors(&a, &a), [0.0; 30]);
        let mut b = a;
        b.markers[4][0] += 3.0;
        b.markers[4][1] += 4.0;
        let e = marker_errors(&b, &a);
        assert_eq!(e[4], 5.0);
        assert_eq!(e.iter().filter(|&&v| v != 0.0).count(), 1);
        assert!(marker_errors_flat(&[0.0; 59], &[0.0; 60]).is_err());
    }

    #[test]
    fn errors_ignore_common_translation() {
        let (a, b) = (frame(0.0), frame(0.3));
        let shift = |f: ShapeFrame| ShapeFrame {
            markers: f.markers.map(|m| [m[0] - 7.0, m[1] + 2.5]),
        };
        let (e1, e2) = (marker_errors(&a, &b), marker_errors(&shift(a), &shift(b)));
        for (x, y) in e1.iter().zip(&e2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lower_median_convention() {
        assert_eq!(lower_median(&[9.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.0);
        assert!(lower_median(&[]).is_err());
        let s = Summary::of(&[1.0, 2.0, 9.0]).unwrap();
        assert_eq!((s.median, s.max), (2.0, 9.0));
        let c = Summary::of(&[0.7; 5]).unwrap();
        assert_eq!((c.median, c.max), (0.7, 0.7));
    }

    #[test]
    fn aggregate_pools_and_selects_tip() {
        let mut a = [0.1; 30];
        a[29] = 3.0;
        let mut b = [0.2; 30];
        b[29] = 1.0;
        let agg = aggregate(&[a, b]).unwrap();
        assert_eq!(agg.tpe.median, 1.0);
        assert_eq!(agg.tpe.max, 3.0);
        assert_eq!(agg.dse.max, agg.tpe.max);
        // 29 × 0.1 then 29 × 0.2: rank 29 of 60 is the first 0.2
        assert_eq!(agg.dse.median, 0.2);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn false_positive_examples() {
        let row = UncertaintyRow {
            tip_std: 0.2,
            tip_error: 2.0,
            tag: Distribution::Id,
        };
        assert_eq!(false_positive_count(&[], 1.5, 1.0).unwrap(), 0);
        assert_eq!(false_positive_count(&[row], 1.5, 1.0).unwrap(), 1);
        assert_eq!(false_positive_count(&[row], 2.5, 1.0).unwrap(), 0);
        assert!(false_positive_count(&[row], 0.0, 1.0).is_err());
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 25.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // ties receive average ranks: ranks (1.5, 1.5, 3) vs (1, 2, 3)
        let r = spearman(&[5.0, 5.0, 7.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.8660254037844387).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn uncertainty_table_rows() {
        let truth = frame(0.0);
        let zero = McPrediction::from_samples(&[truth.to_flat()]).unwrap();
        let rows = uncertainty_error_table(&[zero.clone(), zero], &[truth, truth], &[Distribution::Id, Distribution::Ood]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.tip_std == 0.0 && r.tip_error == 0.0));
        assert!(uncertainty_error_table(&[], &[truth], &[]).is_err());
        let mut buf = Vec::new();
        write_uncertainty_csv_to(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "tip_std_mm,tip_error_mm,tag\n0,0,id\n0,0,ood\n");
        assert_eq!(read_uncertainty_csv_from(text.as_bytes()).unwrap(), rows);
        assert!(matches!(
            read_uncertainty_csv_from("tip_std_mm,tag\n".as_bytes()),
            Err(Error::MissingColumn(c)) if c == "tip_error_mm"
        ));
    }

    #[test]
    fn scenario_table_groups() {
        let sample = |kind, off: f64| Sample {
            features: WavelengthFrame([0.0; 8]),
            target: frame(off),
            scenario: kind,
            bend_id: 0,
            t: 0.0,
        };
        let samples = vec![
            sample(ScenarioKind::FreespaceLeft, 0.0),
            sample(ScenarioKind::TipRight, 0.0),
            sample(ScenarioKind::TipRight, 1.0),
        ];
        let preds = vec![frame(0.0), frame(0.5), frame(0.5)];
        let rows = scenario_table(&preds, &samples).unwrap();
        let labels: Vec<_> = rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["All", "Freespace", "Obstacles", "TipRight"]);
        assert_eq!(rows[1].metrics.dse.max, 0.0);
        assert_eq!(rows[3].metrics.samples, 2);
        assert_eq!(rows[3].metrics.tpe.max, 0.5);
        assert!(rows.iter().all(|r| r.metrics.tpe.max >= r.metrics.tpe.median));

        let report = EvalReport {
            sections: vec![Section { model: "mlp".into(), split: Distribution::Id, rows }],
            uncertainty: None,
        };
        assert_eq!(EvalReport::from_json(&report.to_json().unwrap()).unwrap(), report);
        assert!(report.render().contains("TipRight"));
    }
}
