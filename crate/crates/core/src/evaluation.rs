//! Inference, confusion counting and visitation-map overlap.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gcnn::{forward, softmax_cross_entropy, FeatureBatch, GcnnModel};
use crate::streamline::{Point3, Streamline, StreamlineSet};
use crate::train::prepare_input;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_VOXEL_SIZE: f64 = 1.0;

const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub id: u64,
    /// Softmax probability of the bundle class.
    pub probability: f64,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    /// In input order, without skipped streamlines.
    pub entries: Vec<Prediction>,
    /// Ids of zero-length streamlines that could not be resampled.
    pub skipped: Vec<u64>,
}

impl Predictions {
    pub fn positive_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().filter(|p| p.label == 1).map(|p| p.id)
    }
}

/// Classifies every streamline of `set` with `model`.
pub fn predict_labels(model: &GcnnModel, set: &StreamlineSet, threshold: f64) -> Result<Predictions> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold must be in [0, 1], got {threshold}")));
    }
    let mut out = Predictions::default();
    let mut ready = Vec::new();
    for s in &set.streamlines {
        if s.arc_length() > 0.0 {
            ready.push(s);
        } else {
            out.skipped.push(s.id);
        }
    }
    for chunk in ready.chunks(PREDICT_CHUNK) {
        let inputs = chunk
            .iter()
            .map(|s| prepare_input(s, &model.normalization, &model.hierarchy))
            .collect::<Result<Vec<_>>>()?;
        let batch = FeatureBatch::from_samples(inputs.iter().map(|a| a.view()))?;
        let (logits, _) = forward(model, &batch)?;
        let (_, probs) = softmax_cross_entropy(logits.view(), &vec![0; chunk.len()])?;
        for (s, p) in chunk.iter().zip(probs.rows()) {
            out.entries.push(Prediction {
                id: s.id,
                probability: p[1],
                label: usize::from(p[1] >= threshold),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            true_negatives: tn,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }
}

/// Tallies `(id, label)` pairs against ground truth aligned by position;
/// ids must agree element-wise.
pub fn confusion_counts(predicted: &[(u64, usize)], truth: &[(u64, usize)]) -> Result<ConfusionCounts> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} ground-truth labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&(pid, p), &(tid, t)) in predicted.iter().zip(truth) {
        if pid != tid {
            return Err(Error::InvalidArgument(format!("prediction id {pid} aligned with truth id {tid}")));
        }
        match (p != 0, t != 0) {
            (true, true) => c.true_positives += 1,
            (true, false) => c.false_positives += 1,
            (false, true) => c.false_negatives += 1,
            (false, false) => c.true_negatives += 1,
        }
    }
    Ok(c)
}

/// `(precision, recall)`; `None` where the denominator is zero.
pub fn precision_recall(c: &ConfusionCounts) -> (Option<f64>, Option<f64>) {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    (
        ratio(c.true_positives, c.true_positives + c.false_positives),
        ratio(c.true_positives, c.true_positives + c.false_negatives),
    )
}

/// Set of voxels visited by at least one streamline.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationMap {
    voxel_size: f64,
    voxels: BTreeSet<[i64; 3]>,
}

impl VisitationMap {
    pub fn new(voxel_size: f64) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidArgument(format!("voxel size must be positive, got {voxel_size}")));
        }
        Ok(Self {
            voxel_size,
            voxels: BTreeSet::new(),
        })
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn voxels(&self) -> &BTreeSet<[i64; 3]> {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxel_of(&self, p: &Point3) -> [i64; 3] {
        let v = self.voxel_size;
        [(p.x / v).floor() as i64, (p.y / v).floor() as i64, (p.z / v).floor() as i64]
    }

    pub fn mark(&mut self, p: &Point3) {
        let idx = self.voxel_of(p);
        self.voxels.insert(idx);
    }

    /// Marks points along `s` no further than `step` apart, endpoints included.
    pub fn mark_streamline(&mut self, s: &Streamline, step: f64) {
        if let Some(first) = s.points.first() {
            self.mark(first);
        }
        for w in s.points.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let pieces = (a.distance(b) / step).ceil().max(1.0) as usize;
            for i in 1..=pieces {
                self.mark(&a.lerp(b, i as f64 / pieces as f64));
            }
        }
    }
}

/// Visitation map of `streamlines`, supersampling every segment at
/// arc-length steps of at most half a voxel.
pub fn voxelize_streamlines<'a>(
    streamlines: impl IntoIterator<Item = &'a Streamline>,
    voxel_size: f64,
) -> Result<VisitationMap> {
    let mut map = VisitationMap::new(voxel_size)?;
    for s in streamlines {
        map.mark_streamline(s, voxel_size / 2.0);
    }
    Ok(map)
}

/// `2 |A ∩ B| / (|A| + |B|)`; two empty maps score 1.
pub fn dice_score(a: &VisitationMap, b: &VisitationMap) -> Result<f64> {
    if a.voxel_size != b.voxel_size {
        return Err(Error::InvalidArgument(format!(
            "voxel sizes differ: {} vs {}",
            a.voxel_size, b.voxel_size
        )));
    }
    if a.is_empty() && b.is_empty() {
        return Ok(1.0);
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let common = small.voxels.iter().filter(|v| large.voxels.contains(*v)).count();
    Ok(2.0 * common as f64 / (a.len() + b.len()) as f64)
}

/// Scores of one bundle detector on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleResult {
    pub bundle: String,
    pub subject: String,
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub dice: f64,
    pub skipped: Vec<u64>,
}

/// Mean and population standard deviation over the subjects where a metric
/// is defined; `None` if it is defined nowhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

pub fn summarize(values: impl IntoIterator<Item = Option<f64>>) -> Summary {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return Summary { mean: None, sd: None };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Summary {
        mean: Some(mean),
        sd: Some(var.sqrt()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleSummary {
    pub bundle: String,
    pub precision: Summary,
    pub recall: Summary,
    pub dice: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// Bundle-major, subjects in input order.
    pub results: Vec<BundleResult>,
    /// One per bundle, in model order.
    pub summaries: Vec<BundleSummary>,
}

/// Formats `v` with six significant digits, `nan` when undefined.
pub fn fmt_sig6(v: Option<f64>) -> String {
    match v {
        None => "nan".into(),
        Some(x) if !x.is_finite() => "nan".into(),
        Some(0.0) => "0.00000".into(),
        Some(x) => {
            let mag = x.abs().log10().floor() as i32;
            if (-4..6).contains(&mag) {
                format!("{x:.prec$}", prec = (5 - mag).max(0) as usize)
            } else {
                format!("{x:.5e}")
            }
        }
    }
}

impl EvaluationReport {
    /// `bundle subject TP FP FN TN precision recall dice` lines, then
    /// `bundle MEAN ...` and `bundle SD ...` per bundle.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let c = &r.counts;
            writeln!(
                out,
                "{} {} {} {} {} {} {} {} {}",
                r.bundle,
                r.subject,
                c.true_positives,
                c.false_positives,
                c.false_negatives,
                c.true_negatives,
                fmt_sig6(r.precision),
                fmt_sig6(r.recall),
                fmt_sig6(Some(r.dice))
            )
            .unwrap();
        }
        for s in &self.summaries {
            for (tag, pick) in [("MEAN", 0), ("SD", 1)] {
                let f = |m: &Summary| if pick == 0 { m.mean } else { m.sd };
                writeln!(
                    out,
                    "{} {tag} {} {} {}",
                    s.bundle,
                    fmt_sig6(f(&s.precision)),
                    fmt_sig6(f(&s.recall)),
                    fmt_sig6(f(&s.dice))
                )
                .unwrap();
            }
        }
        out
    }
}

/// Runs every model on every test set and scores it against the labels.
///
/// `subjects` pairs a name (no whitespace) with a labeled set. Dice compares
/// the visitation map of predicted positives with that of the true bundle.
pub fn evaluate_report(
    models: &[GcnnModel],
    subjects: &[(String, StreamlineSet)],
    voxel_size: f64,
    threshold: f64,
) -> Result<EvaluationReport> {
    VisitationMap::new(voxel_size)?;
    for (name, _) in subjects {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("subject name `{name}` must be non-empty without whitespace")));
        }
    }
    for m in models {
        let present = subjects.iter().any(|(_, set)| set.with_label(&m.bundle).next().is_some());
        if !present {
            return Err(Error::MissingBundle(m.bundle.clone()));
        }
    }

    let mut results = Vec::new();
    let mut summaries = Vec::new();
    for model in models {
        let first = results.len();
        for (subject, set) in subjects {
            let preds = predict_labels(model, set, threshold)?;
            let by_id: HashMap<u64, &Streamline> = set.streamlines.iter().map(|s| (s.id, s)).collect();
            let predicted: Vec<(u64, usize)> = preds.entries.iter().map(|p| (p.id, p.label)).collect();
            let truth: Vec<(u64, usize)> = preds
                .entries
                .iter()
                .map(|p| (p.id, usize::from(by_id[&p.id].label.as_deref() == Some(model.bundle.as_str()))))
                .collect();
            let counts = confusion_counts(&predicted, &truth)?;
            let (precision, recall) = precision_recall(&counts);

            let predicted_map = voxelize_streamlines(preds.positive_ids().map(|id| by_id[&id]), voxel_size)?;
            let truth_map = voxelize_streamlines(set.with_label(&model.bundle), voxel_size)?;
            results.push(BundleResult {
                bundle: model.bundle.clone(),
                subject: subject.clone(),
                counts,
                precision,
                recall,
                dice: dice_score(&predicted_map, &truth_map)?,
                skipped: preds.skipped,
            });
        }
        let mine = &results[first..];
        summaries.push(BundleSummary {
            bundle: model.bundle.clone(),
            precision: summarize(mine.iter().map(|r| r.precision)),
            recall: summarize(mine.iter().map(|r| r.recall)),
            dice: summarize(mine.iter().map(|r| Some(r.dice))),
        });
    }
    Ok(EvaluationReport { results, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: u64, a: [f64; 3], b: [f64; 3], label: Option<&str>) -> Streamline {
        Streamline::new(id, vec![Point3::from_array(a), Point3::from_array(b)], label.map(String::from)).unwrap()
    }

    fn tiny_model() -> GcnnModel {
        use crate::gcnn::{build_hierarchy, init_model, Architecture};
        let arch = Architecture {
            num_nodes: 8,
            num_levels: 3,
            conv1_channels: 2,
            conv2_channels: 2,
            hidden: 3,
            classes: 2,
        };
        let norm = crate::streamline::NormalizationTransform::identity();
        init_model(build_hierarchy(&arch).unwrap(), arch, 0, norm, "b").unwrap()
    }

    #[test]
    fn predictions_skip_degenerate_streamlines() {
        let m = tiny_model();
        let set = StreamlineSet::new(
            vec![
                line(4, [0.0; 3], [1.0, 0.0, 0.0], None),
                line(7, [1.0; 3], [1.0; 3], None),
                line(9, [0.0; 3], [0.0, -1.0, 0.5], Some("b")),
            ],
            "t",
        )
        .unwrap();
        let p = predict_labels(&m, &set, 0.5).unwrap();
        assert_eq!(p.skipped, vec![7]);
        assert_eq!(p.entries.iter().map(|e| e.id).collect::<Vec<_>>(), vec![4, 9]);
        for e in &p.entries {
            assert!(e.probability > 0.0 && e.probability < 1.0);
            assert_eq!(e.label, usize::from(e.probability >= 0.5));
        }
        assert_eq!(p, predict_labels(&m, &set, 0.5).unwrap());
        let none = predict_labels(&m, &StreamlineSet::new(vec![], "e").unwrap(), 0.5).unwrap();
        assert!(none.entries.is_empty() && none.skipped.is_empty());
        let all = predict_labels(&m, &set, 0.0).unwrap();
        assert!(all.entries.iter().all(|e| e.label == 1));
    }

    #[test]
    fn report_requires_bundle() {
        let m = tiny_model();
        let set = StreamlineSet::new(vec![line(0, [0.0; 3], [1.0; 3], Some("other"))], "t").unwrap();
        let err = evaluate_report(&[m], &[("s1".into(), set)], 1.0, 0.5);
        assert!(matches!(err, Err(Error::MissingBundle(b)) if b == "b"));
    }

    #[test]
    fn confusion_examples() {
        let truth: Vec<(u64, usize)> = (0..20).map(|i| (i, usize::from(i < 10))).collect();
        assert_eq!(confusion_counts(&truth, &truth).unwrap(), ConfusionCounts::new(10, 0, 0, 10));
        let inverted: Vec<(u64, usize)> = truth.iter().map(|&(i, l)| (i, 1 - l)).collect();
        assert_eq!(confusion_counts(&inverted, &truth).unwrap(), ConfusionCounts::new(0, 10, 10, 0));
        let shifted: Vec<(u64, usize)> = truth.iter().map(|&(i, l)| (i + 1, l)).collect();
        assert!(confusion_counts(&shifted, &truth).is_err());
        assert!(confusion_counts(&truth[..3], &truth).is_err());
    }

    #[test]
    fn published_counts() {
        let c = ConfusionCounts::new(4755, 244, 54, 0);
        let (p, r) = precision_recall(&c);
        assert!((p.unwrap() - 0.95119).abs() < 1e-5);
        assert!((r.unwrap() - 0.98878).abs() < 1e-5);
        assert_eq!(c.true_positives + c.false_negatives, 4809);
    }

    #[test]
    fn undefined_ratios() {
        assert_eq!(precision_recall(&ConfusionCounts::new(0, 0, 5, 5)), (None, Some(0.0)));
        assert_eq!(precision_recall(&ConfusionCounts::new(3, 0, 0, 1)), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn voxel_trace() {
        let s = line(0, [0.5, 0.5, 0.5], [3.5, 0.5, 0.5], None);
        let m = voxelize_streamlines([&s], 1.0).unwrap();
        let want: BTreeSet<[i64; 3]> = (0..4).map(|i| [i, 0, 0]).collect();
        assert_eq!(m.voxels(), &want);

        let dup = line(1, [2.2, -0.1, 7.9], [2.2, -0.1, 7.9], None);
        assert_eq!(voxelize_streamlines([&dup], 1.0).unwrap().voxels().iter().next(), Some(&[2, -1, 7]));
        assert!(voxelize_streamlines(std::iter::empty(), 1.0).unwrap().is_empty());
        assert!(voxelize_streamlines([&s], 0.0).is_err());
    }

    #[test]
    fn dice_examples() {
        let map = |pts: &[[f64; 3]]| {
            let mut m = VisitationMap::new(1.0).unwrap();
            for p in pts {
                m.mark(&Point3::from_array(*p));
            }
            m
        };
        let a = map(&[[0.5, 0.5, 0.5], [1.5, 0.5, 0.5]]);
        let b = map(&[[1.5, 0.5, 0.5], [2.5, 0.5, 0.5]]);
        let c = map(&[[9.5, 0.5, 0.5]]);
        let empty = map(&[]);
        assert_eq!(dice_score(&a, &a).unwrap(), 1.0);
        assert_eq!(dice_score(&a, &b).unwrap(), 0.5);
        assert_eq!(dice_score(&a, &c).unwrap(), 0.0);
        assert_eq!(dice_score(&empty, &empty).unwrap(), 1.0);
        assert_eq!(dice_score(&a, &empty).unwrap(), 0.0);
        let other = VisitationMap::new(2.0).unwrap();
        assert!(dice_score(&a, &other).is_err());
    }

    #[test]
    fn summary_statistics() {
        let s = summarize([Some(0.9), Some(1.0), None]);
        assert!((s.mean.unwrap() - 0.95).abs() < 1e-15);
        assert!((s.sd.unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(summarize([None]), Summary { mean: None, sd: None });
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(Some(0.951190)), "0.951190");
        assert_eq!(fmt_sig6(Some(1.0)), "1.00000");
        assert_eq!(fmt_sig6(Some(0.05)), "0.0500000");
        assert_eq!(fmt_sig6(Some(0.0)), "0.00000");
        assert_eq!(fmt_sig6(None), "nan");
        assert_eq!(fmt_sig6(Some(123456.0)), "123456");
        assert_eq!(fmt_sig6(Some(1234567.0)), "1.23457e6");
    }
}
