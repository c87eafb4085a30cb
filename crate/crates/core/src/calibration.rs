//! ROC/AUC, informedness operating points, the piecewise-linear calibration
//! map that pins each operating point to 0.5, and output alignment.

use serde_json::{json, Map, Value};

use crate::dataset::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::taxonomy::{Pathology, TriState};

/// Lowest operating point kept after clamping.
pub const OPT_MIN: f64 = 1e-6;
/// Highest operating point kept after clamping.
pub const OPT_MAX: f64 = 1.0 - 1e-6;

/// Scores in `[0,1]` with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Domain(format!("score {s} outside [0,1]")));
        }
        Ok(ScoredSet { scores, labels })
    }

    /// Drop rows whose label is unknown.
    pub fn from_tristate(scores: &[f64], labels: &[TriState]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
        }
        let (s, l) = scores.iter().zip(labels).filter_map(|(&s, t)| t.as_bool().map(|b| (s, b))).unzip();
        ScoredSet::new(s, l)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    fn check_two_classes(&self) -> Result<(usize, usize)> {
        let (p, n) = (self.positives(), self.negatives());
        if p == 0 || n == 0 {
            return Err(Error::SingleClass);
        }
        Ok((p, n))
    }

    /// `(score, positives, negatives)` per distinct score, highest first.
    fn groups_desc(&self) -> Vec<(f64, usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut out: Vec<(f64, usize, usize)> = Vec::new();
        for i in order {
            let s = self.scores[i];
            match out.last_mut() {
                Some(g) if g.0 == s => {}
                _ => out.push((s, 0, 0)),
            }
            let g = out.last_mut().unwrap();
            if self.labels[i] {
                g.1 += 1;
            } else {
                g.2 += 1;
            }
        }
        out
    }
}

/// Points of the ROC curve, thresholds descending. The first threshold is
/// `+inf` at `(0,0)`, the last `-inf` at `(1,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.fpr.windows(2).zip(self.tpr.windows(2)).map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0).sum()
    }
}

/// TPR and FPR at every distinct score used as a `score >= t` threshold.
pub fn roc(set: &ScoredSet) -> Result<RocCurve> {
    let (p, n) = set.check_two_classes()?;
    let mut curve = RocCurve { thresholds: vec![f64::INFINITY], tpr: vec![0.0], fpr: vec![0.0] };
    let (mut tp, mut fp) = (0, 0);
    for (s, gp, gn) in set.groups_desc() {
        tp += gp;
        fp += gn;
        curve.thresholds.push(s);
        curve.tpr.push(tp as f64 / p as f64);
        curve.fpr.push(fp as f64 / n as f64);
    }
    curve.thresholds.push(f64::NEG_INFINITY);
    curve.tpr.push(1.0);
    curve.fpr.push(1.0);
    Ok(curve)
}

/// Twice the Mann-Whitney U statistic of the positives, from tie-averaged
/// ranks. Equals `2·correct + ties` over all positive-negative pairs.
fn doubled_u(set: &ScoredSet) -> u128 {
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && set.scores[order[end]] == set.scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean; doubled it is start + end + 1
        let doubled_rank = (start + end + 1) as u128;
        let pos = order[start..end].iter().filter(|&&i| set.labels[i]).count() as u128;
        doubled_rank_sum += doubled_rank * pos;
        start = end;
    }
    let p = set.positives() as u128;
    doubled_rank_sum - p * (p + 1)
}

/// Probability a random positive outranks a random negative, ties counting
/// one half.
pub fn auc(set: &ScoredSet) -> Result<f64> {
    let (p, n) = set.check_two_classes()?;
    Ok(doubled_u(set) as f64 / (2 * p as u128 * n as u128) as f64)
}

/// Score threshold maximizing TPR − FPR; the largest one on ties. Clamped
/// to `[1e-6, 1 − 1e-6]`.
pub fn op_point(set: &ScoredSet) -> Result<f64> {
    let (p, n) = set.check_two_classes()?;
    let (p, n) = (p as i128, n as i128);
    let (mut tp, mut fp) = (0i128, 0i128);
    let mut best: Option<(i128, f64)> = None;
    for (s, gp, gn) in set.groups_desc() {
        tp += gp as i128;
        fp += gn as i128;
        // J·P·N, exact
        let j = tp * n - fp * p;
        if best.is_none_or(|(b, _)| j > b) {
            best = Some((j, s));
        }
    }
    let opt = best.expect("non-empty set").1;
    let clamped = opt.clamp(OPT_MIN, OPT_MAX);
    if clamped != opt {
        log::warn!("operating point {opt} clamped to {clamped}");
    }
    Ok(clamped)
}

/// Calibration map sending `opt` to 0.5 and fixing 0 and 1.
pub fn apply_opt(x: f64, opt: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("score {x} outside [0,1]")));
    }
    if !(opt > 0.0 && opt < 1.0) {
        return Err(Error::Domain(format!("operating point {opt} outside (0,1)")));
    }
    Ok(if x <= opt { x / (2.0 * opt) } else { 1.0 - (1.0 - x) / (2.0 * (1.0 - opt)) })
}

/// Pair model outputs with their pathology names, in `target` order.
/// Pathologies the model does not predict map to NaN.
pub fn align_outputs(
    pathologies: &[Pathology],
    predictions: &[f64],
    target: &[Pathology],
) -> Result<Vec<(Pathology, f64)>> {
    if pathologies.len() != predictions.len() {
        return Err(Error::LengthMismatch { left: pathologies.len(), right: predictions.len() });
    }
    Ok(target
        .iter()
        .map(|t| {
            let v = pathologies.iter().position(|p| p == t).map_or(f64::NAN, |i| predictions[i]);
            (t.clone(), v)
        })
        .collect())
}

/// Operating point per pathology.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationParams {
    opts: Vec<(Pathology, f64)>,
}

impl CalibrationParams {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace; `opt` must lie in `(0,1)`.
    pub fn insert(&mut self, p: Pathology, opt: f64) -> Result<()> {
        if !(opt > 0.0 && opt < 1.0) {
            return Err(Error::Domain(format!("operating point {opt} for {p} outside (0,1)")));
        }
        match self.opts.iter_mut().find(|(q, _)| *q == p) {
            Some(e) => e.1 = opt,
            None => self.opts.push((p, opt)),
        }
        Ok(())
    }

    pub fn get(&self, p: &Pathology) -> Option<f64> {
        self.opts.iter().find(|(q, _)| q == p).map(|(_, o)| *o)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Pathology, f64)> {
        self.opts.iter().map(|(p, o)| (p, *o))
    }

    pub fn len(&self) -> usize {
        self.opts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opts.is_empty()
    }

    /// Fit one operating point per named scored set.
    pub fn fit(sets: &[(Pathology, ScoredSet)]) -> Result<Self> {
        let mut params = Self::new();
        for (p, s) in sets {
            params.insert(p.clone(), op_point(s)?)?;
        }
        Ok(params)
    }

    pub fn calibrate(&self, p: &Pathology, x: f64) -> Result<f64> {
        let opt =
            self.get(p).ok_or_else(|| Error::InvalidArgument(format!("no operating point for `{p}`")))?;
        apply_opt(x, opt)
    }

    /// `{"format_version": 1, "opts": {"Effusion": 0.31, ...}}`
    pub fn to_json(&self) -> Value {
        let opts: Map<String, Value> = self.opts.iter().map(|(p, o)| (p.to_string(), json!(o))).collect();
        json!({"format_version": FORMAT_VERSION, "opts": opts})
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("calibration params: {m}"));
        match v.get("format_version").and_then(Value::as_u64) {
            Some(f) if f == FORMAT_VERSION as u64 => {}
            Some(f) => return Err(bad(&format!("unsupported format_version {f}"))),
            None => return Err(bad("missing format_version")),
        }
        let opts = v.get("opts").and_then(Value::as_object).ok_or_else(|| bad("missing `opts` object"))?;
        let mut params = Self::new();
        for (name, o) in opts {
            let o = o.as_f64().ok_or_else(|| bad(&format!("`{name}` is not a number")))?;
            params.insert(Pathology::new(name)?, o)?;
        }
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::cmp::Ordering;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredSet {
        ScoredSet::new(scores.to_vec(), labels.iter().map(|&l| l == 1).collect()).unwrap()
    }

    /// Brute force: `(2·correct + ties) / (2PN)` over all pairs.
    fn auc_oracle(s: &ScoredSet) -> f64 {
        let (mut num, mut p, mut n) = (0u64, 0u64, 0u64);
        for i in 0..s.len() {
            if !s.labels()[i] {
                continue;
            }
            p += 1;
            for j in 0..s.len() {
                if s.labels()[j] {
                    continue;
                }
                num += match s.scores()[i].partial_cmp(&s.scores()[j]).unwrap() {
                    Ordering::Greater => 2,
                    Ordering::Equal => 1,
                    Ordering::Less => 0,
                };
            }
        }
        n += s.negatives() as u64;
        num as f64 / (2 * p * n) as f64
    }

    /// Exhaustive: J at every score, pick the max, largest threshold on ties.
    fn op_oracle(s: &ScoredSet) -> f64 {
        let (p, n) = (s.positives() as f64, s.negatives() as f64);
        let mut best = (f64::NEG_INFINITY, 0.0);
        for &t in s.scores() {
            let tp = (0..s.len()).filter(|&i| s.labels()[i] && s.scores()[i] >= t).count() as f64;
            let fp = (0..s.len()).filter(|&i| !s.labels()[i] && s.scores()[i] >= t).count() as f64;
            let j = tp / p - fp / n;
            if j > best.0 + 1e-12 || ((j - best.0).abs() <= 1e-12 && t > best.1) {
                best = (j, t);
            }
        }
        best.1.clamp(OPT_MIN, OPT_MAX)
    }

    #[test]
    fn roc_examples() {
        let c = roc(&set(&[0.2, 0.3, 0.6, 0.9], &[0, 0, 1, 1])).unwrap();
        let k = c.thresholds.iter().position(|&t| t == 0.6).unwrap();
        assert_eq!((c.fpr[k], c.tpr[k]), (0.0, 1.0));
        assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
        assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));

        let flat = roc(&set(&[0.4, 0.4, 0.4], &[0, 1, 1])).unwrap();
        assert_eq!(flat.thresholds.len(), 3);
        assert_eq!((flat.fpr[1], flat.tpr[1]), (1.0, 1.0));

        assert!(matches!(roc(&set(&[0.1, 0.2], &[1, 1])), Err(Error::SingleClass)));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&set(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(auc(&set(&[0.5; 4], &[0, 1, 0, 1])).unwrap(), 0.5);
        assert_eq!(auc(&set(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])).unwrap(), 0.75);
    }

    #[test]
    fn op_point_examples() {
        assert_eq!(op_point(&set(&[0.2, 0.3, 0.6, 0.9], &[0, 0, 1, 1])).unwrap(), 0.6);
        assert_eq!(op_point(&set(&[0.1, 0.9], &[1, 0])).unwrap(), 0.1);
        assert_eq!(op_point(&set(&[0.2, 1.0], &[0, 1])).unwrap(), OPT_MAX);
        assert_eq!(op_point(&set(&[0.0, 1.0], &[1, 0])).unwrap(), OPT_MIN);
    }

    #[test]
    fn apply_opt_examples() {
        assert_eq!(apply_opt(0.1, 0.2).unwrap(), 0.25);
        assert_eq!(apply_opt(0.9, 0.2).unwrap(), 0.9375);
        assert_eq!(apply_opt(0.3, 0.3).unwrap(), 0.5);
        assert_eq!(apply_opt(0.0, 0.7).unwrap(), 0.0);
        assert_eq!(apply_opt(1.0, 0.7).unwrap(), 1.0);
        assert!(matches!(apply_opt(1.5, 0.5), Err(Error::Domain(_))));
        assert!(matches!(apply_opt(0.5, 0.0), Err(Error::Domain(_))));
        assert!(matches!(apply_opt(f64::NAN, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn align_examples() {
        let ps = |v: &[&str]| v.iter().map(|s| Pathology::new(s).unwrap()).collect::<Vec<_>>();
        let model = ps(&["Atelectasis", "Consolidation"]);
        let out = align_outputs(&model, &[0.36, 0.72], &model).unwrap();
        assert_eq!(out, vec![(model[0].clone(), 0.36), (model[1].clone(), 0.72)]);
        let out = align_outputs(&model, &[0.36, 0.72], &ps(&["Hernia", "Atelectasis"])).unwrap();
        assert!(out[0].1.is_nan());
        assert_eq!(out[1].1, 0.36);
        assert!(matches!(
            align_outputs(&ps(&["A", "B", "C"]), &[0.1, 0.2], &model),
            Err(Error::LengthMismatch { left: 3, right: 2 })
        ));
    }

    #[test]
    fn params_json_round_trip() {
        let mut p = CalibrationParams::new();
        p.insert(Pathology::new("Effusion").unwrap(), 0.3).unwrap();
        p.insert(Pathology::new("Atelectasis").unwrap(), 0.6).unwrap();
        let back = CalibrationParams::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        assert!(p.insert(Pathology::new("Mass").unwrap(), 1.0).is_err());
        assert!(CalibrationParams::from_json(&json!({"opts": {}})).is_err());
    }

    fn scored_set() -> impl Strategy<Value = ScoredSet> {
        // coarse scores force plenty of ties
        prop::collection::vec((0u8..=20, any::<bool>()), 2..120)
            .prop_filter("two classes", |v| v.iter().any(|x| x.1) && v.iter().any(|x| !x.1))
            .prop_map(|v| {
                let (s, l) = v.into_iter().map(|(s, l)| (s as f64 / 20.0, l)).unzip();
                ScoredSet::new(s, l).unwrap()
            })
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_oracle(s in scored_set()) {
            prop_assert_eq!(auc(&s).unwrap(), auc_oracle(&s));
        }

        #[test]
        fn auc_matches_trapezoid(s in scored_set()) {
            prop_assert!((auc(&s).unwrap() - roc(&s).unwrap().area()).abs() < 1e-12);
        }

        #[test]
        fn op_point_matches_exhaustive_search(s in scored_set()) {
            prop_assert_eq!(op_point(&s).unwrap(), op_oracle(&s));
        }

        #[test]
        fn roc_is_monotone(s in scored_set()) {
            let c = roc(&s).unwrap();
            prop_assert!(c.tpr.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.fpr.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.thresholds.windows(2).all(|w| w[0] > w[1]));
        }

        #[test]
        fn apply_opt_is_increasing_and_onto(x in 0.0f64..=1.0, y in 0.0f64..=1.0, opt in 0.001f64..0.999) {
            let (fx, fy) = (apply_opt(x, opt).unwrap(), apply_opt(y, opt).unwrap());
            prop_assert!((0.0..=1.0).contains(&fx));
            if x < y { prop_assert!(fx <= fy); }
            prop_assert_eq!(apply_opt(opt, opt).unwrap(), 0.5);
        }

        #[test]
        fn calibration_keeps_auc(s in scored_set(), opt in 0.01f64..0.99) {
            let cal: Vec<f64> = s.scores().iter().map(|&x| apply_opt(x, opt).unwrap()).collect();
            let c = ScoredSet::new(cal, s.labels().to_vec()).unwrap();
            prop_assert_eq!(auc(&c).unwrap(), auc(&s).unwrap());
        }
    }
}
