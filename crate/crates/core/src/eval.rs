//! Evaluation harness: confusion metrics, fold evaluation, confidence
//! trajectories, parameter sweeps and grid search.
//!
//! A positive is a shadow scan line. Counts are pooled over all frames of an
//! evaluation cell (micro-averaging); ratios with a zero denominator are NaN.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::baseline::{select_kappa, thresh_classify, Kappa, KappaSweep};
use crate::classify::{detect, ScanlineLabels};
use crate::error::{Error, Result};
use crate::frame_io::LabeledFrame;
use crate::params::Params;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub counts: Counts,
    pub acc: f64,
    pub tnr: f64,
    pub tpr: f64,
    pub ppv: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_counts(c: Counts) -> Self {
        Self {
            counts: c,
            acc: ratio(c.tp + c.tn, c.total()),
            tnr: ratio(c.tn, c.tn + c.fp),
            tpr: ratio(c.tp, c.tp + c.fn_),
            ppv: ratio(c.tp, c.tp + c.fp),
        }
    }
}

pub fn confusion_counts(pred: &ScanlineLabels, truth: &ScanlineLabels) -> Result<Counts> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let mut c = Counts::default();
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn confusion(pred: &ScanlineLabels, truth: &ScanlineLabels) -> Result<MetricsReport> {
    Ok(MetricsReport::from_counts(confusion_counts(pred, truth)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Subset {
    Seen,
    Unseen,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Seen => "seen",
            Subset::Unseen => "unseen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldEntry {
    pub frame: String,
    pub group: String,
    pub fold: u32,
    pub subset: Subset,
}

/// Seen/unseen partition of frames for each fold.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FoldSpec {
    pub entries: Vec<FoldEntry>,
}

impl FoldSpec {
    /// Parses `<frame-id> <group-id> <fold#> <seen|unseen>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [frame, group, fold, subset] = fields[..] else {
                return Err(Error::Parse(format!(
                    "fold manifest line {}: expected 4 fields, got {}",
                    n + 1,
                    fields.len()
                )));
            };
            let fold = fold.parse().map_err(|_| {
                Error::Parse(format!("fold manifest line {}: bad fold number {fold:?}", n + 1))
            })?;
            let subset = match subset {
                "seen" => Subset::Seen,
                "unseen" => Subset::Unseen,
                other => {
                    return Err(Error::Parse(format!(
                        "fold manifest line {}: subset must be seen or unseen, got {other:?}",
                        n + 1
                    )))
                }
            };
            entries.push(FoldEntry {
                frame: frame.to_string(),
                group: group.to_string(),
                fold,
                subset,
            });
        }
        let spec = FoldSpec { entries };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            writeln!(out, "{} {} {} {}", e.frame, e.group, e.fold, e.subset.as_str()).unwrap();
        }
        out
    }

    /// Each frame appears at most once per fold, and a group never straddles
    /// seen and unseen within a fold.
    pub fn validate(&self) -> Result<()> {
        let mut frame_seen = BTreeSet::new();
        let mut group_side: BTreeMap<(u32, &str), Subset> = BTreeMap::new();
        for e in &self.entries {
            if !frame_seen.insert((e.fold, e.frame.as_str())) {
                return Err(Error::Parse(format!(
                    "frame {} listed twice in fold {}",
                    e.frame, e.fold
                )));
            }
            if let Some(prev) = group_side.insert((e.fold, e.group.as_str()), e.subset) {
                if prev != e.subset {
                    return Err(Error::Parse(format!(
                        "group {} is split across seen and unseen in fold {}",
                        e.group, e.fold
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn folds(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.fold).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn frames(&self, fold: u32, subset: Subset) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.fold == fold && e.subset == subset)
            .map(|e| e.frame.as_str())
            .collect()
    }

    /// Group-level k-fold split: groups are dealt round-robin (in order of first
    /// appearance) into `k` partitions; fold `f` holds partition `f` out as unseen.
    pub fn group_kfold(frames: &[(String, String)], k: u32) -> Self {
        let mut groups: Vec<&str> = Vec::new();
        for (_, g) in frames {
            if !groups.contains(&g.as_str()) {
                groups.push(g);
            }
        }
        let part = |g: &str| groups.iter().position(|x| *x == g).unwrap() as u32 % k;
        let mut entries = Vec::new();
        for fold in 1..=k {
            for (frame, group) in frames {
                let subset = if part(group) == fold - 1 {
                    Subset::Unseen
                } else {
                    Subset::Seen
                };
                entries.push(FoldEntry {
                    frame: frame.clone(),
                    group: group.clone(),
                    fold,
                    subset,
                });
            }
        }
        FoldSpec { entries }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Topol(Params),
    /// Fixed kappa, or `None` to fit it on each fold's seen frames.
    Thresh { kappa: Option<f64>, crop_rows: usize },
    /// Predicts the ground truth; a harness sanity check.
    Oracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Topol(_) => "topol",
            Method::Thresh { .. } => "thresh",
            Method::Oracle => "oracle",
        }
    }
}

/// Topol predictions for every frame, in input order.
pub fn predict_topol(frames: &[LabeledFrame], params: &Params) -> Result<Vec<ScanlineLabels>> {
    frames
        .par_iter()
        .map(|f| detect(&f.image, params).map(|r| r.labels))
        .collect()
}

pub fn pooled_counts(frames: &[&LabeledFrame], preds: &[&ScanlineLabels]) -> Result<Counts> {
    frames
        .iter()
        .zip(preds)
        .map(|(f, p)| confusion_counts(p, &f.labels))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldRow {
    pub fold: u32,
    pub subset: Subset,
    pub kappa: Option<f64>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub method: String,
    pub rows: Vec<FoldRow>,
    /// Per subset: summed counts and fold-averaged ratios.
    pub averages: Vec<(Subset, MetricsReport)>,
}

fn average(rows: &[&FoldRow]) -> MetricsReport {
    let n = rows.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    MetricsReport {
        counts: rows.iter().map(|r| r.metrics.counts).sum(),
        acc: mean(|m| m.acc),
        tnr: mean(|m| m.tnr),
        tpr: mean(|m| m.tpr),
        ppv: mean(|m| m.ppv),
    }
}

/// Evaluates `method` on each (fold, subset) cell of `folds`.
pub fn evaluate_folds(frames: &[LabeledFrame], folds: &FoldSpec, method: &Method) -> Result<FoldReport> {
    folds.validate()?;
    let index: BTreeMap<&str, usize> = frames.iter().enumerate().map(|(i, f)| (f.id.as_str(), i)).collect();
    let missing: BTreeSet<String> = folds
        .entries
        .iter()
        .filter(|e| !index.contains_key(e.frame.as_str()))
        .map(|e| e.frame.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAnnotations(missing.into_iter().collect()));
    }

    // fold-independent predictions are computed once
    let shared: Option<Vec<ScanlineLabels>> = match method {
        Method::Topol(p) => Some(predict_topol(frames, p)?),
        Method::Oracle => Some(frames.iter().map(|f| f.labels.clone()).collect()),
        Method::Thresh { kappa: Some(k), crop_rows } => {
            let k = Kappa::new(*k)?;
            Some(
                frames
                    .iter()
                    .map(|f| thresh_classify(&f.image, k, *crop_rows))
                    .collect::<Result<_>>()?,
            )
        }
        Method::Thresh { kappa: None, .. } => None,
    };

    let mut rows = Vec::new();
    for fold in folds.folds() {
        let (preds, kappa) = match (&shared, method) {
            (Some(p), Method::Thresh { kappa, .. }) => (p.clone(), *kappa),
            (Some(p), _) => (p.clone(), None),
            (None, Method::Thresh { crop_rows, .. }) => {
                let seen: Vec<LabeledFrame> = folds
                    .frames(fold, Subset::Seen)
                    .iter()
                    .map(|id| frames[index[id]].clone())
                    .collect();
                let fit = select_kappa(&seen, *crop_rows, KappaSweep::default())?;
                let preds = frames
                    .iter()
                    .map(|f| thresh_classify(&f.image, fit.kappa, *crop_rows))
                    .collect::<Result<Vec<_>>>()?;
                (preds, Some(fit.kappa.value()))
            }
            (None, _) => unreachable!("only fitted thresh defers prediction"),
        };
        for subset in [Subset::Seen, Subset::Unseen] {
            let ids = folds.frames(fold, subset);
            if ids.is_empty() {
                continue;
            }
            let fs: Vec<&LabeledFrame> = ids.iter().map(|id| &frames[index[id]]).collect();
            let ps: Vec<&ScanlineLabels> = ids.iter().map(|id| &preds[index[id]]).collect();
            rows.push(FoldRow {
                fold,
                subset,
                kappa,
                metrics: MetricsReport::from_counts(pooled_counts(&fs, &ps)?),
            });
        }
    }

    let averages = [Subset::Seen, Subset::Unseen]
        .into_iter()
        .filter_map(|s| {
            let cell: Vec<&FoldRow> = rows.iter().filter(|r| r.subset == s).collect();
            (!cell.is_empty()).then(|| (s, average(&cell)))
        })
        .collect();

    Ok(FoldReport {
        method: method.name().to_string(),
        rows,
        averages,
    })
}

fn fmt_ratio(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6}")
    }
}

pub const METRICS_HEADER: &str = "fold,subset,method,tp,tn,fp,fn,acc,tnr,tpr,ppv";

fn metrics_cells(m: &MetricsReport) -> String {
    let c = m.counts;
    format!(
        "{},{},{},{},{},{},{},{}",
        c.tp,
        c.tn,
        c.fp,
        c.fn_,
        fmt_ratio(m.acc),
        fmt_ratio(m.tnr),
        fmt_ratio(m.tpr),
        fmt_ratio(m.ppv)
    )
}

impl FoldReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            if let Some(k) = r.kappa {
                writeln!(out, "# fold {} kappa={k}", r.fold).unwrap();
            }
        }
        let mut kappa_lines: Vec<&str> = out.lines().collect();
        kappa_lines.dedup();
        let mut out = kappa_lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        writeln!(out, "{METRICS_HEADER}").unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.fold,
                r.subset.as_str(),
                self.method,
                metrics_cells(&r.metrics)
            )
            .unwrap();
        }
        for (s, m) in &self.averages {
            writeln!(out, "avg,{},{},{}", s.as_str(), self.method, metrics_cells(m)).unwrap();
        }
        out
    }
}

/// Per-frame mean confidence alongside its fitted bell-shaped target.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observed: Vec<f64>,
    pub target: Vec<f64>,
    pub rmse: f64,
}

/// `T_i = m + (M - m) exp(-(i - mu)^2 / (2 s^2))`, `mu = (n-1)/2`, `s = n/6`,
/// where `m` and `M` are the min and max of the observed trajectory.
pub fn fit_normal_target(observed: &[f64]) -> Result<Vec<f64>> {
    let n = observed.len();
    if n < 3 {
        return Err(Error::InvalidParam(format!(
            "trajectory needs at least 3 frames, got {n}"
        )));
    }
    let lo = observed.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mu = (n as f64 - 1.0) / 2.0;
    let s = n as f64 / 6.0;
    Ok((0..n)
        .map(|i| {
            let z = i as f64 - mu;
            (lo + (hi - lo) * (-(z * z) / (2.0 * s * s)).exp()).min(hi)
        })
        .collect())
}

pub fn trajectory_rmse(observed: &[f64], target: &[f64]) -> Result<f64> {
    if observed.len() != target.len() {
        return Err(Error::LengthMismatch(observed.len(), target.len()));
    }
    if observed.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = observed.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / observed.len() as f64).sqrt())
}

pub fn trajectory(observed: Vec<f64>) -> Result<Trajectory> {
    let target = fit_normal_target(&observed)?;
    let rmse = trajectory_rmse(&observed, &target)?;
    Ok(Trajectory {
        observed,
        target,
        rmse,
    })
}

impl Trajectory {
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("frame,mean_conf,target\n");
        for ((name, t_hat), t) in names.iter().zip(&self.observed).zip(&self.target) {
            writeln!(out, "{name},{t_hat},{t}").unwrap();
        }
        writeln!(out, "# rmse={}", self.rmse).unwrap();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub metrics: MetricsReport,
}

pub const SWEEP_HEADER: &str = "param,value,tp,tn,fp,fn,acc,tnr,tpr,ppv";

/// Pooled Topol metrics with `base` parameters and one field overridden per row.
pub fn perturb_sweep(
    frames: &[LabeledFrame],
    param: &str,
    values: &[f64],
    base: &Params,
) -> Result<Vec<SweepRow>> {
    if !crate::params::TUNABLE.contains(&param) {
        return Err(Error::InvalidParam(format!("unknown parameter {param:?}")));
    }
    values
        .iter()
        .map(|&value| {
            let mut p = base.clone();
            p.set(param, value)?;
            Ok(SweepRow {
                param: param.to_string(),
                value,
                metrics: evaluate_topol(frames, &p)?,
            })
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.param, r.value, metrics_cells(&r.metrics)).unwrap();
    }
    out
}

pub fn evaluate_topol(frames: &[LabeledFrame], params: &Params) -> Result<MetricsReport> {
    let preds = predict_topol(frames, params)?;
    let fs: Vec<&LabeledFrame> = frames.iter().collect();
    let ps: Vec<&ScanlineLabels> = preds.iter().collect();
    Ok(MetricsReport::from_counts(pooled_counts(&fs, &ps)?))
}

/// Parameter axes, searched as a cartesian product with the last axis varying fastest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<(String, Vec<f64>)>,
}

impl GridSpec {
    /// Parses `name=v1,v2,...` axes separated by `;` or newlines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes = Vec::new();
        for part in text.split([';', '\n']) {
            let part = part.split('#').next().unwrap_or("").trim();
            if part.is_empty() {
                continue;
            }
            let (name, values) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("grid axis {part:?} lacks '='")))?;
            let name = name.trim();
            if !crate::params::TUNABLE.contains(&name) {
                return Err(Error::InvalidParam(format!("unknown parameter {name:?}")));
            }
            let values = parse_values(values)?;
            axes.push((name.to_string(), values));
        }
        Ok(GridSpec { axes })
    }

    pub fn points(&self, base: &Params) -> Result<Vec<Params>> {
        let mut points = vec![base.clone()];
        for (name, values) in &self.axes {
            let mut next = Vec::with_capacity(points.len() * values.len());
            for p in &points {
                for &v in values {
                    let mut q = p.clone();
                    q.set(name, v)?;
                    next.push(q);
                }
            }
            points = next;
        }
        Ok(points)
    }
}

pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {:?}", v.trim())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub params: Params,
    pub score: f64,
    /// Grid order index of the winner.
    pub index: usize,
    pub scores: Vec<f64>,
}

/// Exhaustive search for the accuracy-maximizing grid point; the earliest point wins ties.
pub fn grid_search(frames: &[LabeledFrame], grid: &GridSpec, base: &Params) -> Result<GridResult> {
    if frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if grid.axes.is_empty() || grid.axes.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::EmptyGrid);
    }
    let points = grid.points(base)?;
    let scores = points
        .iter()
        .map(|p| evaluate_topol(frames, p).map(|m| m.acc))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    Ok(GridResult {
        params: points[best].clone(),
        score: scores[best],
        index: best,
        scores,
    })
}
