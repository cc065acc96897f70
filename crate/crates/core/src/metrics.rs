//! Multi-label evaluation over per-transcript label sets.
//!
//! A corpus maps transcript ids to label sets. Metrics are computed on
//! binary indicator matrices whose columns are the target's categories in
//! schema order followed by any off-taxonomy labels, sorted. All sums run
//! in a fixed order (ids ascending, then columns) so results do not
//! depend on evaluation order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::LabelSet;
use crate::taxonomy::{GuidelineSchema, TargetId};

pub type LabelCorpus = BTreeMap<String, LabelSet>;

/// Column name of the derived binary presence target.
pub const PRESENT: &str = "Present";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("corpora cover different transcripts (first mismatch: `{0}`)")]
    MismatchedTranscripts(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Ordered indicator columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub columns: Vec<String>,
}

impl LabelSpace {
    pub fn new(columns: Vec<String>) -> Self {
        LabelSpace { columns }
    }

    /// Schema categories for `target`, extended by any other label that
    /// occurs in `corpora`.
    pub fn for_target(schema: &GuidelineSchema, target: TargetId, corpora: &[&LabelCorpus]) -> Self {
        let mut columns = schema.label_names(target);
        let known: BTreeSet<String> = columns.iter().cloned().collect();
        let extras: BTreeSet<String> = corpora
            .iter()
            .flat_map(|c| c.values())
            .flat_map(|s| s.iter())
            .filter(|l| !known.contains(*l))
            .cloned()
            .collect();
        columns.extend(extras);
        LabelSpace { columns }
    }

    /// The single column of the presence target.
    pub fn presence() -> Self {
        LabelSpace {
            columns: vec![PRESENT.to_owned()],
        }
    }

    /// Extend with labels from `corpora` that are not yet columns.
    pub fn extended(&self, corpora: &[&LabelCorpus]) -> Self {
        let known: BTreeSet<&String> = self.columns.iter().collect();
        let extras: BTreeSet<String> = corpora
            .iter()
            .flat_map(|c| c.values())
            .flat_map(|s| s.iter())
            .filter(|l| !known.contains(l))
            .cloned()
            .collect();
        let mut columns = self.columns.clone();
        columns.extend(extras);
        LabelSpace { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Row-major 0/1 matrix: one row per transcript (id order), one column
/// per label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<bool>,
}

impl IndicatorMatrix {
    pub fn build(corpus: &LabelCorpus, space: &LabelSpace) -> Self {
        let mut cells = Vec::with_capacity(corpus.len() * space.len());
        for set in corpus.values() {
            cells.extend(space.columns.iter().map(|c| set.contains(c)));
        }
        IndicatorMatrix {
            rows: corpus.keys().cloned().collect(),
            columns: space.columns.clone(),
            cells,
        }
    }

    pub fn column(&self, j: usize) -> Vec<bool> {
        let w = self.columns.len();
        (0..self.rows.len()).map(|i| self.cells[i * w + j]).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    fn tally(&mut self, gold: bool, pred: bool) {
        match (gold, pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// Precision, recall, F1; a zero denominator yields 0 and sets the
    /// degenerate flag.
    pub fn prf(&self) -> Prf {
        let (tp, fp, fn_) = (self.tp as f64, self.fp as f64, self.fn_ as f64);
        let degenerate = self.tp + self.fp == 0 || self.tp + self.fn_ == 0;
        let precision = if self.tp + self.fp == 0 { 0.0 } else { tp / (tp + fp) };
        let recall = if self.tp + self.fn_ == 0 { 0.0 } else { tp / (tp + fn_) };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            degenerate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

fn check_aligned(a: &LabelCorpus, b: &LabelCorpus) -> Result<(), MetricsError> {
    if let Some(id) = a.keys().find(|k| !b.contains_key(*k)) {
        return Err(MetricsError::MismatchedTranscripts(id.clone()));
    }
    if let Some(id) = b.keys().find(|k| !a.contains_key(*k)) {
        return Err(MetricsError::MismatchedTranscripts(id.clone()));
    }
    Ok(())
}

/// Cell-level confusion counts over the whole indicator matrix.
pub fn confusion(gold: &LabelCorpus, pred: &LabelCorpus, space: &LabelSpace) -> Result<ConfusionCounts, MetricsError> {
    check_aligned(gold, pred)?;
    let space = space.extended(&[gold, pred]);
    let mut c = ConfusionCounts::default();
    for (id, g) in gold {
        let p = &pred[id];
        for col in &space.columns {
            c.tally(g.contains(col), p.contains(col));
        }
    }
    Ok(c)
}

/// Per-column confusion counts, in column order.
pub fn per_label_confusion(
    gold: &LabelCorpus,
    pred: &LabelCorpus,
    space: &LabelSpace,
) -> Result<Vec<(String, ConfusionCounts)>, MetricsError> {
    check_aligned(gold, pred)?;
    let space = space.extended(&[gold, pred]);
    Ok(space
        .columns
        .iter()
        .map(|col| {
            let mut c = ConfusionCounts::default();
            for (id, g) in gold {
                c.tally(g.contains(col), pred[id].contains(col));
            }
            (col.clone(), c)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroPrf {
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub prf: Prf,
}

/// Micro-averaged precision, recall and F1 over all (transcript, label)
/// cells.
pub fn micro_prf(gold: &LabelCorpus, pred: &LabelCorpus, space: &LabelSpace) -> Result<MicroPrf, MetricsError> {
    let counts = confusion(gold, pred, space)?;
    Ok(MicroPrf {
        counts,
        prf: counts.prf(),
    })
}

/// Per-transcript set F1 averaged over transcripts; a transcript where
/// both sets are empty scores 1.
pub fn example_f1(gold: &LabelCorpus, pred: &LabelCorpus) -> Result<f64, MetricsError> {
    check_aligned(gold, pred)?;
    if gold.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut sum = 0.0;
    for (id, g) in gold {
        let p = &pred[id];
        let denom = g.len() + p.len();
        sum += if denom == 0 {
            1.0
        } else {
            2.0 * g.intersection_len(p) as f64 / denom as f64
        };
    }
    Ok(sum / gold.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    /// `None` when undefined.
    pub value: Option<f64>,
    /// Both raters constant and equal; chance agreement is 1.
    pub constant_raters: bool,
}

/// Cohen's kappa for two binary raters.
pub fn cohen_kappa_binary(a: &[bool], b: &[bool]) -> Result<Kappa, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let n = a.len() as u64;
    let (mut agree, mut a1, mut b1) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.iter().zip(b) {
        agree += u64::from(x == y);
        a1 += u64::from(x);
        b1 += u64::from(y);
    }
    Ok(kappa_from_counts(n, agree, a1, b1))
}

fn kappa_from_counts(n: u64, agree: u64, a1: u64, b1: u64) -> Kappa {
    let constant = (a1 == 0 || a1 == n) && (b1 == 0 || b1 == n);
    if constant && a1 == b1 {
        // Chance agreement is 1; identical constant raters.
        return Kappa {
            value: Some(1.0),
            constant_raters: true,
        };
    }
    let nf = n as f64;
    let p_o = agree as f64 / nf;
    let (a0, b0) = ((n - a1) as f64, (n - b1) as f64);
    let p_e = (a1 as f64 * b1 as f64 + a0 * b0) / (nf * nf);
    Kappa {
        value: Some((p_o - p_e) / (1.0 - p_e)),
        constant_raters: constant,
    }
}

/// Kappa on the flattened indicator matrices.
pub fn micro_kappa(a: &LabelCorpus, b: &LabelCorpus, space: &LabelSpace) -> Result<Kappa, MetricsError> {
    check_aligned(a, b)?;
    let space = space.extended(&[a, b]);
    let ma = IndicatorMatrix::build(a, &space);
    let mb = IndicatorMatrix::build(b, &space);
    cohen_kappa_binary(&ma.cells, &mb.cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelKappa {
    pub label: String,
    pub kappa: Option<f64>,
    /// Both raters constant on this column; excluded from the mean.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroKappa {
    /// Unweighted mean over defined columns; `None` if none are defined.
    pub mean: Option<f64>,
    pub per_label: Vec<LabelKappa>,
    pub excluded: usize,
}

/// Unweighted mean of per-column kappa. Columns where both raters are
/// constant (for example a label neither ever uses) are excluded.
pub fn macro_kappa(a: &LabelCorpus, b: &LabelCorpus, space: &LabelSpace) -> Result<MacroKappa, MetricsError> {
    check_aligned(a, b)?;
    if a.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let space = space.extended(&[a, b]);
    let ma = IndicatorMatrix::build(a, &space);
    let mb = IndicatorMatrix::build(b, &space);
    let mut per_label = Vec::with_capacity(space.len());
    let (mut sum, mut defined) = (0.0, 0usize);
    for (j, label) in space.columns.iter().enumerate() {
        let k = cohen_kappa_binary(&ma.column(j), &mb.column(j))?;
        let undefined = k.constant_raters || k.value.is_none();
        if !undefined {
            sum += k.value.expect("defined");
            defined += 1;
        }
        per_label.push(LabelKappa {
            label: label.clone(),
            kappa: if undefined { None } else { k.value },
            undefined,
        });
    }
    Ok(MacroKappa {
        mean: (defined > 0).then(|| sum / defined as f64),
        excluded: space.len() - defined,
        per_label,
    })
}

/// A delusion is present when any delusion type is assigned.
pub fn derive_presence(labels: &LabelSet) -> bool {
    !labels.is_empty()
}

/// Presence as a single-column corpus.
pub fn presence_corpus(delusion_types: &LabelCorpus) -> LabelCorpus {
    delusion_types
        .iter()
        .map(|(id, s)| {
            let set = if derive_presence(s) {
                [PRESENT].into_iter().collect()
            } else {
                LabelSet::new()
            };
            (id.clone(), set)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub rate: f64,
    pub agree: usize,
    pub total: usize,
    /// Transcript id → exact-set agreement.
    pub partition: BTreeMap<String, bool>,
}

/// Fraction of transcripts whose two label sets are identical.
pub fn exact_set_agreement(a: &LabelCorpus, b: &LabelCorpus) -> Result<Agreement, MetricsError> {
    check_aligned(a, b)?;
    if a.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let partition: BTreeMap<String, bool> = a.iter().map(|(id, s)| (id.clone(), *s == b[id])).collect();
    let agree = partition.values().filter(|v| **v).count();
    Ok(Agreement {
        rate: agree as f64 / a.len() as f64,
        agree,
        total: a.len(),
        partition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub label: String,
    pub support: u64,
    #[serde(flatten)]
    pub prf: Prf,
}

/// Every metric for one system against gold on one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScores {
    pub system: String,
    pub n: usize,
    pub micro: MicroPrf,
    pub example_f1: f64,
    pub micro_kappa: Kappa,
    pub macro_kappa: MacroKappa,
    pub per_label: Vec<LabelScores>,
}

pub fn score_system(
    system: &str,
    gold: &LabelCorpus,
    pred: &LabelCorpus,
    space: &LabelSpace,
) -> Result<SystemScores, MetricsError> {
    let per_label = per_label_confusion(gold, pred, space)?
        .into_iter()
        .map(|(label, c)| LabelScores {
            label,
            support: c.tp + c.fn_,
            prf: c.prf(),
        })
        .collect();
    Ok(SystemScores {
        system: system.to_owned(),
        n: gold.len(),
        micro: micro_prf(gold, pred, space)?,
        example_f1: example_f1(gold, pred)?,
        micro_kappa: micro_kappa(gold, pred, space)?,
        macro_kappa: macro_kappa(gold, pred, space)?,
        per_label,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub n: usize,
    pub systems: Vec<SystemScores>,
}

/// Full-corpus scores plus the agreement and disagreement strata; an
/// empty stratum is `None` (not applicable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub full: Option<Fragment>,
    pub agreement: Option<Fragment>,
    pub disagreement: Option<Fragment>,
}

fn restrict(c: &LabelCorpus, keep: &BTreeSet<&String>) -> LabelCorpus {
    c.iter()
        .filter(|(id, _)| keep.contains(id))
        .map(|(id, s)| (id.clone(), s.clone()))
        .collect()
}

pub fn stratified_report(
    gold: &LabelCorpus,
    systems: &[(String, LabelCorpus)],
    partition: &BTreeMap<String, bool>,
    space: &LabelSpace,
) -> Result<StratifiedReport, MetricsError> {
    let stratum = |want: Option<bool>| -> Result<Option<Fragment>, MetricsError> {
        let keep: BTreeSet<&String> = gold
            .keys()
            .filter(|id| want.is_none_or(|w| partition.get(*id) == Some(&w)))
            .collect();
        if keep.is_empty() {
            return Ok(None);
        }
        let g = restrict(gold, &keep);
        let systems = systems
            .iter()
            .map(|(name, pred)| score_system(name, &g, &restrict(pred, &keep), space))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Some(Fragment { n: keep.len(), systems }))
    };
    Ok(StratifiedReport {
        full: stratum(None)?,
        agreement: stratum(Some(true))?,
        disagreement: stratum(Some(false))?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distribution {
    /// Transcripts carrying each label, in column order.
    pub counts: Vec<(String, usize)>,
    /// Transcripts with no label.
    pub none: usize,
    pub total: usize,
}

pub fn label_distribution(corpus: &LabelCorpus, space: &LabelSpace) -> Distribution {
    let space = space.extended(&[corpus]);
    Distribution {
        counts: space
            .columns
            .iter()
            .map(|c| (c.clone(), corpus.values().filter(|s| s.contains(c)).count()))
            .collect(),
        none: corpus.values().filter(|s| s.is_empty()).count(),
        total: corpus.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels;

    fn corpus(sets: Vec<LabelSet>) -> LabelCorpus {
        sets.into_iter().enumerate().map(|(i, s)| (format!("t{i:02}"), s)).collect()
    }

    fn space(cols: &[&str]) -> LabelSpace {
        LabelSpace::new(cols.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn micro_prf_hand_counts() {
        // tp=2 (A in t0, B in t1), fp=1 (C in t1), fn=1 (B in t0)
        let gold = corpus(vec![labels!["A", "B"], labels!["B"]]);
        let pred = corpus(vec![labels!["A"], labels!["B", "C"]]);
        let m = micro_prf(&gold, &pred, &space(&["A", "B", "C"])).unwrap();
        assert_eq!((m.counts.tp, m.counts.fp, m.counts.fn_), (2, 1, 1));
        for v in [m.prf.precision, m.prf.recall, m.prf.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-9);
        }
        assert!(!m.prf.degenerate);
    }

    #[test]
    fn identity_and_degenerate() {
        let gold = corpus(vec![labels!["A"], labels![]]);
        let m = micro_prf(&gold, &gold, &space(&["A", "B"])).unwrap();
        assert_eq!((m.prf.precision, m.prf.recall, m.prf.f1), (1.0, 1.0, 1.0));
        let empty = corpus(vec![labels![], labels![]]);
        let m = micro_prf(&empty, &empty, &space(&["A"])).unwrap();
        assert!(m.prf.degenerate);
        assert_eq!(m.prf.f1, 0.0);
    }

    #[test]
    fn unknown_predictions_count_as_false_positives() {
        let gold = corpus(vec![labels!["A"]]);
        let pred = corpus(vec![labels!["A", "Paranoid"]]);
        let c = confusion(&gold, &pred, &space(&["A", "B"])).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 0, 1));
        assert_eq!(c.total(), 3);
    }

    #[test]
    fn mismatched_corpora_rejected() {
        let a = corpus(vec![labels!["A"]]);
        let b: LabelCorpus = [("other".to_string(), labels!["A"])].into_iter().collect();
        assert!(matches!(micro_prf(&a, &b, &space(&["A"])), Err(MetricsError::MismatchedTranscripts(_))));
    }

    #[test]
    fn example_f1_cases() {
        let g = corpus(vec![labels!["A", "B"]]);
        let p = corpus(vec![labels!["A"]]);
        assert!((example_f1(&g, &p).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let e = corpus(vec![labels![]]);
        assert_eq!(example_f1(&e, &e).unwrap(), 1.0);
        assert_eq!(example_f1(&g, &g).unwrap(), 1.0);
        assert_eq!(example_f1(&LabelCorpus::new(), &LabelCorpus::new()), Err(MetricsError::EmptyCorpus));
    }

    #[test]
    fn kappa_anchors() {
        let k = cohen_kappa_binary(&[true, false, true], &[true, false, true]).unwrap();
        assert_eq!(k.value, Some(1.0));
        let k = cohen_kappa_binary(&[true, true, false, false], &[true, false, true, false]).unwrap();
        assert_eq!(k.value, Some(0.0));
        let k = cohen_kappa_binary(&[true; 4], &[true; 4]).unwrap();
        assert_eq!(k.value, Some(1.0));
        assert!(k.constant_raters);
        assert!(cohen_kappa_binary(&[true], &[true, false]).is_err());
    }

    #[test]
    fn macro_excludes_unused_labels() {
        let a = corpus(vec![labels!["A"], labels![], labels!["A"]]);
        let b = corpus(vec![labels!["A"], labels!["A"], labels![]]);
        let m = macro_kappa(&a, &b, &space(&["A", "B"])).unwrap();
        assert_eq!(m.excluded, 1);
        assert!(m.per_label[1].undefined);
        assert_eq!(m.mean, m.per_label[0].kappa);
    }

    #[test]
    fn rare_label_disagreement_pulls_macro_below_micro() {
        // Common label A agrees everywhere; rare label R disagrees once.
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..10 {
            let x: LabelSet = if i % 2 == 0 { labels!["A"] } else { labels![] };
            a.push(x.clone());
            b.push(x);
        }
        a[1] = labels!["R"];
        b[3] = labels!["R"];
        let (a, b) = (corpus(a), corpus(b));
        let s = space(&["A", "R"]);
        let micro = micro_kappa(&a, &b, &s).unwrap().value.unwrap();
        let mac = macro_kappa(&a, &b, &s).unwrap().mean.unwrap();
        assert!(mac < micro, "macro {mac} micro {micro}");
    }

    #[test]
    fn presence_derivation() {
        assert!(derive_presence(&labels!["Persecutory"]));
        assert!(derive_presence(&labels!["Unspecified"]));
        assert!(!derive_presence(&labels![]));
    }

    #[test]
    fn binary_micro_equals_macro() {
        let a = presence_corpus(&corpus(vec![labels!["X"], labels![], labels!["Y"], labels![]]));
        let b = presence_corpus(&corpus(vec![labels!["X"], labels!["X"], labels![], labels![]]));
        let s = LabelSpace::presence();
        assert_eq!(micro_kappa(&a, &b, &s).unwrap().value, macro_kappa(&a, &b, &s).unwrap().mean);
    }

    #[test]
    fn exact_agreement() {
        let a = corpus(vec![labels!["P"], labels!["P"]]);
        let b = corpus(vec![labels!["P", "R"], labels!["P"]]);
        let r = exact_set_agreement(&a, &b).unwrap();
        assert_eq!(r.agree, 1);
        assert_eq!(r.partition["t00"], false);

        let a = corpus((0..122).map(|_| labels!["P"]).collect());
        let b = corpus((0..122).map(|i| if i < 105 { labels!["P"] } else { labels![] }).collect());
        let r = exact_set_agreement(&a, &b).unwrap();
        assert!((r.rate - 105.0 / 122.0).abs() < 1e-12);
        assert_eq!(format!("{:.3}", r.rate), "0.861");
    }

    #[test]
    fn strata() {
        let gold = corpus(vec![labels!["A"], labels![], labels!["B"]]);
        let pred = corpus(vec![labels!["A"], labels!["A"], labels![]]);
        let all_agree: BTreeMap<String, bool> = gold.keys().map(|k| (k.clone(), true)).collect();
        let s = space(&["A", "B"]);
        let r = stratified_report(&gold, &[("sys".into(), pred.clone())], &all_agree, &s).unwrap();
        assert!(r.disagreement.is_none());
        assert_eq!(r.agreement.as_ref().unwrap().n, 3);

        let mut part = all_agree.clone();
        part.insert("t02".into(), false);
        let r = stratified_report(&gold, &[("sys".into(), pred)], &part, &s).unwrap();
        let mut sum = r.agreement.unwrap().systems[0].micro.counts;
        sum.add(&r.disagreement.unwrap().systems[0].micro.counts);
        assert_eq!(sum, r.full.unwrap().systems[0].micro.counts);
    }

    #[test]
    fn distribution_counts_none_row() {
        let c = corpus(vec![labels!["A"], labels![], labels!["A", "B"]]);
        let d = label_distribution(&c, &space(&["A", "B", "C"]));
        assert_eq!(d.counts, vec![("A".into(), 2), ("B".into(), 1), ("C".into(), 0)]);
        assert_eq!((d.none, d.total), (1, 3));
    }
}
