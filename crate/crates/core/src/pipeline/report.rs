//! Machine-readable run report and its fixed-width text rendering.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Panel, RunConfig, Strategy};
use super::{excluded_ids, LevelResults, PipelineError, Tallies};
use crate::corpus::{Excluded, GoldAnnotations, Split};
use crate::metrics::{
    exact_set_agreement, label_distribution, presence_corpus, stratified_report, Distribution, Fragment,
    LabelCorpus, LabelSpace, StratifiedReport,
};
use crate::prompt::PromptLevel;
use crate::taxonomy::{GuidelineSchema, TargetId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemInfo {
    pub id: String,
    pub display: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub a: String,
    pub b: String,
    pub rate: f64,
    pub agree: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedDistribution {
    pub source: String,
    pub distribution: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: String,
    pub title: String,
    /// Scores against gold; absent without gold annotations.
    pub scores: Option<StratifiedReport>,
    pub agreement: Vec<PairAgreement>,
    pub distributions: Vec<NamedDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: PromptLevel,
    pub evaluated: usize,
    pub excluded: Vec<String>,
    pub targets: Vec<TargetReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub guideline_version: String,
    pub split: Split,
    pub short_transcripts_excluded: Vec<String>,
    pub systems: Vec<SystemInfo>,
    pub levels: Vec<LevelReport>,
    pub tallies: Tallies,
}

const PRESENCE: &str = "delusion_presence";

fn report_targets(include_intensity: bool) -> Vec<(&'static str, &'static str, Option<TargetId>)> {
    let mut t = vec![
        (TargetId::DelusionType.as_str(), TargetId::DelusionType.title(), Some(TargetId::DelusionType)),
        (PRESENCE, "Delusion Presence", None),
        (
            TargetId::AffectiveResponse.as_str(),
            TargetId::AffectiveResponse.title(),
            Some(TargetId::AffectiveResponse),
        ),
        (
            TargetId::BehavioralResponse.as_str(),
            TargetId::BehavioralResponse.title(),
            Some(TargetId::BehavioralResponse),
        ),
    ];
    if include_intensity {
        t.push((
            TargetId::AffectiveIntensity.as_str(),
            TargetId::AffectiveIntensity.title(),
            Some(TargetId::AffectiveIntensity),
        ));
    }
    t
}

fn restrict(c: &LabelCorpus, ids: &[String]) -> LabelCorpus {
    ids.iter().filter_map(|id| c.get(id).map(|s| (id.clone(), s.clone()))).collect()
}

pub(crate) fn build_report(
    config: &RunConfig,
    panel: &Panel,
    schema: &GuidelineSchema,
    gold: Option<&GoldAnnotations>,
    short: &[Excluded],
    levels: &[LevelResults],
    tallies: &Tallies,
) -> Result<RunReport, PipelineError> {
    let annotators: Vec<String> = panel.annotating().iter().map(|a| a.id.clone()).collect();
    let mut systems: Vec<SystemInfo> = annotators
        .iter()
        .map(|id| SystemInfo {
            id: id.clone(),
            display: id.clone(),
            kind: "annotator".into(),
        })
        .collect();
    systems.extend(config.strategies.iter().map(|s| SystemInfo {
        id: s.as_str().into(),
        display: s.display().into(),
        kind: "strategy".into(),
    }));

    let mut level_reports = Vec::new();
    for lr in levels {
        let ids: Vec<String> = match gold {
            Some(g) => lr.evaluated.iter().filter(|id| g.get(id).is_some()).cloned().collect(),
            None => lr.evaluated.clone(),
        };
        let mut targets = Vec::new();
        for (key, title, target) in report_targets(config.include_intensity) {
            let base = target.unwrap_or(TargetId::DelusionType);
            let derive = |c: &LabelCorpus| {
                let c = restrict(c, &ids);
                if target.is_none() {
                    presence_corpus(&c)
                } else {
                    c
                }
            };
            let mut corpora: Vec<(String, LabelCorpus)> = annotators
                .iter()
                .map(|a| {
                    let c = lr.annotations.get(a).and_then(|m| m.get(&base)).cloned().unwrap_or_default();
                    (a.clone(), derive(&c))
                })
                .collect();
            if base != TargetId::AffectiveIntensity {
                for s in &config.strategies {
                    if let Some(cases) = lr.resolutions.get(s).and_then(|m| m.get(&base)) {
                        let c: LabelCorpus =
                            cases.iter().map(|c| (c.transcript_id.clone(), c.resolved.labels.clone())).collect();
                        corpora.push((s.as_str().into(), derive(&c)));
                    }
                }
            }
            let gold_corpus: Option<LabelCorpus> = gold.map(|g| {
                let c: LabelCorpus = ids.iter().map(|id| (id.clone(), g.get(id).expect("filtered").labels(base))).collect();
                if target.is_none() {
                    presence_corpus(&c)
                } else {
                    c
                }
            });
            let space = match target {
                None => LabelSpace::presence(),
                Some(t) => {
                    let mut refs: Vec<&LabelCorpus> = corpora.iter().map(|(_, c)| c).collect();
                    refs.extend(gold_corpus.as_ref());
                    LabelSpace::for_target(schema, t, &refs)
                }
            };

            let agreement = if ids.is_empty() {
                Vec::new()
            } else {
                let mut out = Vec::new();
                for i in 0..annotators.len() {
                    for j in i + 1..annotators.len() {
                        let r = exact_set_agreement(&corpora[i].1, &corpora[j].1)?;
                        out.push(PairAgreement {
                            a: annotators[i].clone(),
                            b: annotators[j].clone(),
                            rate: r.rate,
                            agree: r.agree,
                            total: r.total,
                        });
                    }
                }
                out
            };

            let scores = match &gold_corpus {
                Some(g) if !ids.is_empty() => {
                    let partition: BTreeMap<String, bool> = exact_set_agreement(&corpora[0].1, &corpora[1].1)?.partition;
                    Some(stratified_report(g, &corpora, &partition, &space)?)
                }
                _ => None,
            };

            let mut distributions = Vec::new();
            if let Some(g) = &gold_corpus {
                distributions.push(NamedDistribution {
                    source: "gold".into(),
                    distribution: label_distribution(g, &space),
                });
            }
            distributions.extend(corpora.iter().map(|(name, c)| NamedDistribution {
                source: name.clone(),
                distribution: label_distribution(c, &space),
            }));

            targets.push(TargetReport {
                target: key.into(),
                title: title.into(),
                scores,
                agreement,
                distributions,
            });
        }
        level_reports.push(LevelReport {
            level: lr.level,
            evaluated: ids.len(),
            excluded: lr.excluded.clone(),
            targets,
        });
    }
    Ok(RunReport {
        guideline_version: schema.version.clone(),
        split: config.split,
        short_transcripts_excluded: excluded_ids(short),
        systems,
        levels: level_reports,
        tallies: tallies.clone(),
    })
}

/// Three decimals, or the placeholder for a missing value.
pub fn fmt3(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.3}"),
        _ => "---".to_owned(),
    }
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, cell) in cells.iter().enumerate().take(cols) {
            let pad = widths[i] - cell.chars().count();
            if i == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_owned() + "\n"
    };
    let mut out = line(header);
    let rule: usize = widths.iter().sum::<usize>() + 2 * (cols.saturating_sub(1));
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn system_cell(fragment: Option<&Fragment>, system: &str, pick: impl Fn(&crate::metrics::SystemScores) -> Option<f64>) -> String {
    fmt3(fragment.and_then(|f| f.systems.iter().find(|s| s.system == system)).and_then(pick))
}

/// Fixed-width text tables for a report.
pub fn render_tables(report: &RunReport) -> String {
    let mut out = String::new();
    let sys_header = |first: &str| {
        let mut h = vec![first.to_owned(), "Level".to_owned()];
        h.extend(report.systems.iter().map(|s| s.display.clone()));
        h
    };
    let target_keys: Vec<(String, String)> = report
        .levels
        .first()
        .map(|l| l.targets.iter().map(|t| (t.target.clone(), t.title.clone())).collect())
        .unwrap_or_default();
    let find = |level: &LevelReport, key: &str| level.targets.iter().find(|t| t.target == key).cloned();

    out.push_str(&format!(
        "Guideline {} | split {} | short transcripts excluded: {}\n\n",
        report.guideline_version,
        report.split,
        report.short_transcripts_excluded.len()
    ));

    let score_table = |title: &str, pick: &dyn Fn(&crate::metrics::SystemScores) -> Option<f64>| {
        let mut rows = Vec::new();
        for (key, t_title) in &target_keys {
            for level in &report.levels {
                let tr = find(level, key);
                let full = tr.as_ref().and_then(|t| t.scores.as_ref()).and_then(|s| s.full.as_ref());
                let mut row = vec![t_title.clone(), level.level.to_string()];
                row.extend(report.systems.iter().map(|s| system_cell(full, &s.id, pick)));
                rows.push(row);
            }
        }
        format!("{title}\n{}\n", table(&sys_header("Target"), &rows))
    };
    out.push_str(&score_table("Micro-averaged F1", &|s| Some(s.micro.prf.f1)));
    out.push_str(&score_table("Example-based F1", &|s| Some(s.example_f1)));

    let mut rows = Vec::new();
    for (key, t_title) in &target_keys {
        for level in &report.levels {
            let tr = find(level, key);
            let scores = tr.as_ref().and_then(|t| t.scores.as_ref());
            for (name, frag) in [
                ("agree", scores.and_then(|s| s.agreement.as_ref())),
                ("disagree", scores.and_then(|s| s.disagreement.as_ref())),
            ] {
                let n = frag.map(|f| f.n.to_string()).unwrap_or_else(|| "0".into());
                let mut row = vec![format!("{t_title} / {name} (N={n})"), level.level.to_string()];
                row.extend(report.systems.iter().map(|s| system_cell(frag, &s.id, |x| Some(x.micro.prf.f1))));
                rows.push(row);
            }
        }
    }
    out.push_str(&format!(
        "Micro-averaged F1 by initial annotator agreement\n{}\n",
        table(&sys_header("Target / stratum"), &rows)
    ));

    let mut rows = Vec::new();
    for (key, t_title) in &target_keys {
        for level in &report.levels {
            let tr = find(level, key);
            let full = tr.as_ref().and_then(|t| t.scores.as_ref()).and_then(|s| s.full.as_ref());
            for (name, micro) in [("micro", true), ("macro", false)] {
                let mut row = vec![format!("{t_title} / {name}"), level.level.to_string()];
                row.extend(report.systems.iter().map(|s| {
                    system_cell(full, &s.id, |x| if micro { x.micro_kappa.value } else { x.macro_kappa.mean })
                }));
                rows.push(row);
            }
        }
    }
    out.push_str(&format!(
        "Cohen's kappa against gold\n{}\n",
        table(&sys_header("Target / average"), &rows)
    ));

    let pairs: Vec<(String, String)> = report
        .levels
        .iter()
        .flat_map(|l| l.targets.iter())
        .flat_map(|t| t.agreement.iter().map(|p| (p.a.clone(), p.b.clone())))
        .fold(Vec::new(), |mut acc, p| {
            if !acc.contains(&p) {
                acc.push(p);
            }
            acc
        });
    let mut header = vec!["Target".to_owned(), "Level".to_owned()];
    header.extend(pairs.iter().map(|(a, b)| format!("{a} vs {b}")));
    let mut rows = Vec::new();
    for (key, t_title) in &target_keys {
        for level in &report.levels {
            let tr = find(level, key);
            let mut row = vec![t_title.clone(), level.level.to_string()];
            row.extend(pairs.iter().map(|(a, b)| {
                tr.as_ref()
                    .and_then(|t| t.agreement.iter().find(|p| &p.a == a && &p.b == b))
                    .map(|p| format!("{} ({}/{})", fmt3(Some(p.rate)), p.agree, p.total))
                    .unwrap_or_else(|| "---".into())
            }));
            rows.push(row);
        }
    }
    out.push_str(&format!("Exact-set agreement between annotators\n{}\n", table(&header, &rows)));

    for (key, t_title) in &target_keys {
        for level in &report.levels {
            let Some(tr) = find(level, key) else { continue };
            if tr.distributions.is_empty() {
                continue;
            }
            let labels: Vec<String> = tr.distributions[0].distribution.counts.iter().map(|(l, _)| l.clone()).collect();
            let mut header = vec!["Label".to_owned()];
            header.extend(tr.distributions.iter().map(|d| d.source.clone()));
            let mut rows: Vec<Vec<String>> = labels
                .iter()
                .map(|l| {
                    let mut row = vec![l.clone()];
                    row.extend(tr.distributions.iter().map(|d| {
                        d.distribution
                            .counts
                            .iter()
                            .find(|(x, _)| x == l)
                            .map(|(_, n)| n.to_string())
                            .unwrap_or_else(|| "0".into())
                    }));
                    row
                })
                .collect();
            let mut none = vec!["None".to_owned()];
            none.extend(tr.distributions.iter().map(|d| d.distribution.none.to_string()));
            rows.push(none);
            out.push_str(&format!(
                "Label distribution: {t_title}, {} (N={})\n{}\n",
                level.level,
                level.evaluated,
                table(&header, &rows)
            ));
        }
    }

    let t = &report.tallies;
    out.push_str(&format!(
        "Annotation: fallbacks {}, unparseable {}, call failures {}\n",
        t.fallbacks, t.parse_failures, t.gateway_failures
    ));
    for level in &report.levels {
        if !level.excluded.is_empty() {
            out.push_str(&format!("{} excluded after annotation failure: {}\n", level.level, level.excluded.join(", ")));
        }
    }
    for s in Strategy::ALL {
        if let Some(st) = t.strategies.get(s.as_str()) {
            out.push_str(&format!(
                "{}: cases {}, tiebreaks {}, verdict parse failures {}, judge call failures {}, consistency violations {}, debates aborted {}\n",
                s.display(),
                st.cases,
                st.tiebreaks,
                st.verdict_parse_failures,
                st.judge_call_failures,
                st.consistency_violations,
                st.debates_aborted
            ));
        }
    }
    out
}

/// Re-render the text tables of a finished run from its JSON report.
pub fn emit_report(run_dir: &Path) -> Result<String, PipelineError> {
    let path = run_dir.join("reports/metrics.json");
    let text = std::fs::read_to_string(&path).map_err(|source| PipelineError::Io {
        path: path.clone(),
        source,
    })?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| PipelineError::Json {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let rendered = render_tables(&report);
    let out = run_dir.join("reports/tables.txt");
    std::fs::write(&out, &rendered).map_err(|source| PipelineError::Io { path: out, source })?;
    Ok(rendered)
}
