//! Acceptance suite. Each test prints one `PASS` or `FAIL` line; run with
//! `cargo test --test acceptance -- --nocapture --test-threads=1` to see
//! them in order.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clinannot::adjudication::*;
use clinannot::corpus::Transcript;
use clinannot::gateway::*;
use clinannot::labels::LabelSet;
use clinannot::metrics::*;
use clinannot::parser::*;
use clinannot::pipeline::demo::run_demo;
use clinannot::prompt::{render_category_block, PromptEngine, PromptKind, PromptLevel, PromptText};
use clinannot::taxonomy::{GuidelineSchema, TargetId};
use common::*;
use rand::{Rng, RngCore};

/// Run one criterion, print its verdict line, and re-raise any failure.
fn criterion(n: u8, name: &str, body: impl FnOnce() -> String) {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(detail) => println!("PASS criterion {n}: {name} ({detail})"),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            println!("FAIL criterion {n}: {name} ({msg})");
            resume_unwind(e)
        }
    }
}

fn close(a: f64, b: f64, what: &str) {
    assert!((a - b).abs() <= 1e-12, "{what}: {a} vs oracle {b}");
}

#[test]
fn criterion_1_metric_oracle_equivalence() {
    criterion(1, "metric oracle equivalence", || {
        let started = Instant::now();
        let mut empty_matrix = 0;
        for seed in 0..1000u64 {
            let mut rng = seeded(seed);
            let (space, a, b) = random_pair(&mut rng, 20, 6);
            let (ca, cb) = (to_corpus(&a), to_corpus(&b));
            let s = LabelSpace::new(space.clone());
            let cols = oracle_columns(&space, &a, &b);

            let m = micro_prf(&ca, &cb, &s).unwrap().prf;
            let (p, r, f) = oracle_prf(&a, &b);
            close(m.precision, p, "micro precision");
            close(m.recall, r, "micro recall");
            close(m.f1, f, "micro F1");
            close(example_f1(&ca, &cb).unwrap(), oracle_example_f1(&a, &b), "example F1");
            if cols.is_empty() {
                // No label anywhere: the flattened matrix has no cells.
                assert_eq!(micro_kappa(&ca, &cb, &s).unwrap_err(), MetricsError::EmptyCorpus);
                empty_matrix += 1;
            } else {
                close(
                    micro_kappa(&ca, &cb, &s).unwrap().value.unwrap(),
                    oracle_micro_kappa(&a, &b, &cols),
                    "micro kappa",
                );
            }
            match (macro_kappa(&ca, &cb, &s).unwrap().mean, oracle_macro_kappa(&a, &b, &cols)) {
                (Some(x), Some(y)) => close(x, y, "macro kappa"),
                (x, y) => assert_eq!(x, y, "macro kappa definedness, seed {seed}"),
            }
            close(
                exact_set_agreement(&ca, &cb).unwrap().rate,
                oracle_exact_agreement(&a, &b),
                "exact-set agreement",
            );
        }
        let elapsed = started.elapsed();
        assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
        format!("1000 corpora in {elapsed:.2?}, {empty_matrix} with no label columns")
    });
}

#[test]
fn criterion_2_kappa_anchors() {
    criterion(2, "kappa anchors", || {
        let v = [true, false, true, true, false, false, true];
        close(cohen_kappa_binary(&v, &v).unwrap().value.unwrap(), 1.0, "perfect agreement");
        let k = cohen_kappa_binary(&[true, true, false, false], &[true, false, true, false]).unwrap();
        assert_eq!(k.value, Some(0.0), "chance-level case must be exactly 0");

        let mut checked = 0;
        for seed in 0..200u64 {
            let (_, a, b) = random_pair(&mut seeded(10_000 + seed), 20, 6);
            let pa = presence_corpus(&to_corpus(&a));
            let pb = presence_corpus(&to_corpus(&b));
            let space = LabelSpace::presence();
            let micro = micro_kappa(&pa, &pb, &space).unwrap();
            if micro.constant_raters {
                continue;
            }
            close(micro.value.unwrap(), macro_kappa(&pa, &pb, &space).unwrap().mean.unwrap(), "binary micro vs macro");
            checked += 1;
        }
        assert!(checked > 50);
        format!("binary micro = macro on {checked} corpora")
    });
}

#[test]
fn criterion_3_majority_vote_exhaustive() {
    criterion(3, "majority vote exhaustive", || {
        let started = Instant::now();
        let labels = ["A", "B", "C"];
        let set = |mask: u32| -> BTreeSet<String> {
            labels.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, l)| l.to_string()).collect()
        };
        let ids = ["glm", "gptoss", "qwen"];
        let mut tiebreaks = 0;
        for combo in 0..512u32 {
            let sets = [set(combo & 7), set((combo >> 3) & 7), set((combo >> 6) & 7)];
            for tb in 0..3 {
                let votes: Vec<Vote> = ids
                    .iter()
                    .zip(&sets)
                    .map(|(id, s)| Vote {
                        agent_id: id.to_string(),
                        labels: s.iter().cloned().collect(),
                    })
                    .collect();
                let got = majority_vote(&votes, ids[tb]).unwrap();
                let (want, want_tb) = oracle_majority([&sets[0], &sets[1], &sets[2]], tb);
                assert_eq!(got.labels, want.iter().cloned().collect::<LabelSet>(), "combo {combo:09b}, tiebreaker {tb}");
                assert_eq!(got.flags.tiebreak_used, want_tb, "tiebreak flag, combo {combo:09b}");
                tiebreaks += usize::from(want_tb && tb == 2);
            }
        }
        let elapsed = started.elapsed();
        assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
        format!("512 assignments x 3 tiebreaker positions, {tiebreaks} tiebreaks, {elapsed:.2?}")
    });
}

#[test]
fn criterion_4_composition_rule() {
    criterion(4, "composition rule", || {
        let schema = GuidelineSchema::bundled();
        let names = schema.label_names(TargetId::DelusionType);
        let mut rng = seeded(4);
        let t = TargetId::DelusionType;
        let mut items = Vec::new();
        let mut expected = Vec::new();
        for i in 0..122 {
            let a: LabelSet = names.iter().filter(|_| rng.random_bool(0.15)).cloned().collect();
            let agree = i % 4 != 3 && i != 121;
            let b = if agree {
                a.clone()
            } else {
                // Toggle one label so the sets differ.
                let flip = &names[rng.random_range(0..names.len())];
                let mut b: BTreeSet<String> = a.iter().cloned().collect();
                if !b.remove(flip) {
                    b.insert(flip.clone());
                }
                b.into_iter().collect()
            };
            expected.push((agree, a.clone()));
            items.push(PairedOutcome {
                transcript: Transcript::new(format!("t{i:03}"), "One. Two. Three. Four."),
                target: t,
                level: PromptLevel::new(4).unwrap(),
                outcome_a: AgentOutcome::from_labels("glm", t, a),
                outcome_b: AgentOutcome::from_labels("gptoss", t, b),
                tiebreaker_outcome: None,
            });
        }
        let agreements = expected.iter().filter(|(a, _)| *a).count();
        assert_eq!(agreements, 91);
        let calls = AtomicUsize::new(0);
        let sentinel: LabelSet = ["Unspecified"].into_iter().collect();
        let out = compose_corpus(items, |_| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(ResolvedLabels::consensus(sentinel.clone()))
        })
        .unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 31);
        for (c, (agree, a)) in out.iter().zip(&expected) {
            assert_eq!(c.agreement, *agree);
            if *agree {
                assert_eq!(&c.resolved.labels, a);
                assert_eq!(c.resolved.method, Method::Consensus);
            } else {
                assert_eq!(c.resolved.labels, sentinel);
            }
        }
        format!("122 transcripts, {agreements} agreements, 31 resolver calls")
    });
}

/// The worked response blocks embedded in the bundled annotation template.
fn template_examples() -> Vec<String> {
    let template = include_str!("../templates/annotation.txt");
    template
        .split("## response template\n")
        .skip(1)
        .map(|block| block.split("\n\n").next().unwrap().trim().to_owned())
        .filter(|b| !b.is_empty())
        .collect()
}

fn random_record(rng: &mut rand::rngs::StdRng, schema: &GuidelineSchema) -> AnnotationRecord {
    const WORDS: [&str; 12] = [
        "they", "watch", "me", "every", "night", "the", "radio", "knows", "my", "name", "I", "hide",
    ];
    let span = |rng: &mut rand::rngs::StdRng| -> Option<String> {
        rng.random_bool(0.8).then(|| {
            (0..rng.random_range(1..8)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        })
    };
    let pick = |rng: &mut rand::rngs::StdRng, t: TargetId| {
        let names = schema.label_names(t);
        names[rng.random_range(0..names.len())].clone()
    };
    let mut r = AnnotationRecord::empty(ParseFormat::Template);
    for _ in 0..rng.random_range(0..4) {
        r.delusion_items.push(DelusionItem {
            delusion_span: span(rng),
            delusion_type: pick(rng, TargetId::DelusionType),
        });
    }
    for _ in 0..rng.random_range(0..3) {
        r.affective_items.push(AffectiveItem {
            affective_span: span(rng),
            affective_category: pick(rng, TargetId::AffectiveResponse),
            affective_intensity: rng.random_bool(0.5).then(|| "Moderate".to_owned()),
        });
    }
    for _ in 0..rng.random_range(0..3) {
        r.behavioral_items.push(BehavioralItem {
            behavioral_span: span(rng),
            behavioral_category: pick(rng, TargetId::BehavioralResponse),
        });
    }
    r.normalize();
    r
}

#[test]
fn criterion_5_parser_suite() {
    criterion(5, "parser suite", || {
        let started = Instant::now();
        let schema = GuidelineSchema::bundled();

        let examples = template_examples();
        assert_eq!(examples.len(), 3, "{examples:?}");
        let first = parse_annotation(&examples[0], &schema).unwrap();
        assert_eq!(
            first.delusion_items,
            vec![DelusionItem {
                delusion_span: Some("I know they are monitoring my email".into()),
                delusion_type: "Persecutory".into(),
            }]
        );
        assert_eq!(
            first.affective_items,
            vec![AffectiveItem {
                affective_span: Some("I feel afraid all the time".into()),
                affective_category: "Fear-Anxiety".into(),
                affective_intensity: Some("Moderate".into()),
            }]
        );
        assert!(first.behavioral_items.is_empty());
        let multi = parse_annotation(&examples[1], &schema).unwrap();
        let types: Vec<&str> = multi.delusion_items.iter().map(|d| d.delusion_type.as_str()).collect();
        assert_eq!(types, ["Religious", "Grandiosity", "Persecutory"]);
        let none = parse_annotation(&examples[2], &schema).unwrap();
        assert!(none.delusion_items.is_empty() && none.affective_items.is_empty() && none.behavioral_items.is_empty());

        let mut rng = seeded(5);
        for i in 0..200 {
            let r = random_record(&mut rng, &schema);
            let t = parse_annotation(&r.to_template(), &schema).unwrap();
            let j = parse_annotation(&r.to_answer_json().to_string(), &schema).unwrap();
            assert!(t.same_items(&r) && j.same_items(&r), "record {i}: {r:?}");
            assert!(t.same_items(&j));
        }

        let (mut ok, mut failed) = (0, 0);
        for _ in 0..10_000 {
            let mut bytes = vec![0u8; rng.random_range(0..512)];
            rng.fill_bytes(&mut bytes);
            let text = String::from_utf8_lossy(&bytes);
            match parse_annotation(&text, &schema) {
                Ok(_) => ok += 1,
                Err(ParseFailure::NoFields | ParseFailure::Incomplete(_)) => failed += 1,
            }
            let _ = parse_direct_verdict(&text, TargetId::DelusionType, &schema);
            let _ = parse_debate_verdict(&text, TargetId::DelusionType, &schema);
            let _ = extract_thinking(&text, &ThinkingMarkers::default());
        }
        assert_eq!(ok + failed, 10_000);
        let elapsed = started.elapsed();
        assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
        format!("3 examples, 200 format pairs, 10000 fuzz inputs ({failed} typed failures) in {elapsed:.2?}")
    });
}

#[test]
fn criterion_6_fallback() {
    criterion(6, "fallback behavior", || {
        let dir = tempfile::tempdir().unwrap();
        let base = AgentSpec::new("gptoss", "http://unused.invalid", "synthetic-gptoss", AgentRole::Annotator);
        let prompt = PromptText::new(
            format!("annotate: {WATCHED}"),
            PromptKind::Annotation {
                level: PromptLevel::new(4).unwrap(),
            },
        );
        let path = dir.path().join("fixtures.json");
        let entry = |max_tokens, text: String| FixtureEntry {
            agent_id: base.id.clone(),
            prompt_hash: prompt.content_hash.clone(),
            max_tokens: Some(max_tokens),
            response: RawCompletion::text(text),
        };
        FixtureFile {
            entries: vec![
                entry(4096, "delusion_span: \"I think my neighbors are keeping track".into()),
                entry(8192, persecutory_answer()),
            ],
        }
        .save(&path)
        .unwrap();
        let agent = scripted(&base, &path);
        let never: Arc<dyn Backend> =
            Arc::new(|_: &CompletionRequest<'_>| -> Result<RawCompletion, GatewayError> { panic!("no live calls") });
        let gw = Gateway::new(never, std::slice::from_ref(&agent)).unwrap().offline(true);
        let schema = GuidelineSchema::bundled();
        let out = gw
            .annotate_with_fallback(&agent, &prompt, &DecodingConfig::default(), |a| parse_annotation(a, &schema))
            .unwrap();
        assert!(out.response.used_fallback);
        assert_eq!(gw.stats().requests, 2);
        assert_eq!(out.response.max_tokens, 8192);
        assert_eq!(out.record.labels(TargetId::DelusionType), ["Persecutory"].into_iter().collect());
        "used_fallback = true after 2 calls".to_owned()
    });
}

#[test]
fn criterion_7_debate_protocol() {
    criterion(7, "debate protocol", || {
        let (a, b, judge) = panel();
        let engine = PromptEngine::default();
        let schema = GuidelineSchema::bundled();
        let cfg = DecodingConfig::default();

        let recorder = Recorder::default();
        let rec = recorder.clone();
        let live: Arc<dyn Backend> = Arc::new(move |req: &CompletionRequest<'_>| rec.record(req, concession_reply(req)));
        let gw = Gateway::new(live, &[a.clone(), b.clone(), judge.clone()]).unwrap();
        let adj = Adjudicator {
            gateway: &gw,
            engine: &engine,
            schema: &schema,
            cfg: &cfg,
        };
        let mut per_case = Vec::new();
        for level in [1, 2, 3, 4] {
            let before = recorder.calls();
            adj.run_debate(&watched_case(level), (&a, &b), &judge, 2).unwrap();
            per_case.push(recorder.calls() - before);
        }
        assert_eq!(per_case, [5, 5, 5, 5]);

        // Replay the level-4 concession from fixtures through scripted agents.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("concession.json");
        recorder.fixtures().save(&path).unwrap();
        let agents = [scripted(&a, &path), scripted(&b, &path), scripted(&judge, &path)];
        let never: Arc<dyn Backend> =
            Arc::new(|_: &CompletionRequest<'_>| -> Result<RawCompletion, GatewayError> { panic!("no live calls") });
        let replay = Gateway::new(never, &agents).unwrap().offline(true);
        let adj = Adjudicator {
            gateway: &replay,
            ..adj
        };
        let case = watched_case(4);
        let r = adj.run_debate(&case, (&agents[0], &agents[1]), &agents[2], 2).unwrap();
        assert_eq!(replay.stats().requests, 5);
        assert!(case.outcome_a.labels.is_empty());
        assert_eq!(case.outcome_b.labels, ["Persecutory"].into_iter().collect());
        assert!(r.labels.is_empty(), "{:?}", r.labels);
        assert!(!r.flags.consistency_violation);
        match r.provenance.verdict {
            Some(ParsedVerdict::Debate(v)) => assert_eq!(v.winner, DebateWinner::Annotator1),
            other => panic!("unexpected verdict {other:?}"),
        }
        "5 calls per case; concession resolves to annotator 1's empty set".to_owned()
    });
}

#[test]
fn criterion_8_demo_determinism() {
    criterion(8, "end-to-end determinism", || {
        let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/demo");
        let mut timings = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let started = Instant::now();
            let out = run_demo(dir.path()).unwrap();
            let elapsed = started.elapsed();
            assert!(elapsed < Duration::from_secs(5), "demo took {elapsed:?}");
            assert_eq!(out.manifest.counts.dispatches, 0, "demo replay must stay offline");
            for name in ["metrics.json", "tables.txt"] {
                let got = std::fs::read(out.run_dir.join("reports").join(name)).unwrap();
                let want = std::fs::read(golden.join(name)).unwrap();
                assert!(got == want, "{name} differs from the checked-in golden file");
            }
            timings.push(elapsed);
        }
        format!("two runs byte-identical to golden files, {:.2?} and {:.2?}", timings[0], timings[1])
    });
}

#[test]
fn criterion_9_prompt_layering() {
    criterion(9, "prompt layering", || {
        let schema = GuidelineSchema::bundled();
        let mut blocks = 0;
        for target in &schema.targets {
            for (i, cat) in target.categories.iter().enumerate() {
                let mut prev = render_category_block(i + 1, cat, PromptLevel::new(1).unwrap()).unwrap();
                for k in 2..=schema.max_prompt_level {
                    let cur = render_category_block(i + 1, cat, PromptLevel::new(k).unwrap()).unwrap();
                    assert!(cur.contains(&prev), "{} level {k} does not contain level {}", cat.name, k - 1);
                    prev = cur;
                    blocks += 1;
                }
            }
        }
        let avoidance = schema
            .target(TargetId::BehavioralResponse)
            .categories
            .iter()
            .position(|c| c.name == "Avoidance/Withdrawal")
            .unwrap();
        let cat = &schema.target(TargetId::BehavioralResponse).categories[avoidance];
        let l4 = render_category_block(avoidance + 1, cat, PromptLevel::new(4).unwrap()).unwrap();
        assert!(l4.contains("I don't leave my house anymore because I'm scared someone will follow me."));
        format!("{blocks} level pairs nested; Avoidance/Withdrawal example present")
    });
}
