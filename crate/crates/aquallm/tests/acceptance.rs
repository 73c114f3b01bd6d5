//! One PASS/FAIL line per acceptance criterion. Lines are written straight to
//! the process stdout so they show up without `--nocapture`.

mod common;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use aquallm::conllu::{parse_conllu, write_conllu};
use aquallm::export::{export_csv, export_jsonl, import_jsonl};
use aquallm::manifest::{parse_manifest, write_manifest};
use aquallm::pipeline::{DATASET, FILTERED, STATS};
use aquallm::{load_config, Pipeline, Stage};
use aquallm_core::candidates::{default_closers, extract_sequence_candidates};
use aquallm_core::{
    assemble, build_corpus, compute_stats, expand, extract_candidates, filter_pairs, generate_all,
    token_f1, verify_pair, AnnotatedCaption, AnswerCandidate, AqaTriplet, CandidateType, Corpus,
    CorpusManifest, FilterConfig, GatewayError, InjectionConfig, MockGateway, ModelGateway,
    ParaphraseConfig, Provenance, QaOutcome, QaPairDraft, Span, Split, Token, Upos,
};
use common::{expected_candidates, fixture, fixture_captions, fixture_corpus, read_fixture};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Independent answer normalization: lowercase, strip ASCII punctuation,
/// drop articles.
fn reference_tokens(s: &str) -> Vec<String> {
    let lowered: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !["a", "an", "the"].contains(w))
        .map(str::to_string)
        .collect()
}

/// Quadratic-time token F1 computed from precision and recall.
fn reference_f1(pred: &str, gold: &str) -> f64 {
    let p = reference_tokens(pred);
    let g = reference_tokens(gold);
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut used = vec![false; g.len()];
    let mut common = 0;
    for tok in &p {
        if let Some(j) = (0..g.len()).find(|&j| !used[j] && g[j] == *tok) {
            used[j] = true;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn f1_oracle() -> Outcome {
    const VOCAB: [&str; 18] = [
        "the", "The", "a", "an", "dog", "Dog", "dogs!", "barks", "water", "waves,", "of", "rocks",
        "rocks.", "two", "2", "loud-ly", "\"rain\"", "...",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(20240);
    let pairs: Vec<(String, String)> = (0..1000)
        .map(|_| {
            let mut side = || {
                let n = rng.gen_range(0..8);
                (0..n)
                    .map(|_| *VOCAB.choose(&mut rng).unwrap())
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            (side(), side())
        })
        .collect();
    let start = Instant::now();
    let got: Vec<f64> = pairs.iter().map(|(p, g)| token_f1(p, g)).collect();
    let elapsed = start.elapsed();
    let mut worst = 0f64;
    for ((p, g), f) in pairs.iter().zip(&got) {
        let d = (f - reference_f1(p, g)).abs();
        ensure(d < 1e-9, || {
            format!("{p:?} vs {g:?}: {f} != {}", reference_f1(p, g))
        })?;
        worst = worst.max(d);
    }
    let hand = [
        ("water waves", "waves of water", 0.8),
        ("the rocks", "Rocks.", 1.0),
        ("An owl hoots", "owl hoots", 1.0),
    ];
    for (p, g, want) in hand {
        let f = token_f1(p, g);
        ensure((f - want).abs() < 1e-9, || {
            format!("{p:?} vs {g:?}: {f}, expected {want}")
        })?;
    }
    ensure(elapsed.as_secs_f64() < 1.0, || {
        format!("1000 pairs took {elapsed:?}")
    })?;
    Ok(format!(
        "1000 pairs, max |diff| {worst:.1e}, {elapsed:?}; hand cases 0.8 and 1.0"
    ))
}

/// Answers every question with a fixed string.
struct FixedAnswer(String);

impl ModelGateway for FixedAnswer {
    fn generate_question(&self, _: &str, _: &str) -> Result<String, GatewayError> {
        unreachable!()
    }
    fn generate_boolean_question(&self, _: &str) -> Result<String, GatewayError> {
        unreachable!()
    }
    fn answer_question(&self, _: &str, _: &str) -> Result<QaOutcome, GatewayError> {
        Ok(QaOutcome::answered(self.0.clone()))
    }
    fn paraphrase_question(&self, _: &str, _: usize) -> Result<Vec<String>, GatewayError> {
        unreachable!()
    }
}

fn noun_draft(answer: String) -> QaPairDraft {
    QaPairDraft {
        audio_id: "a".into(),
        caption_id: "c".into(),
        question: "What is mentioned?".into(),
        answer,
        ctype: CandidateType::Noun,
        origin_caption_id: "c".into(),
        verified: None,
    }
}

fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Draft answer of `gold` tokens and model answer of `pred` tokens sharing
/// `common` of them.
fn overlap_case(common: usize, pred: usize, gold: usize) -> (String, String) {
    let shared = words("s", common);
    let mut p = shared.clone();
    p.extend(words("p", pred - common));
    let mut g = shared;
    g.extend(words("g", gold - common));
    (p.join(" "), g.join(" "))
}

fn threshold_semantics() -> Outcome {
    let cfg = FilterConfig::default();
    ensure(cfg.tau == 0.55, || format!("default tau is {}", cfg.tau))?;
    // 2·11 / (11 + 29) = 0.55 exactly.
    let (pred, gold) = overlap_case(11, 11, 29);
    let at = verify_pair(&FixedAnswer(pred), &noun_draft(gold), "ctx", &cfg);
    ensure(at.f1 == 0.55, || format!("boundary pair scored {}", at.f1))?;
    ensure(!at.accepted, || "F1 == tau was accepted".into())?;
    let (pred, gold) = overlap_case(12, 12, 29);
    let above = verify_pair(&FixedAnswer(pred), &noun_draft(gold), "ctx", &cfg);
    ensure(above.accepted, || {
        format!("F1 {} > tau was rejected", above.f1)
    })?;
    let mut checked = 0;
    for gold in 1..=14 {
        for pred in 1..=14 {
            for common in 0..=pred.min(gold) {
                let (p, g) = overlap_case(common, pred, gold);
                let r = verify_pair(&FixedAnswer(p), &noun_draft(g), "ctx", &cfg);
                ensure(r.accepted == (r.f1 > 0.55), || {
                    format!(
                        "common {common}, pred {pred}, gold {gold}: f1 {} accepted {}",
                        r.f1, r.accepted
                    )
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!(
        "F1 0.55 rejected, {:.3} accepted; {checked} swept pairs follow F1 > tau",
        above.f1
    ))
}

fn fixture_drafts(corpus: &Corpus, cfg: &InjectionConfig) -> Vec<QaPairDraft> {
    let cands: Vec<AnswerCandidate> = corpus
        .captions()
        .iter()
        .flat_map(extract_candidates)
        .collect();
    generate_all(&MockGateway, corpus, &cands, cfg).0
}

fn caption_text<'a>(corpus: &'a Corpus, d: &QaPairDraft) -> &'a str {
    &corpus.caption(&d.caption_id).unwrap().text
}

fn key(d: &QaPairDraft) -> (String, String, String) {
    (d.caption_id.clone(), d.question.clone(), d.answer.clone())
}

fn tau_monotonicity() -> Outcome {
    let corpus = fixture_corpus();
    let base: Vec<QaPairDraft> = fixture_drafts(&corpus, &InjectionConfig::default())
        .into_iter()
        .filter(|d| d.ctype.is_in_caption())
        .collect();
    ensure(!base.is_empty(), || "no in-caption drafts".into())?;
    // The mock QA reads the original answer back, so padding the reference
    // answer spreads F1 over (0, 1].
    const PAD: [&str; 4] = ["softly", "nearby", "outside", "again"];
    let drafts: Vec<QaPairDraft> = (0..200)
        .map(|i| {
            let mut d = base[i % base.len()].clone();
            let pad = (i / base.len() + i) % 5;
            if pad == 4 {
                d.answer = "unrelated".into();
            } else if pad > 0 {
                d.answer = format!("{} {}", d.answer, PAD[..pad].join(" "));
            }
            d
        })
        .collect();
    let mut sets = Vec::new();
    for tau in [0.7, 0.55, 0.3] {
        let cfg = FilterConfig {
            tau,
            ..FilterConfig::default()
        };
        let (kept, _) =
            filter_pairs(&MockGateway, &drafts, &corpus, &cfg).map_err(|e| e.to_string())?;
        let by_verify: Vec<usize> = (0..drafts.len())
            .filter(|&i| {
                verify_pair(
                    &MockGateway,
                    &drafts[i],
                    caption_text(&corpus, &drafts[i]),
                    &cfg,
                )
                .accepted
            })
            .collect();
        let kept_keys: Vec<_> = kept.iter().map(key).collect();
        let verify_keys: Vec<_> = by_verify.iter().map(|&i| key(&drafts[i])).collect();
        ensure(kept_keys == verify_keys, || {
            format!("tau {tau}: filter output differs from per-draft verification")
        })?;
        sets.push(by_verify.into_iter().collect::<HashSet<usize>>());
    }
    ensure(sets[0].is_subset(&sets[1]), || {
        "accepted(0.7) not within accepted(0.55)".into()
    })?;
    ensure(sets[1].is_subset(&sets[2]), || {
        "accepted(0.55) not within accepted(0.3)".into()
    })?;
    ensure(
        sets[0].len() < sets[1].len() && sets[1].len() < sets[2].len(),
        || {
            format!(
                "fixture does not separate thresholds: {:?}",
                sets.iter().map(HashSet::len).collect::<Vec<_>>()
            )
        },
    )?;
    Ok(format!(
        "200 drafts; accepted at 0.7/0.55/0.3: {}/{}/{}",
        sets[0].len(),
        sets[1].len(),
        sets[2].len()
    ))
}

fn cam_oracle() -> Outcome {
    let expected = expected_candidates();
    let captions = fixture_captions();
    ensure(captions.len() >= 20, || {
        format!("only {} captions", captions.len())
    })?;
    let mut rows = 0;
    for c in &captions {
        let got: Vec<(Span, CandidateType, String)> = extract_candidates(c)
            .into_iter()
            .map(|a| (a.span.unwrap(), a.ctype, a.text))
            .collect();
        let want: Vec<(Span, CandidateType, String)> = expected
            .get(&c.caption_id)
            .map(|v| {
                v.iter()
                    .map(|e| (e.span, e.ctype, e.text.clone()))
                    .collect()
            })
            .unwrap_or_default();
        ensure(got == want, || {
            format!("{}: got {got:?}, expected {want:?}", c.caption_id)
        })?;
        rows += want.len();
    }
    let first = &captions[0];
    let rocks = extract_candidates(first).into_iter().any(|a| {
        a.ctype == CandidateType::Noun
            && first
                .token(a.span.unwrap().end)
                .is_some_and(|t| t.text == "rocks")
    });
    ensure(rocks, || "no Noun candidate headed by \"rocks\"".into())?;
    Ok(format!(
        "{} captions, {rows} candidates match; \"rocks\" noun present",
        captions.len()
    ))
}

fn brute_force_spans(tags: &[Upos], opener: Upos, closers: &[Upos]) -> Vec<Span> {
    let valid = |i: usize, j: usize| {
        tags[i] == opener
            && closers.contains(&tags[j])
            && tags
                .get(i + 1..j)
                .unwrap_or(&[])
                .iter()
                .all(|t| t.is_open_class())
    };
    let mut all = Vec::new();
    for i in 0..tags.len() {
        for j in i..tags.len() {
            if valid(i, j) {
                all.push(Span::new(i + 1, j + 1));
            }
        }
    }
    let mut out: Vec<Span> = all
        .iter()
        .filter(|s| !all.iter().any(|o| o.strictly_contains(s)))
        .copied()
        .collect();
    out.sort();
    out
}

fn synthetic_caption(tags: &[Upos]) -> AnnotatedCaption {
    AnnotatedCaption {
        caption_id: "s".into(),
        audio_id: "a".into(),
        text: words("w", tags.len()).join(" "),
        tokens: tags
            .iter()
            .enumerate()
            .map(|(i, &upos)| Token {
                index: i + 1,
                text: format!("w{i}"),
                lemma: format!("w{i}"),
                upos,
                head: if i == 0 { 0 } else { 1 },
                deprel: if i == 0 { "root".into() } else { "dep".into() },
                ner: None,
            })
            .collect(),
    }
}

fn sequence_brute_force() -> Outcome {
    // Weighted toward the tags the rules care about so spans are common.
    let mut pool: Vec<Upos> = Upos::ALL.to_vec();
    pool.extend([Upos::Verb, Upos::Adj, Upos::Adv, Upos::Noun, Upos::Propn].repeat(3));
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut spans = 0;
    for n in 0..500 {
        let len = rng.gen_range(1..=12);
        let tags: Vec<Upos> = (0..len).map(|_| *pool.choose(&mut rng).unwrap()).collect();
        let caption = synthetic_caption(&tags);
        for opener in [Upos::Verb, Upos::Adj, Upos::Adv] {
            let closers = default_closers(opener);
            let mut got: Vec<Span> = extract_sequence_candidates(&caption, opener, closers)
                .into_iter()
                .map(|c| c.span.unwrap())
                .collect();
            got.sort();
            let want = brute_force_spans(&tags, opener, closers);
            ensure(got == want, || {
                format!("caption {n} {tags:?} opener {opener}: {got:?} != {want:?}")
            })?;
            spans += want.len();
        }
    }
    Ok(format!("500 captions x 3 openers agree ({spans} spans)"))
}

fn two_audio_corpus() -> Corpus {
    let full = parse_manifest(&read_fixture("manifest.jsonl"), "manifest").unwrap();
    let entries: Vec<_> = full
        .entries
        .into_iter()
        .filter(|e| e.audio_id == "a01" || e.audio_id == "a02")
        .collect();
    let captions: Vec<AnnotatedCaption> = fixture_captions()
        .into_iter()
        .filter(|c| c.audio_id == "a01" || c.audio_id == "a02")
        .collect();
    let manifest = CorpusManifest {
        source_name: "two".into(),
        entries,
    };
    build_corpus(manifest, captions).unwrap().0
}

fn dataset_for(
    corpus: &Corpus,
    inj: &InjectionConfig,
    k: usize,
) -> (Vec<QaPairDraft>, Vec<AqaTriplet>) {
    let drafts = fixture_drafts(corpus, inj);
    let fcfg = FilterConfig::default();
    let (kept, _) = filter_pairs(&MockGateway, &drafts, corpus, &fcfg).unwrap();
    let pcfg = ParaphraseConfig {
        k,
        ..ParaphraseConfig::default()
    };
    let expanded = expand(&MockGateway, &kept, corpus, &pcfg, &fcfg).unwrap();
    (drafts, assemble(&expanded, corpus).unwrap())
}

fn ocac_laws() -> Outcome {
    let corpus = two_audio_corpus();
    ensure(corpus.num_audios() == 2, || {
        "fixture is not two audios".into()
    })?;
    let (drafts, triplets) = dataset_for(&corpus, &InjectionConfig::default(), 5);
    for c in corpus.captions() {
        let yes = drafts
            .iter()
            .filter(|d| d.caption_id == c.caption_id && d.ctype == CandidateType::BooleanYes)
            .count();
        ensure(yes == 1, || {
            format!("caption {} has {yes} BooleanYes drafts", c.caption_id)
        })?;
    }
    let mut borrowed = HashMap::new();
    for t in &triplets {
        if matches!(
            t.provenance.ctype,
            CandidateType::BooleanNo | CandidateType::Zero
        ) {
            let origin = corpus.audio_of(&t.provenance.origin_caption_id);
            ensure(
                origin.is_some() && origin != Some(t.audio_id.as_str()),
                || {
                    format!(
                        "{:?} triplet on {} borrowed from its own audio",
                        t.provenance.ctype, t.audio_id
                    )
                },
            )?;
            *borrowed.entry(t.provenance.ctype).or_insert(0) += 1;
        }
    }
    let no = borrowed
        .get(&CandidateType::BooleanNo)
        .copied()
        .unwrap_or(0);
    let zero = borrowed.get(&CandidateType::Zero).copied().unwrap_or(0);
    ensure(no > 0 && zero > 0, || {
        format!("laws hold vacuously: {no} no, {zero} zero triplets")
    })?;
    let off = InjectionConfig {
        zero_per_audio: 0,
        ..InjectionConfig::default()
    };
    let (drafts0, triplets0) = dataset_for(&corpus, &off, 5);
    ensure(
        !drafts0.iter().any(|d| d.ctype == CandidateType::Zero)
            && !triplets0
                .iter()
                .any(|t| t.provenance.ctype == CandidateType::Zero),
        || "zero_per_audio = 0 produced Zero pairs".into(),
    )?;
    Ok(format!(
        "{} captions with one BooleanYes each; {no} no and {zero} zero triplets cross audios; none at zero_per_audio=0",
        corpus.num_captions()
    ))
}

fn paraphrase_cardinality() -> Outcome {
    let corpus = fixture_corpus();
    let fcfg = FilterConfig::default();
    let drafts = fixture_drafts(&corpus, &InjectionConfig::default());
    let (kept, _) =
        filter_pairs(&MockGateway, &drafts, &corpus, &fcfg).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for k in [5, 1] {
        let pcfg = ParaphraseConfig {
            k,
            ..ParaphraseConfig::default()
        };
        let out = expand(&MockGateway, &kept, &corpus, &pcfg, &fcfg).map_err(|e| e.to_string())?;
        ensure(out.len() <= (k + 1) * kept.len(), || {
            format!("k={k}: {} outputs for {} inputs", out.len(), kept.len())
        })?;
        let originals: Vec<&QaPairDraft> = out
            .iter()
            .filter(|p| p.paraphrase_of.is_none())
            .map(|p| &p.draft)
            .collect();
        ensure(originals.len() == kept.len(), || {
            format!("k={k}: originals not all kept")
        })?;
        let mut per_original: HashMap<(String, String), usize> = HashMap::new();
        for p in &out {
            let Some(of) = &p.paraphrase_of else { continue };
            let d = &p.draft;
            let source = kept.iter().find(|o| {
                o.question == *of
                    && o.caption_id == d.caption_id
                    && o.audio_id == d.audio_id
                    && o.answer == d.answer
                    && o.ctype == d.ctype
                    && o.origin_caption_id == d.origin_caption_id
            });
            ensure(source.is_some(), || {
                format!(
                    "paraphrase {:?} has no matching original {of:?}",
                    d.question
                )
            })?;
            ensure(d.question != *of && d.question.ends_with('?'), || {
                format!("bad paraphrase {:?}", d.question)
            })?;
            if d.ctype.is_in_caption() {
                let r = verify_pair(&MockGateway, d, caption_text(&corpus, d), &fcfg);
                ensure(r.accepted, || {
                    format!("reverified paraphrase {:?} fails the filter", d.question)
                })?;
            }
            let n = per_original
                .entry((d.caption_id.clone(), of.clone()))
                .or_default();
            *n += 1;
            ensure(*n <= k, || format!("more than {k} paraphrases of {of:?}"))?;
        }
        let paraphrases = out.len() - kept.len();
        ensure(paraphrases > 0, || format!("k={k}: no paraphrases at all"))?;
        summary.push(format!(
            "k={k}: {} -> {} (<= {})",
            kept.len(),
            out.len(),
            (k + 1) * kept.len()
        ));
    }
    Ok(summary.join("; "))
}

fn run_fixture(dir: &Path, cfg: &str) -> Pipeline {
    let p = Pipeline::new(
        load_config(cfg).unwrap(),
        dir.to_path_buf(),
        Some(fixture("manifest.jsonl")),
        Some(fixture("captions.conllu")),
    );
    p.run(false).unwrap();
    p
}

fn outputs(dir: &Path) -> (Vec<u8>, Vec<u8>) {
    (
        fs::read(dir.join(DATASET)).unwrap(),
        fs::read(dir.join(STATS)).unwrap(),
    )
}

fn end_to_end_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let cfg = r#"{"injection":{"seed":7}}"#;
    run_fixture(a.path(), cfg);
    let p = run_fixture(b.path(), cfg);
    let clean = outputs(a.path());
    ensure(clean == outputs(b.path()), || "two full runs differ".into())?;

    let staged = Pipeline::new(
        load_config(cfg).unwrap(),
        c.path().to_path_buf(),
        Some(fixture("manifest.jsonl")),
        Some(fixture("captions.conllu")),
    );
    for stage in Stage::ALL {
        staged.run_stage(stage).map_err(|e| e.to_string())?;
    }
    ensure(clean == outputs(c.path()), || {
        "stage-by-stage run differs from full run".into()
    })?;

    fs::remove_file(b.path().join(FILTERED)).unwrap();
    let ran = p.run(true).map_err(|e| e.to_string())?;
    ensure(
        ran == [
            Stage::Filter,
            Stage::Paraphrase,
            Stage::Assemble,
            Stage::Stats,
        ],
        || format!("resume ran {ran:?}"),
    )?;
    ensure(clean == outputs(b.path()), || {
        "resumed run differs from clean run".into()
    })?;
    let triplets = clean.0.iter().filter(|&&b| b == b'\n').count();
    Ok(format!(
        "{triplets} triplets byte-identical across runs, stage-by-stage and resume from filter"
    ))
}

fn stats_oracle() -> Outcome {
    let corpus = fixture_corpus();
    let (_, triplets) = dataset_for(&corpus, &InjectionConfig::default(), 5);
    let stats = compute_stats(&triplets, &corpus);
    let fold = |s: &str| {
        s.split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ")
    };
    let questions: HashSet<String> = triplets.iter().map(|t| fold(&t.question)).collect();
    let answers: HashSet<String> = triplets.iter().map(|t| fold(&t.answer)).collect();
    let vocab: HashSet<String> = triplets
        .iter()
        .flat_map(|t| {
            reference_tokens(&t.question)
                .into_iter()
                .chain(reference_tokens(&t.answer))
        })
        .collect();
    let caption_vocab: HashSet<String> = fixture_captions()
        .iter()
        .flat_map(|c| reference_tokens(&c.text))
        .collect();
    let mut per_split: HashMap<String, usize> = HashMap::new();
    let mut per_ctype: HashMap<String, usize> = HashMap::new();
    for t in &triplets {
        *per_split.entry(t.split.as_str().into()).or_default() += 1;
        *per_ctype
            .entry(t.provenance.ctype.as_str().into())
            .or_default() += 1;
    }
    let checks = [
        ("num_audios", stats.num_audios, 9),
        ("num_captions", stats.num_captions, fixture_captions().len()),
        ("num_triplets", stats.num_triplets, triplets.len()),
        (
            "num_unique_questions",
            stats.num_unique_questions,
            questions.len(),
        ),
        (
            "num_unique_answers",
            stats.num_unique_answers,
            answers.len(),
        ),
        ("vocab_size", stats.vocab_size, vocab.len()),
        (
            "caption_vocab_size",
            stats.caption_vocab_size,
            caption_vocab.len(),
        ),
    ];
    for (name, got, want) in checks {
        ensure(got == want, || format!("{name}: {got} != recount {want}"))?;
    }
    for (k, v) in &stats.per_split {
        ensure(per_split.get(k).copied().unwrap_or(0) == *v, || {
            format!("per_split[{k}] = {v}")
        })?;
    }
    for (k, v) in &stats.per_ctype {
        ensure(per_ctype.get(k).copied().unwrap_or(0) == *v, || {
            format!("per_ctype[{k}] = {v}")
        })?;
    }
    ensure(
        stats.per_split.values().sum::<usize>() == triplets.len(),
        || "per_split does not sum".into(),
    )?;

    let variants = [
        "What is heard?",
        "WHAT is  heard?",
        "what is heard?",
        "What is seen?",
    ];
    let cased: Vec<AqaTriplet> = variants.iter().map(|q| triplet("a01", q, "rain")).collect();
    let s = compute_stats(&cased, &corpus);
    ensure(
        s.num_unique_questions == 2 && s.num_unique_answers == 1,
        || {
            format!(
                "case variants: #Q {} #A {}",
                s.num_unique_questions, s.num_unique_answers
            )
        },
    )?;
    Ok(format!(
        "{} triplets, #Q {}, #A {}, vocab {} match recount; case variants collapse 4 -> 2",
        stats.num_triplets, stats.num_unique_questions, stats.num_unique_answers, stats.vocab_size
    ))
}

fn triplet(audio: &str, q: &str, a: &str) -> AqaTriplet {
    AqaTriplet {
        audio_id: audio.into(),
        audio_path: format!("audio/{audio}.wav"),
        question: q.into(),
        answer: a.into(),
        split: Split::Train,
        provenance: Provenance {
            caption_id: "c01".into(),
            ctype: CandidateType::Noun,
            origin_caption_id: "c01".into(),
            paraphrase_of: None,
        },
    }
}

fn format_round_trips() -> Outcome {
    let text = read_fixture("captions.conllu");
    let captions = parse_conllu(&text).map_err(|e| e.to_string())?;
    let written = write_conllu(&captions);
    ensure(parse_conllu(&written).unwrap() == captions, || {
        "CoNLL-U parse/serialize changed captions".into()
    })?;
    ensure(
        write_conllu(&parse_conllu(&written).unwrap()) == written,
        || "CoNLL-U serialization not stable".into(),
    )?;

    let manifest = parse_manifest(&read_fixture("manifest.jsonl"), "m").unwrap();
    ensure(
        parse_manifest(&write_manifest(&manifest), "m").unwrap() == manifest,
        || "manifest round trip".into(),
    )?;

    let corpus = fixture_corpus();
    let (_, triplets) = dataset_for(&corpus, &InjectionConfig::default(), 5);
    let mut jsonl = Vec::new();
    export_jsonl(&triplets, &mut jsonl).unwrap();
    let back = import_jsonl(std::str::from_utf8(&jsonl).unwrap()).map_err(|e| e.to_string())?;
    ensure(back == triplets, || {
        "JSONL import differs from export".into()
    })?;
    let mut again = Vec::new();
    export_jsonl(&back, &mut again).unwrap();
    ensure(again == jsonl, || {
        "JSONL re-export not byte-identical".into()
    })?;

    let tricky = vec![
        triplet("a01", "Tell me, what is \"it\"?", "rain, wind"),
        triplet("a02", "Plain?", "line\nbreak"),
        triplet("a03", "Quote\"only?", "x"),
    ];
    let mut csv_bytes = Vec::new();
    export_csv(&tricky, &mut csv_bytes).unwrap();
    let csv_text = String::from_utf8(csv_bytes.clone()).unwrap();
    let expected = "file_name,QuestionText,answer\r\n\
                    audio/a01.wav,\"Tell me, what is \"\"it\"\"?\",\"rain, wind\"\r\n\
                    audio/a02.wav,Plain?,\"line\nbreak\"\r\n\
                    audio/a03.wav,\"Quote\"\"only?\",x\r\n";
    ensure(csv_text == expected, || format!("CSV bytes: {csv_text:?}"))?;
    let mut reader = csv::Reader::from_reader(csv_bytes.as_slice());
    let rows: Vec<Vec<String>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    let want: Vec<Vec<String>> = tricky
        .iter()
        .map(|t| vec![t.audio_path.clone(), t.question.clone(), t.answer.clone()])
        .collect();
    ensure(rows == want, || {
        "CSV does not read back to the same fields".into()
    })?;
    Ok(format!(
        "{} captions, manifest, {} JSONL triplets and quoted CSV round-trip",
        captions.len(),
        triplets.len()
    ))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("f1-oracle", f1_oracle),
        ("threshold-semantics", threshold_semantics),
        ("tau-monotonicity", tau_monotonicity),
        ("cam-oracle", cam_oracle),
        ("sequence-brute-force", sequence_brute_force),
        ("ocac-laws", ocac_laws),
        ("paraphrase-cardinality", paraphrase_cardinality),
        ("end-to-end-determinism", end_to_end_determinism),
        ("stats-oracle", stats_oracle),
        ("format-round-trips", format_round_trips),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => writeln!(out, "PASS {name}: {detail}").unwrap(),
            Err(why) => {
                writeln!(out, "FAIL {name}: {why}").unwrap();
                failed.push(name);
            }
        }
    }
    out.flush().unwrap();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
