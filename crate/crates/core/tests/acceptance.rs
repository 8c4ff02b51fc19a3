//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::time::{Duration, Instant};

use lexnorm::baseline::{correct, edits1, edits2, Dictionary};
use lexnorm::bench::{synthetic_corpus, synthetic_table, time_indexing, DOUBLING_RATIO};
use lexnorm::bounds::{bounds_report, fn_bound, fp_bound, EdgeModelParams};
use lexnorm::graph::{build_graph, connected_components, prune, BuildOptions};
use lexnorm::hashing::{dense_bins, jaccard_exact, word_signature};
use lexnorm::index_store::{BUCKETS_FILE, MANIFEST_FILE, VOCAB_FILE};
use lexnorm::pipeline::{index_corpus, index_reader_with, normalize_stream, tokenize, IndexOptions, NormalizeOptions, WhitespaceTokenizer};
use lexnorm::{load_index, save_index, CollisionGraph, Coefficients, Index, LshParams, WordId, WordTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn table(words: &[&str]) -> WordTable {
    WordTable::from_counts(words.iter().enumerate().map(|(i, w)| (w.to_string(), 1 + i as u64))).unwrap()
}

fn coefficient_draws(params: &LshParams, first_seed: u64, n: u64) -> Vec<(LshParams, Coefficients)> {
    (first_seed..first_seed + n)
        .map(|seed| {
            let p = LshParams { seed, ..params.clone() };
            let c = Coefficients::draw(&p);
            (p, c)
        })
        .collect()
}

/// P(Bin(n, p) >= k), summed term by term.
fn binomial_tail(n: u64, p: f64, k: u64) -> f64 {
    (k..=n)
        .map(|i| {
            let choose: f64 = (0..i).map(|j| (n - j) as f64 / (j + 1) as f64).product();
            choose * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32)
        })
        .sum()
}

fn random_word(rng: &mut ChaCha8Rng, len: usize, alphabet: &[u8]) -> String {
    (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())] as char).collect()
}

/// Word pairs spread over ten Jaccard strata, five per stratum.
fn stratified_pairs(charlens: &[usize]) -> Vec<(String, String, f64)> {
    let mut strata: Vec<Vec<(String, String, f64)>> = vec![Vec::new(); 10];
    let push = |strata: &mut Vec<Vec<(String, String, f64)>>, a: String, b: String| {
        let j = jaccard_exact(&a, &b, charlens).unwrap().value();
        let s = ((j * 10.0) as usize).min(9);
        if strata[s].len() < 5 && strata[s].iter().all(|(x, y, _)| (x, y) != (&a, &b)) {
            strata[s].push((a, b, j));
        }
    };
    // identical substring sets from distinct periodic words
    push(&mut strata, "abcabcabc".into(), "abcabcabcabc".into());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let letters = b"abcdefghijklmnopqrstuvwxyz";
    for round in 0..20_000 {
        let len = rng.random_range(5..=40);
        let base = random_word(&mut rng, len, if round % 2 == 0 { letters } else { b"abcdef" });
        let variant = match rng.random_range(0..4) {
            0 => {
                let cut = rng.random_range(1..len);
                let tail_len = rng.random_range(0..len);
                let tail = random_word(&mut rng, tail_len, letters);
                format!("{}{}", &base[..cut], tail)
            }
            1 => {
                let mut chars: Vec<char> = base.chars().collect();
                let i = rng.random_range(0..len);
                chars[i] = letters[rng.random_range(0..26)] as char;
                chars.into_iter().collect()
            }
            2 => format!("{base}{}", letters[rng.random_range(0..26)] as char),
            _ => {
                let other_len = rng.random_range(3..12);
                random_word(&mut rng, other_len, letters)
            }
        };
        if variant != base && variant.chars().count() >= 3 {
            push(&mut strata, base, variant);
        }
        if strata.iter().all(|s| s.len() == 5) {
            break;
        }
    }
    strata.into_iter().flatten().collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let params = LshParams::default();
    let pairs = stratified_pairs(&params.charlens);
    if pairs.len() != 50 {
        return outcome(false, format!("only {} stratified pairs generated", pairs.len()));
    }
    let draws = coefficient_draws(&params, 1_000_000, 2000);
    let mut worst = (0.0f64, String::new());
    let mut failures = 0;
    let (mut j_min, mut j_max) = (1.0f64, 0.0f64);
    for (a, b, j) in &pairs {
        j_min = j_min.min(*j);
        j_max = j_max.max(*j);
        let mut hits = 0u64;
        let mut total = 0u64;
        for (p, c) in &draws {
            let x = dense_bins(a, 0, p, c).unwrap();
            let y = dense_bins(b, 0, p, c).unwrap();
            hits += x.iter().zip(&y).filter(|(u, v)| u == v).count() as u64;
            total += x.len() as u64;
        }
        let rate = hits as f64 / total as f64;
        let err = (rate - j).abs();
        if err > 0.05 {
            failures += 1;
        }
        if err > worst.0 {
            worst = (err, format!("{a}/{b} J={j:.3} rate={rate:.3}"));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < Duration::from_secs(60),
        format!(
            "50 pairs, J in [{j_min:.3}, {j_max:.3}], 2000 draws; {failures} outside ±0.05; worst |rate-J|={:.4} ({}); {:.1}s",
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let params = LshParams::default();
    let threshold = (params.alpha * params.num_repetitions as f64).ceil() as u64;
    let high = [("amazing", "amazingg"), ("computer", "compute"), ("tomorrow", "tomorroww"), ("wonderful", "wonderfull")];
    let low = [
        ("unfortunately", "fortune"),
        ("xylophone", "telephone"),
        ("weekend", "weekday"),
        ("because", "becuase"),
        ("monday", "sunday"),
        ("together", "gather"),
    ];
    let r_draws = coefficient_draws(&params, 2_000_000, 4000);
    let per_rep_rate = |a: &str, b: &str| {
        r_draws
            .iter()
            .filter(|(p, c)| word_signature(a, 0, p, c) == word_signature(b, 0, p, c))
            .count() as f64
            / r_draws.len() as f64
    };
    let survival = |a: &str, b: &str| {
        let words = table(&[a, b]);
        let (ia, ib) = (words.id(a).unwrap(), words.id(b).unwrap());
        (0..200u64)
            .filter(|&seed| {
                let p = LshParams { seed, ..params.clone() };
                let c = Coefficients::draw(&p);
                let (g, _) = build_graph(&words, &p, &c, &BuildOptions::default()).unwrap();
                prune(&g, p.alpha, p.num_repetitions).weight(ia, ib) > 0
            })
            .count() as u64
    };

    let mut ok = true;
    let mut notes = Vec::new();
    for (a, b) in high {
        let j = jaccard_exact(a, b, &params.charlens).unwrap().value();
        let predicted = binomial_tail(params.num_repetitions as u64, per_rep_rate(a, b), threshold);
        let s = survival(a, b) as f64 / 200.0;
        ok &= j >= 0.75 && s >= 0.90 && predicted >= 0.90;
        notes.push(format!("{a}/{b} J={j:.2} surv={s:.3} pred={predicted:.3}"));
    }
    let (mut low_hits, mut low_runs) = (0u64, 0u64);
    for (a, b) in low {
        let j = jaccard_exact(a, b, &params.charlens).unwrap().value();
        let predicted = binomial_tail(params.num_repetitions as u64, per_rep_rate(a, b), threshold);
        let hits = survival(a, b);
        low_hits += hits;
        low_runs += 200;
        let s = hits as f64 / 200.0;
        // observed count must be consistent with the binomial prediction
        let se = (predicted * (1.0 - predicted) / 200.0).sqrt();
        ok &= j <= 0.2 && predicted <= 0.01 && s <= predicted + 3.0 * se + 1.0 / 200.0;
        notes.push(format!("{a}/{b} J={j:.2} surv={s:.3} pred={predicted:.4}"));
    }
    let pooled = low_hits as f64 / low_runs as f64;
    ok &= pooled <= 0.01;
    outcome(ok, format!("low-J pooled survival {pooled:.4}; {}", notes.join("; ")))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let model = |t: usize| EdgeModelParams {
        p: 0.9,
        q: 0.3,
        cluster_sizes: vec![5, 5],
        repetitions: t,
        alpha: 0.5,
        trials: 10_000,
        seed: 3,
    };
    let mut ok = true;
    let mut notes = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for t in [10, 20, 30] {
        let r = bounds_report(&model(t), 4, false).unwrap();
        let (fp, fnr) = (&r.false_positive, &r.false_negative);
        ok &= fp.within_envelope == Some(true) && fnr.within_envelope == Some(true);
        let (fpb, fnb) = (fp.bound.unwrap().value, fnr.bound.unwrap().value);
        if let Some((a, b)) = prev {
            ok &= fpb < a && fnb < b;
        }
        prev = Some((fpb, fnb));
        notes.push(format!(
            "T={t} fp {:.2e}<={fpb:.2e}+3se fn {:.2e}<={fnb:.2e}+3se",
            fp.empirical_rate, fnr.empirical_rate
        ));
    }
    // FP bound linear in |c|, FN bound exactly fn(1)^|c|
    for t in [10, 20, 30] {
        let fp1 = fp_bound(t, 0.3, 0.5, 1).unwrap().value;
        let fn1 = fn_bound(t, 0.9, 0.5, 1).unwrap().value;
        for c in 2..=10 {
            let fpc = fp_bound(t, 0.3, 0.5, c).unwrap().value;
            let fnc = fn_bound(t, 0.9, 0.5, c).unwrap().value;
            let fn_prev = fn_bound(t, 0.9, 0.5, c - 1).unwrap().value;
            ok &= (fpc / fp1 - c as f64).abs() < 1e-9;
            ok &= fnc < fn_prev && (fnc / fn1.powi(c as i32) - 1.0).abs() < 1e-9;
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    outcome(ok, format!("{}; |c| scaling exact; {:.1}s", notes.join("; "), elapsed.as_secs_f64()))
}

/// exp(x) for x > 0 by Taylor series on x/2^k then squaring.
fn series_exp(x: f64) -> f64 {
    let k = 8;
    let y = x / f64::from(1u32 << k);
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for n in 1..40 {
        term *= y / n as f64;
        sum += term;
    }
    (0..k).fold(sum, |acc, _| acc * acc)
}

fn criterion_4() -> Outcome {
    let eval = fp_bound(10, 0.05, 0.5, 100).unwrap();
    // exponent T (q - alpha)^2 / (3 q) = 10 * 0.2025 / 0.15 = 13.5
    let independent = 100.0 / series_exp(13.5);
    let rel = (eval.value - independent).abs() / independent;
    let stated = 0.000014;
    let matches_stated = (eval.value - stated).abs() / stated < 5e-7;
    let ok = rel < 5e-7
        && (eval.value - 1.37e-4).abs() < 0.005e-4
        && (eval.delta - 9.0).abs() < 1e-12
        && !eval.delta_in_range
        && !matches_stated;
    outcome(
        ok,
        format!(
            "value {:.6e} vs independent {independent:.6e} (rel {rel:.1e}); delta {} in (0,1]: {}; stated 0.000014 matched: {matches_stated}",
            eval.value, eval.delta, eval.delta_in_range
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("corpus.txt");
    fs::write(&input, synthetic_corpus(100_000, 8, 30_000, 5)).unwrap();
    let params = LshParams { seed: 77, ..Default::default() };
    let mut runs = Vec::new();
    for (name, workers) in [("a", 1), ("b", 1), ("c", 4)] {
        let out = dir.path().join(name);
        let opts = IndexOptions { workers, ..Default::default() };
        index_corpus(&input, params.clone(), &out, &opts).unwrap();
        let files: Vec<Vec<u8>> = [MANIFEST_FILE, VOCAB_FILE, BUCKETS_FILE]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        runs.push(files);
    }
    let same_seed = runs[0] == runs[1];
    let same_workers = runs[0] == runs[2];
    let elapsed = start.elapsed();
    outcome(
        same_seed && same_workers && elapsed < Duration::from_secs(300),
        format!(
            "100k lines; repeat identical: {same_seed}; 1 vs 4 workers identical: {same_workers}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn pair_sets_per_repetition(index: &lexnorm::graph::BucketIndex) -> Vec<HashSet<(WordId, WordId)>> {
    index
        .repetitions
        .iter()
        .map(|rep| {
            let mut pairs = HashSet::new();
            for (_, ids) in rep.entries() {
                for (i, &a) in ids.iter().enumerate() {
                    for &b in &ids[i + 1..] {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
            pairs
        })
        .collect()
}

fn edge_set(g: &CollisionGraph) -> HashSet<(WordId, WordId)> {
    g.edges().into_iter().map(|(a, b, _)| (a, b)).collect()
}

fn criterion_6() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for seed in 0..4u64 {
        // periodic words share their whole substring set, so they collide in every repetition
        let periodic = ["abcabcabc", "abcabcabcabc", "xyzxyzxyz", "xyzxyzxyzxyzx", "qrqrqrqr", "qrqrqrqrqrq"];
        let mut counts: Vec<(String, u64)> = synthetic_table(4000, 100 + seed)
            .iter()
            .map(|(_, t, f)| (t.to_string(), f))
            .collect();
        counts.extend(periodic.iter().map(|w| (w.to_string(), 3)));
        let words = WordTable::from_counts(counts).unwrap();
        let params = LshParams { seed, ..Default::default() };
        let coeffs = Coefficients::draw(&params);
        let (g, buckets) = build_graph(&words, &params, &coeffs, &BuildOptions::default()).unwrap();
        let t = params.num_repetitions;

        let member_sets = |alpha: f64| -> Vec<BTreeSet<WordId>> {
            connected_components(&prune(&g, alpha, t), &words)
                .into_iter()
                .map(|c| c.members.into_iter().collect())
                .collect()
        };
        let coarse = member_sets(0.2);
        let fine = member_sets(0.5);
        let mut owner = vec![usize::MAX; words.len()];
        for (i, c) in coarse.iter().enumerate() {
            for &m in c {
                owner[m as usize] = i;
            }
        }
        let refines = fine.iter().all(|c| {
            let first = owner[*c.first().unwrap() as usize];
            c.iter().all(|&m| owner[m as usize] == first)
        });

        let per_rep = pair_sets_per_repetition(&buckets);
        let union: HashSet<_> = per_rep.iter().flatten().copied().collect();
        let intersection: HashSet<_> = per_rep[0]
            .iter()
            .filter(|p| per_rep.iter().all(|s| s.contains(p)))
            .copied()
            .collect();
        let union_ok = edge_set(&prune(&g, 0.0, t)) == union;
        let inter_ok = edge_set(&prune(&g, 1.0, t)) == intersection;
        ok &= refines && union_ok && inter_ok && intersection.len() >= periodic.len() / 2;
        notes.push(format!(
            "seed {seed}: {} fine in {} coarse, union {} edges, intersection {} edges",
            fine.len(),
            coarse.len(),
            union.len(),
            intersection.len()
        ));
    }
    outcome(ok, notes.join("; "))
}

fn normalize(text: &str, index: &Index) -> (String, u64) {
    let mut out = Vec::new();
    let s = normalize_stream(text.as_bytes(), &mut out, index, &WhitespaceTokenizer, "<acceptance>", &NormalizeOptions::default())
        .unwrap();
    (String::from_utf8(out).unwrap(), s.tokens)
}

fn criterion_7() -> Outcome {
    let text = synthetic_corpus(5000, 7, 3000, 42);
    let index = index_reader_with(text.as_bytes(), &WhitespaceTokenizer, "<acceptance>", LshParams::default(), &IndexOptions::default())
        .unwrap();
    let (once, tokens) = normalize(&text, &index);
    let (twice, _) = normalize(&once, &index);
    let idempotent = once == twice;
    let conserved = tokens == tokenize(&text, false).unwrap().len() as u64
        && tokenize(&once, false).unwrap().len() as u64 == tokens
        && once.lines().count() == text.lines().count();

    let reps: Vec<&str> = index
        .vocabulary
        .components()
        .iter()
        .map(|c| index.words.token(c.representative))
        .collect();
    let rep_corpus: String = reps.chunks(9).map(|c| c.join(" ") + "\n").collect();
    let fixpoint = normalize(&rep_corpus, &index).0 == rep_corpus;
    let replaced = text.split_whitespace().zip(once.split_whitespace()).filter(|(a, b)| a != b).count();
    outcome(
        idempotent && conserved && fixpoint,
        format!(
            "idempotent: {idempotent}; tokens conserved ({tokens}): {conserved}; representative corpus fixpoint: {fixpoint}; {replaced} tokens rewritten"
        ),
    )
}

fn criterion_8() -> Outcome {
    let (low, high) = DOUBLING_RATIO;
    let tables = [(100_000usize, synthetic_table(100_000, 7)), (200_000, synthetic_table(200_000, 7))];
    let mut times = BTreeMap::new();
    for (n, table) in &tables {
        for t in [10usize, 20] {
            let params = LshParams { num_repetitions: t, ..Default::default() };
            times.insert((*n, t), time_indexing(table, &params, 1, 5).unwrap());
        }
    }
    let ratios = [
        ("N 1e5->2e5 @T=10", times[&(200_000, 10)] / times[&(100_000, 10)]),
        ("N 1e5->2e5 @T=20", times[&(200_000, 20)] / times[&(100_000, 20)]),
        ("T 10->20 @N=1e5", times[&(100_000, 20)] / times[&(100_000, 10)]),
        ("T 10->20 @N=2e5", times[&(200_000, 20)] / times[&(200_000, 10)]),
    ];
    let ok = ratios.iter().all(|(_, r)| (low..=high).contains(r));
    let notes: Vec<String> = ratios.iter().map(|(n, r)| format!("{n} {r:.2}")).collect();
    outcome(ok, format!("bounds [{low}, {high}]; {}", notes.join("; ")))
}

fn criterion_9() -> Outcome {
    let alphabet: Vec<char> = lexnorm::baseline::DEFAULT_ALPHABET.chars().collect();
    let dict = Dictionary::new([("spelling".to_string(), 100)]).unwrap();
    let fixed = correct("speling", &dict, 1, &alphabet);
    let words = ["abc", "abcdef", "abcdefghijkl"];
    let e1: Vec<usize> = words.iter().map(|w| edits1(w, &alphabet).len()).collect();
    let e2: Vec<usize> = words.iter().map(|w| edits2(w, &alphabet).len()).collect();
    // one edit grows linearly in length, two edits superlinearly
    let linear = e1.windows(2).all(|w| {
        let r = w[1] as f64 / w[0] as f64;
        r > 1.4 && r < 2.2
    });
    let superlinear = e2.windows(2).all(|w| w[1] as f64 / w[0] as f64 > 2.2);
    outcome(
        fixed == "spelling" && linear && superlinear,
        format!("correct(speling) = {fixed:?}; |edits1| {e1:?}; |edits2| {e2:?} for lengths 3/6/12"),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures = Vec::new();
    for case in 0..20 {
        let text = if case == 0 {
            String::new()
        } else {
            let lines = rng.random_range(1..200);
            (0..lines)
                .map(|_| {
                    let n = rng.random_range(0..10);
                    (0..n)
                        .map(|_| {
                            let len = rng.random_range(1..10);
                            random_word(&mut rng, len, b"abcdefgh")
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                        + "\n"
                })
                .collect()
        };
        let params = LshParams { seed: case, num_repetitions: rng.random_range(1..25), ..Default::default() };
        let opts = IndexOptions { min_freq: rng.random_range(1..3), ..Default::default() };
        let index = index_reader_with(text.as_bytes(), &WhitespaceTokenizer, "<acceptance>", params, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_index(&index, dir.path()).unwrap();
        let loaded = load_index(dir.path()).unwrap();
        let again = tempfile::tempdir().unwrap();
        save_index(&loaded, again.path()).unwrap();
        let bytes_equal = [MANIFEST_FILE, VOCAB_FILE, BUCKETS_FILE]
            .iter()
            .all(|f| fs::read(dir.path().join(f)).unwrap() == fs::read(again.path().join(f)).unwrap());
        if loaded != index || !bytes_equal {
            failures.push(case);
        }
    }
    outcome(failures.is_empty(), format!("20 corpora (case 0 empty); failing cases: {failures:?}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("minhash fidelity", criterion_1),
        ("stabilization", criterion_2),
        ("bound envelopes", criterion_3),
        ("worked bound example", criterion_4),
        ("determinism", criterion_5),
        ("refinement monotonicity", criterion_6),
        ("idempotence and conservation", criterion_7),
        ("scaling shape", criterion_8),
        ("baseline", criterion_9),
        ("persistence round-trip", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.passed {
            failed += 1;
        }
        println!("criterion {:>2} {name}: {} | {}", i + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/10 passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
