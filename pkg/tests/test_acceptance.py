"""Acceptance criteria 1-9; each test prints one PASS/FAIL line."""

import json
import time
from collections import Counter

import numpy as np
import pytest

from oracles import assert_same_ranking, brute_force_mbest, edit_distance, micro_instance
from phonofix.align import confusion_from_counts, estimate_confusion, nw_align, raw_confusion
from phonofix.cli import main
from phonofix.decoder import decode_mbest
from phonofix.graph import build_graph
from phonofix.lexicon import EPS, parse_lexicon
from phonofix.ngram import LN10, train_ngram
from phonofix.rescorer.features import (
    COMPONENT_THRESHOLD,
    t_compare,
    t_diff,
    t_is_min,
    t_threshold,
    t_zscore,
    zscores,
)
from phonofix.rescorer.model import mwer_loss, softmax
from phonofix.sim.benchmark import ACCEPTANCE, DEFAULT_SEEDS, aggregate, run_benchmark
from phonofix.sim.scenario import ScenarioConfig


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return report


def test_criterion_1_alignment(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    alphabet = list("abcdefg")
    mismatches = 0
    for _ in range(500):
        a = [str(x) for x in rng.choice(alphabet, size=int(rng.integers(0, 15)))]
        b = [str(x) for x in rng.choice(alphabet, size=int(rng.integers(0, 15)))]
        mismatches += nw_align(a, b).distance != edit_distance(a, b)
    al = nw_align("ʃ ɜː r h a m z".split(), "ʃ ɜː r l ɒ k ˈh oʊ m z".split())
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and (al.deletions, al.substitutions) == (3, 2) and dt < 1.0
    verdict(1, ok, f"{500 - mismatches}/500 distances exact; Sherlock {al.deletions} del {al.substitutions} sub; "
                   f"{dt:.2f}s (< 1s)")


def test_criterion_2_confusion(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    dev = []
    for _ in range(200):
        ref = [str(x) for x in rng.choice(list("abcdef"), size=8)]
        obs = [p if rng.random() > 0.15 else str(rng.choice(list("abcdef"))) for p in ref if rng.random() > 0.05]
        if rng.random() < 0.3:
            obs.insert(int(rng.integers(len(obs) + 1)), "g")
        dev.append((obs, ref))
    cm = estimate_confusion(dev, inventory=list("abcdefg"))
    row_err = float(np.abs(cm.emission.sum(axis=1) - 1.0).max())
    probs, _ = raw_confusion(Counter({("a", "a"): 3, ("b", "a"): 1}))
    _, p_ins = raw_confusion(Counter({("a", "a"): 5, ("b", "b"): 2, (EPS, "a"): 1, ("a", EPS): 1, ("b", EPS): 1}))
    floored = confusion_from_counts(Counter({("a", "a"): 3, ("b", "a"): 1}), floor=0.0)
    dt = time.perf_counter() - t0
    ok = (row_err <= 1e-9 and probs[("a", "a")] == 0.75 and floored.prob("a", "a") == 0.75
          and abs(p_ins - 0.2) <= 1e-15 and dt < 1.0)
    verdict(2, ok, f"max |row sum - 1| = {row_err:.1e}; P(a|a) = {probs[('a', 'a')]}; p_ins = {p_ins}; {dt:.2f}s (< 1s)")


def test_criterion_3_decoder_brute_force(verdict):
    t0 = time.perf_counter()
    failures = []
    for seed in range(200):
        lex, lm, cm, obs = micro_instance(seed)
        got = decode_mbest(build_graph(lex, lm), cm, obs, beam=None, m=5, max_consecutive_deletions=40)
        try:
            assert_same_ranking([(a.words, a.logprob) for a in got], brute_force_mbest(lex, lm, cm, obs, 5))
        except AssertionError:
            failures.append(seed)
    dt = time.perf_counter() - t0
    verdict(3, not failures and dt < 30.0,
            f"{200 - len(failures)}/200 micro instances match exhaustive ranking within 1e-9; {dt:.1f}s (< 30s)")


def _random_path(graph, rng, stop=0.35):
    node, weight, words = graph.start, 0.0, []
    while True:
        if node in graph.eos_weights and (rng.random() < stop or len(words) > 6):
            return words, weight + graph.eos_weights[node]
        arcs = list(graph.out_arcs(node))
        _, node, _, word, w = graph.arc(arcs[int(rng.integers(len(arcs)))])
        weight += w
        if word is not None:
            words.append(word)


def test_criterion_4_path_weights(verdict):
    lex = parse_lexicon("play\tp l ey\npandora\tp ae n d ao r ah\npandorum\tp ae n d ao r ah m\nnow\tn aw\nnow\tn ow\n")
    lm = train_ngram(["play pandora", "play pandorum now", "pandora", "now play pandora", "play now"], order=2)
    g = build_graph(lex, lm)
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        words, total = _random_path(g, rng)
        worst = max(worst, abs(total - LN10 * lm.sequence_logprob(words)))
    verdict(4, worst <= 1e-9, f"50 random paths; max |path weight - ln10 * log10 P| = {worst:.1e} (<= 1e-9)")


def _ref_loss(w, batch):
    total = 0.0
    for x, r in batch:
        p = softmax(x @ w)
        total += float(p @ r)
    return total / len(batch)


def test_criterion_5_mwer(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(2, 8))
        batch = [(rng.normal(size=(k, d)), rng.uniform(0, 1, size=k))
                 for k in rng.integers(2, 7, size=int(rng.integers(1, 5)))]
        w = rng.normal(size=d)
        _, grad = mwer_loss(w, batch)
        h = 1e-5
        fd = np.array([(_ref_loss(w + h * e, batch) - _ref_loss(w - h * e, batch)) / (2 * h) for e in np.eye(d)])
        worst = max(worst, float(np.max(np.abs(fd - grad)) / max(1e-8, np.max(np.abs(fd)))))
    wers = [np.array([0.0, 1.0, 0.5]), np.array([0.25, 0.75])]
    batch = [(rng.normal(size=(len(r), 3)), r) for r in wers]
    zero_loss, _ = mwer_loss(np.zeros(3), batch)
    expected = (np.mean(wers[0]) + np.mean(wers[1])) / 2
    sm_err = max(abs(softmax(rng.normal(scale=20, size=int(k))).sum() - 1.0) for k in rng.integers(1, 12, size=200))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and zero_loss == expected and sm_err <= 1e-12 and dt < 5.0
    verdict(5, ok, f"FD gradient rel err {worst:.1e} (<= 1e-4); w=0 loss {zero_loss} == {expected}; "
                   f"softmax err {sm_err:.1e}; {dt:.2f}s (< 5s)")


def test_criterion_6_transforms(verdict):
    t0 = time.perf_counter()
    checks = {}
    rng = np.random.default_rng(6)
    zs = [zscores(rng.normal(size=int(k))) for k in rng.integers(2, 12, size=100)]
    checks["zscore"] = all(abs(z.mean()) <= 1e-9 and abs(z.std() - 1.0) <= 1e-9 for z in zs)
    checks["zscore-constant"] = zscores([3.0, 3.0, 3.0]).tolist() == [0.0, 0.0, 0.0]
    v = np.array([2.0, 5.0, 1.0, 2.0])  # index 0 is the top-1 ASR hypothesis
    checks["t1"] = t_is_min(v)["is_min"].tolist() == [0.0, 0.0, 1.0, 0.0]
    d = t_diff(v)
    checks["t2"] = d["diff_min"].tolist() == [0.0, 0.0, -1.0, 0.0] and d["diff_max"].tolist() == [0.0, 3.0, 0.0, 0.0]
    c = t_compare(v)
    checks["t3"] = (c["eq"].tolist() == [1.0, 0.0, 0.0, 1.0] and c["lt"].tolist() == [0.0, 0.0, 1.0, 0.0]
                    and c["gt"].tolist() == [0.0, 1.0, 0.0, 0.0])
    z = t_zscore(np.array([-1.0, -2.0, -3.0]))
    checks["t4"] = (np.allclose(z["z_max"], [1.2247448714, 0.0, 0.0], atol=1e-9)
                    and np.allclose(z["z_min"], [0.0, 0.0, -1.2247448714], atol=1e-9))
    above = t_threshold(np.array([-3.0, -6.5, -12.0]), COMPONENT_THRESHOLD)
    below = t_threshold(np.array([-7.5, -9.0]), COMPONENT_THRESHOLD)
    checks["t5"] = (COMPONENT_THRESHOLD == np.log10(1e-7)
                    and above["max_gt"].tolist() == [1.0] * 3 and above["max_lt"].tolist() == [0.0] * 3
                    and below["max_gt"].tolist() == [0.0] * 2 and below["max_lt"].tolist() == [1.0] * 2)
    dt = time.perf_counter() - t0
    failed = [k for k, ok in checks.items() if not ok]
    verdict(6, not failed and dt < 1.0,
            f"{len(checks) - len(failed)}/{len(checks)} transform checks (t = {COMPONENT_THRESHOLD}); {dt:.2f}s (< 1s)"
            + (f"; failed {failed}" if failed else ""))


@pytest.fixture(scope="module")
def benchmark_runs():
    t0 = time.perf_counter()
    reports = [run_benchmark(ScenarioConfig(seed=s)).report for s in DEFAULT_SEEDS]
    return reports, time.perf_counter() - t0


def test_criterion_7_end_to_end(verdict, benchmark_runs):
    reports, dt = benchmark_runs
    agg = aggregate(reports)
    tail_min = ACCEPTANCE["tail_min_mean_relative_reduction"]
    head_max = ACCEPTANCE["head_max_mean_relative_degradation"]
    ok = (agg["tail_sandwich_all"] and agg["tail_mean_relative_reduction"] >= tail_min
          and agg["head_mean_relative_degradation"] <= head_max and dt < 300.0)
    verdict(7, ok, f"{len(reports)} seeds; tail sandwich on all seeds: {agg['tail_sandwich_all']}; "
                   f"tail mean rel. reduction {agg['tail_mean_relative_reduction']:.2%} (>= {tail_min:.0%}); "
                   f"head mean rel. degradation {agg['head_mean_relative_degradation']:+.2%} (<= {head_max:.0%}); "
                   f"{dt:.0f}s (< 300s)")


def test_criterion_8_lm_ablation(verdict, benchmark_runs):
    reports, _ = benchmark_runs
    full = [r["sets"]["tail"]["corrected_wer"] for r in reports]
    ablated = [r["ablations"]["-lm"]["tail"] for r in reports]
    higher = sum(a > f for a, f in zip(ablated, full))
    ok = float(np.mean(ablated)) > float(np.mean(full))
    verdict(8, ok, f"tail corrected WER without LM groups {np.mean(ablated):.4f} vs full {np.mean(full):.4f} "
                   f"(mean over {len(reports)} seeds; higher on {higher}/{len(reports)} seeds)")


SMALL = dict(n_head_words=30, n_head_entities=12, n_tail_train=8, n_tail_test=8, n_general_phrases=30,
             n_lm_train=400, n_dev=200, n_rescorer_train=60, n_test_head=30, n_test_tail=30)


def _determinism_commands(root):
    s = root / "sim"
    lex, ent, stale, conf = (str(s / n) for n in ("lexicon.txt", "entity.arpa", "stale.arpa", "confusion.json"))
    feats = ["--lexicon", lex, "--confusion", conf, "--lm", stale, "--lm", ent]
    graph = ["--lexicon", lex, "--lm", ent]
    return {
        "lexicon validate": ["lexicon", "validate", lex],
        "lm train": ["lm", "train", str(s / "entity_corpus.txt"), "--order", "2", "-o", "{out}"],
        "lm score": ["lm", "score", ent, str(s / "entity_corpus.txt"), "-o", "{out}"],
        "confusion estimate": ["confusion", "estimate", str(root / "pairs.tsv"), "--lexicon", lex, "-o", "{out}"],
        "confusion apply": ["confusion", "apply", conf, str(root / "pairs.tsv"), "-o", "{out}"],
        "graph build": ["graph", "build", *graph, "-o", "{out}"],
        "graph dump": ["graph", "dump", *graph, "-o", "{out}"],
        "ptt decode": ["ptt", "decode", *graph, "--lm-vocab-only", "--confusion", conf, str(root / "raw.jsonl"),
                       "-o", "{out}"],
        "rescore train": ["rescore", "train", *feats, "--seed", "3", str(s / "train.jsonl"), "-o", "{out}"],
        "rescore apply": ["rescore", "apply", *feats, "--model", str(s / "model.json"), str(s / "test_tail.jsonl"),
                          "-o", "{out}"],
        "rescore ablate": ["rescore", "ablate", *feats, "--epochs", "5", str(s / "train.jsonl"),
                           "--test", str(s / "test_tail.jsonl"), "-o", "{out}"],
        "evaluate": ["evaluate", "--kbest", str(s / "test_tail.jsonl"), "-o", "{out}"],
        "simulate": ["simulate", "--seed", "4", "--config", str(root / "small.json"), "--out", "{out}"],
    }


def _snapshot(path):
    if path.is_dir():
        return {p.name: p.read_bytes() for p in sorted(path.iterdir())}
    return path.read_bytes() if path.exists() else b""


def test_criterion_9_cli_determinism(verdict, tmp_path, capsys):
    (tmp_path / "small.json").write_text(json.dumps(SMALL))
    assert main(["simulate", "--seed", "4", "--config", str(tmp_path / "small.json"), "--out", str(tmp_path / "sim")]) == 0
    with open(tmp_path / "sim/test_tail.jsonl") as f, open(tmp_path / "raw.jsonl", "w") as g:
        for line in f:
            doc = json.loads(line)
            doc.pop("kbest")
            g.write(json.dumps(doc) + "\n")
    with open(tmp_path / "sim/train.jsonl") as f, open(tmp_path / "pairs.tsv", "w") as g:
        for line in f:
            doc = json.loads(line)
            g.write(f"{doc['obs']}\t{' '.join(doc['obs'].split()[1:])}\n")
    differing = []
    for name, template in _determinism_commands(tmp_path).items():
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / f"{name.replace(' ', '_')}.{run}"
            capsys.readouterr()
            code = main([a.replace("{out}", str(out)) for a in template])
            outputs.append((code, capsys.readouterr().out, _snapshot(out)))
        if outputs[0] != outputs[1] or outputs[0][0] != 0:
            differing.append(name)
    n = len(_determinism_commands(tmp_path))
    verdict(9, not differing, f"{n - len(differing)}/{n} subcommands byte-identical across two runs"
                              + (f"; differing: {differing}" if differing else ""))
