"""Acceptance criteria, one test each, at their stated tolerances.

Each test prints a single ``PASS`` / ``FAIL`` line and the lines are repeated
in the terminal summary. Run directly with ``python3 tests/test_acceptance.py``.
"""

import dataclasses
import time

import numpy as np
import pytest

import conftest
from oracles import bfs_distances, forests, size, spearman, to_string

from screenrl.actions import KIND_BY_NAME, Action
from screenrl.agent import ExplorationMemory, QNetwork, Transition, reward, sample_batch, select_action, softmax
from screenrl.embedding import (EmbeddingConfig, layout_pairs, page_similarity, page_state, random_layout_strings,
                                same_page, split_pairs, train_layout_encoder)
from screenrl.harness import (BenchSuite, RunConfig, bench, cross_coverage, dump_json, dump_log,
                              intersection_coverage, run)
from screenrl.layout import tree_edit_distance
from screenrl.simenv import generate_app, ground_truth, render
from screenrl.vision import WidgetBox, canny_edges, detection_counts, extract_widget_boxes, f1_score


def report(n, ok, detail, started, limit):
    elapsed = time.perf_counter() - started
    in_time = elapsed < limit
    line = f"{'PASS' if ok and in_time else 'FAIL'} criterion {n:>2}: {detail} ({elapsed:.1f}s, limit {limit:g}s)"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert in_time, line


def test_criterion_01_reward_table():
    t0 = time.perf_counter()
    table = [((10, 0, 1), 1.0), ((8, 3, 4), 0.3125), ((5, 5, 1), 0.0)]
    # further cases computed by hand: (1 - n/m) / sqrt(N)
    table += [
        ((1, 0, 1), 1.0), ((1, 1, 1), 0.0), ((2, 1, 1), 0.5), ((4, 1, 1), 0.75), ((4, 2, 4), 0.25),
        ((4, 3, 16), 0.0625), ((10, 5, 25), 0.1), ((10, 0, 4), 0.5), ((10, 0, 100), 0.1), ((3, 0, 9), 1 / 3),
        ((3, 1, 1), 2 / 3), ((5, 1, 4), 0.4), ((6, 3, 9), 1 / 6), ((8, 2, 2), 0.75 / 2 ** 0.5),
        ((7, 7, 50), 0.0), ((12, 3, 3), 0.75 / 3 ** 0.5), ((20, 19, 1), 0.05), ((16, 4, 64), 0.09375),
        ((100, 50, 10_000), 0.005), ((2, 0, 2), 2 ** -0.5),
    ]
    assert len(table) == 23
    bad = [(args, want, reward(*args)) for args, want in table if abs(reward(*args) - want) > 1e-9]
    report(1, not bad, f"{len(table)} reward cases, {len(bad)} off by more than 1e-9", t0, 1)


def test_criterion_02_tree_edit_distance():
    t0 = time.perf_counter()
    checked = 0
    wrong = []
    # every pair of trees with at most 4 nodes each, against breadth-first edit-script search;
    # an optimal script can delete first and insert last, so intermediates never exceed the larger tree
    small = [(f, size(f)) for n in range(1, 5) for f in forests(n) if len(f) == 1]
    for fa, _ in small:
        dist = bfs_distances(fa, 4)
        sa = to_string(fa)
        for fb, _ in small:
            got = tree_edit_distance(sa, to_string(fb))
            checked += 1
            if got != dist[fb]:
                wrong.append((sa, to_string(fb), got, dist[fb]))
    # every 5- and 6-node tree against each single node: keep one node (relabelled if needed), delete the rest
    for n in (5, 6):
        for f in forests(n):
            if len(f) != 1:
                continue
            s = to_string(f)
            for lab in "GLC":
                want = n - 1 + (0 if lab in s else 1)
                checked += 1
                if tree_edit_distance(s, lab) != want:
                    wrong.append((s, lab))
    # metric properties on 1000 random pairs of trees with at most 6 nodes
    rng = np.random.default_rng(2)
    pool = [to_string(f) for n in range(1, 7) for f in forests(n) if len(f) == 1]
    violations = 0
    for _ in range(1000):
        a, b, c = (pool[i] for i in rng.integers(len(pool), size=3))
        dab, dba = tree_edit_distance(a, b), tree_edit_distance(b, a)
        if dab != dba or tree_edit_distance(a, c) > dab + tree_edit_distance(b, c) or (dab == 0) != (a == b):
            violations += 1
    report(2, not wrong and violations == 0,
           f"{checked} exhaustive pairs, {len(wrong)} disagreements; 1000 metric triples, {violations} violations",
           t0, 120)


def test_criterion_03_vision_f1():
    t0 = time.perf_counter()
    tp = fp = fn = 0
    images = 0
    for seed in range(1, 11):
        app = generate_app(seed)
        for s in app.screens[:10]:
            truth = [b for b, _ in ground_truth(app, s.id)]
            found = extract_widget_boxes(canny_edges(render(app, s.id)))
            c = detection_counts(found, truth, 0.8)
            tp, fp, fn = tp + c[0], fp + c[1], fn + c[2]
            images += 1
    _, _, f1 = f1_score(tp, fp, fn)
    report(3, images == 100 and f1 >= 0.90, f"F1 {f1:.4f} over {images} screenshots at IoU 0.8 (need >= 0.90)",
           t0, 60)


def _rel_err(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def test_criterion_04_gradient_check():
    t0 = time.perf_counter()
    worst = 0.0
    h = 1e-5
    for k in range(10):
        net = QNetwork.init(8, 16, 3, seed=k)
        rng = np.random.default_rng(100 + k)
        for _ in range(10):
            X, y = rng.normal(size=(5, 8)), rng.normal(size=5)
            _, grads = net.loss_and_grads(X, y)
            for p, g in zip(net.params(), (t for pair in grads for t in pair)):
                flat = p.reshape(-1)
                num = np.empty_like(flat)
                for i in range(flat.size):
                    old = flat[i]
                    flat[i] = old + h
                    up = net.loss_and_grads(X, y)[0]
                    flat[i] = old - h
                    down = net.loss_and_grads(X, y)[0]
                    flat[i] = old
                    num[i] = (up - down) / (2 * h)
                worst = max(worst, _rel_err(g.reshape(-1), num))
    report(4, worst <= 1e-4, f"worst relative gradient error {worst:.2e} over 10 nets x 10 batches (need <= 1e-4)",
           t0, 30)


def test_criterion_05_similarity_contracts(structural):
    t0 = time.perf_counter()
    config = EmbeddingConfig()
    pages = []
    for seed in (1, 2, 3, 4):
        app = generate_app(seed)
        pages += [page_state(render(app, s.id), structural, config) for s in app.screens]
    rng = np.random.default_rng(5)
    problems = 0
    for _ in range(200):
        i, j = rng.integers(len(pages), size=2)
        a, b = pages[i], pages[j]
        s, r = page_similarity(a, b, config), page_similarity(b, a, config)
        problems += not (s == r and 0.0 <= s <= 1.0)
        problems += page_similarity(a, a, config) != 1.0
        problems += same_page(a, b, config) != (s >= 0.75)
    default_ok = config.same_page_threshold == 0.75
    report(5, problems == 0 and default_ok, f"200 page pairs, {problems} contract violations, threshold "
           f"{config.same_page_threshold}", t0, 60)


def test_criterion_06_memory_sampling():
    t0 = time.perf_counter()
    n = 64
    bad = 0
    rng = np.random.default_rng(6)
    for cap in (64, 100, 1000):
        mem = ExplorationMemory()
        for i in range(cap):
            mem.add(Transition(np.zeros(1), np.zeros(1), np.zeros(1), float(i), np.zeros((1, 1))))
        newest = set(range(cap - n // 2, cap))
        for _ in range(1000):
            ids = [int(t.r) for t in sample_batch(mem, n, rng)]
            head, tail = ids[:n // 2], ids[n // 2:]
            ok = set(head) == newest and len(set(tail)) == n // 2 and not set(tail) & newest
            bad += not ok
    report(6, bad == 0, f"3000 batches of {n}, {bad} malformed", t0, 10)


def test_criterion_07_boltzmann():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    sums_ok = all(abs(softmax(rng.normal(scale=10, size=int(k))).sum() - 1.0) <= 1e-9
                  for k in rng.integers(1, 50, size=500))
    acts = [Action(KIND_BY_NAME["click"], 0, WidgetBox(0, 0, 1, 1)), Action(KIND_BY_NAME["return"])]
    _, probs = select_action(np.array([1.0, 1.0]), acts, 1.0, rng)
    hand_ok = abs(probs[0] - 0.6225) <= 1e-3 and abs(probs[1] - 0.3775) <= 1e-3
    report(7, sums_ok and hand_ok, f"softmax sums within 1e-9: {sums_ok}; hand case ({probs[0]:.4f}, {probs[1]:.4f})",
           t0, 1)


def test_criterion_08_exploration_benefit():
    t0 = time.perf_counter()
    suite = BenchSuite()
    assert suite.base.budget == 300 and suite.repetitions == 5 and suite.app_seeds == tuple(range(1, 21))
    _, summary = bench(suite)
    gain = summary["dqn_vs_random"]["relative_gain"]
    p = summary["dqn_vs_random"]["wilcoxon_p"]
    dq, rd = summary["policies"]["dqn"], summary["policies"]["random"]
    crashes_ok = dq["distinct_crashes"] >= rd["distinct_crashes"]
    report(8, gain >= 0.15 and p < 0.05 and crashes_ok,
           f"median coverage dqn {dq['median_screen_coverage']:.4f} vs random {rd['median_screen_coverage']:.4f}, "
           f"relative gain {gain:+.1%} (need >= +15%), Wilcoxon p {p:.3f} (need < 0.05), "
           f"distinct crashes {dq['distinct_crashes']} vs {rd['distinct_crashes']}", t0, 1200)


def test_criterion_09_layout_encoder():
    t0 = time.perf_counter()
    strings = random_layout_strings(100, 9)
    pairs = layout_pairs(strings)
    train, val, test = split_pairs(pairs, 9)
    enc = train_layout_encoder(train, dim=32, seed=9, val_pairs=val)
    emb = {s: enc.embed(s) for s in strings}
    pred = [float(np.linalg.norm(emb[a] - emb[b])) for a, b, _ in test]
    rho = spearman(pred, [d for _, _, d in test])
    report(9, len(pairs) == 10_000 and (len(train), len(val), len(test)) == (7000, 1000, 2000) and rho >= 0.6,
           f"held-out Spearman rho {rho:.3f} over {len(test)} pairs (need >= 0.6)", t0, 300)


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    mismatches = []
    for policy in ("dqn", "random", "monkey"):
        cfg = RunConfig(policy=policy, seed=10, app=dataclasses.replace(RunConfig().app, seed=4))
        r1, l1, n1 = run(cfg)
        r2, l2, n2 = run(cfg)
        if dump_log(l1) != dump_log(l2):
            mismatches.append(f"{policy} log")
        if dump_json(r1) != dump_json(r2):
            mismatches.append(f"{policy} report")
        if (n1 is None) != (n2 is None) or (n1 is not None and n1.to_bytes() != n2.to_bytes()):
            mismatches.append(f"{policy} weights")
    report(10, not mismatches, f"repeated 300-step sessions, mismatches: {mismatches or 'none'}", t0, 1200)


def test_criterion_11_cross_coverage():
    t0 = time.perf_counter()
    ok = cross_coverage({1, 2, 3, 4}, {3, 4, 5}) == 0.5
    rng = np.random.default_rng(11)
    for _ in range(100):
        a = set(rng.integers(0, 40, int(rng.integers(0, 20))).tolist())
        b = set(rng.integers(0, 40, int(rng.integers(0, 20))).tolist())
        ok &= cross_coverage(a, a) == 0.0
        ok &= (not a) or cross_coverage(a, b) == (len(a) - intersection_coverage(a, b)) / len(a)
    report(11, ok, "hand case 0.5, cross(a, a) = 0 and complement identity on 100 random sets", t0, 1)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
