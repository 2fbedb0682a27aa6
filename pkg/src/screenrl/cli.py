"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

from . import harness
from .agent import TrainingDiverged
from .simenv import CoverageMismatch, GenerationError, SimApp, generate_app, ground_truth, render
from .vision import read_boxes_sidecar, read_pgm, write_boxes_sidecar, write_pgm

log = logging.getLogger("screenrl")


class UsageError(Exception):
    pass


def _load_json(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _load_app(path: str) -> SimApp:
    try:
        return SimApp.load(path)
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot load app {path}: {exc}") from exc


def cmd_genapp(a) -> None:
    app = generate_app(a.seed, a.screens, (a.widgets_min, a.widgets_max), a.edge_density, a.crash_rate,
                       a.guard_rate)
    app.save(a.out)
    print(f"{a.out}: {len(app.screens)} screens, {len(app.transitions)} transitions, "
          f"{len(app.crashes)} crashes, digest {app.digest()[:12]}")


def cmd_explore(a) -> None:
    data = _load_json(a.config)
    for name in ("policy", "budget", "seed", "platform"):
        v = getattr(a, name)
        if v is not None:
            data[name] = v
    cfg = harness.RunConfig.from_dict(data)
    app = _load_app(a.app) if a.app else harness.build_app(cfg)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    encoder = None
    if cfg.policy != "monkey":
        encoder = harness.get_encoder(cfg.encoder, cfg.embedding.d_layout, cfg.encoder_seed,
                                      cfg.encoder_epochs, cache_dir=a.encoder_cache)
    t0 = time.perf_counter()
    report, episode, net = harness.run(cfg, app, encoder)
    elapsed = time.perf_counter() - t0
    (out / "run.ndjson").write_text(harness.dump_log(episode))
    (out / "report.json").write_text(harness.dump_json(report))
    (out / "config.json").write_text(harness.dump_json(cfg.to_dict()))
    if net is not None:
        net.save(out / "qnet.bin")
    # wall-clock lives apart from the report so reports stay reproducible
    (out / "timing.json").write_text(harness.dump_json({"seconds": elapsed, "steps": report["steps"]}))
    print(f"screen coverage {report['screen_coverage']:.3f}, transition coverage "
          f"{report['transition_coverage']:.3f}, crashes {len(report['crashes_found'])}")
    if report["aborted"]:
        raise RuntimeError("session aborted; see the last log record")


def cmd_report(a) -> None:
    app = _load_app(a.app)
    report = harness.report_from_log(app, harness.read_log(a.log))
    text = harness.dump_json(report)
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_crosscov(a) -> None:
    ra, rb = _load_json(a.a), _load_json(a.b)
    if ra.get("app_digest") != rb.get("app_digest"):
        raise harness.UniverseMismatch("reports describe different apps")
    screens = range(ra["screens_total"])
    trans = range(ra["transitions_total"])
    out = {}
    for name, key, universe in (("screens", "screens_visited", screens), ("transitions", "transitions_fired", trans)):
        sa, sb = ra[key], rb[key]
        out[name] = {"a_over_b": harness.cross_coverage(sa, sb, universe),
                     "b_over_a": harness.cross_coverage(sb, sa, universe),
                     "intersection": harness.intersection_coverage(sa, sb, universe)}
    sys.stdout.write(harness.dump_json(out))


def cmd_bench(a) -> None:
    suite = harness.BenchSuite.from_dict(_load_json(a.suite)) if a.suite else harness.BenchSuite()
    if a.apps:
        suite = dataclasses.replace(suite, app_seeds=tuple(range(1, a.apps + 1)))
    if a.reps:
        suite = dataclasses.replace(suite, repetitions=a.reps)
    if a.encoder_cache:
        harness.get_encoder(suite.base.encoder, suite.base.embedding.d_layout, suite.base.encoder_seed,
                            suite.base.encoder_epochs, cache_dir=a.encoder_cache)
    rows, summary = harness.bench(suite, progress=lambda r: log.info("app %d %s rep %d: %.3f", r["app_seed"],
                                                                      r["policy"], r["rep"], r["screen_coverage"]))
    with open(a.out, "w", newline="") as fh:
        cols = ["app_seed", "policy", "rep", "screen_coverage", "transition_coverage", "crashes", "click_share"]
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    text = harness.dump_json(summary)
    Path(a.out).with_suffix(".summary.json").write_text(text)
    sys.stdout.write(text)


def cmd_export_corpus(a) -> None:
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for seed in range(a.seed, a.seed + a.apps):
        app = generate_app(seed)
        for s in app.screens[:a.per_app]:
            stem = out / f"app{seed:03d}_s{s.id:02d}"
            write_pgm(stem.with_suffix(".pgm"), render(app, s.id))
            write_boxes_sidecar(stem.with_suffix(".json"), ground_truth(app, s.id))
            n += 1
    print(f"wrote {n} screenshots to {out}")


def cmd_eval_vision(a) -> None:
    from .vision import canny_edges, detection_counts, extract_widget_boxes, f1_score
    files = sorted(Path(a.corpus).glob("*.pgm"))
    if not files:
        raise UsageError(f"no .pgm screenshots in {a.corpus}")
    tp = fp = fn = 0
    for f in files:
        truth = [b for b, _ in read_boxes_sidecar(f.with_suffix(".json"))]
        found = extract_widget_boxes(canny_edges(read_pgm(f)))
        c = detection_counts(found, truth, a.iou)
        tp, fp, fn = tp + c[0], fp + c[1], fn + c[2]
    precision, recall, f1 = f1_score(tp, fp, fn)
    sys.stdout.write(harness.dump_json({"images": len(files), "tp": tp, "fp": fp, "fn": fn,
                                        "precision": precision, "recall": recall, "f1": f1}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="screenrl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("genapp", help="generate a simulated app")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--screens", type=int, default=30)
    g.add_argument("--widgets-min", type=int, default=3)
    g.add_argument("--widgets-max", type=int, default=8)
    g.add_argument("--edge-density", type=float, default=0.3)
    g.add_argument("--crash-rate", type=float, default=0.03)
    g.add_argument("--guard-rate", type=float, default=0.25)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_genapp)

    e = sub.add_parser("explore", help="run one exploration session")
    e.add_argument("--app")
    e.add_argument("--policy", choices=harness.POLICIES)
    e.add_argument("--budget", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--platform", choices=("mobile", "web"))
    e.add_argument("--config", help="RunConfig JSON; flags override it")
    e.add_argument("--encoder-cache", help="directory for trained layout encoder weights")
    e.add_argument("--out-dir", required=True)
    e.set_defaults(func=cmd_explore)

    r = sub.add_parser("report", help="recompute a report from a log")
    r.add_argument("--log", required=True)
    r.add_argument("--app", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("crosscov", help="cross-coverage between two reports")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.set_defaults(func=cmd_crosscov)

    b = sub.add_parser("bench", help="DQN vs baselines over generated apps")
    b.add_argument("--suite")
    b.add_argument("--apps", type=int)
    b.add_argument("--reps", type=int)
    b.add_argument("--encoder-cache")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    x = sub.add_parser("export-corpus", help="write screenshots with ground-truth boxes")
    x.add_argument("--seed", type=int, default=1)
    x.add_argument("--apps", type=int, default=10)
    x.add_argument("--per-app", type=int, default=10)
    x.add_argument("--out-dir", required=True)
    x.set_defaults(func=cmd_export_corpus)

    v = sub.add_parser("eval-vision", help="widget detection F1 over an exported corpus")
    v.add_argument("--corpus", required=True)
    v.add_argument("--iou", type=float, default=0.8)
    v.set_defaults(func=cmd_eval_vision)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (harness.ConfigError, UsageError, GenerationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (harness.UniverseMismatch, CoverageMismatch, TrainingDiverged, RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
