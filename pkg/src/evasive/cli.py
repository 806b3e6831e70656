"""Command-line entry point: ``evasive {synth,compute,screen,experiment,bench}``.

Every command writes its resolved configuration to ``<out>/config.txt``.
Result files carry no timestamps or timings, so identical inputs give
byte-identical results; wall-clock figures go to separate ``*timing*`` files.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from itertools import combinations

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .data import (InputError, align_episode, common_frames, crash_event, ingest, ingest_crashes, load_events,
                   save_events, screen_conflicts)
from .ea_core import MODEL_SET, model_key
from .evaluation import (bootstrap_ci, negative_samples, percentile_threshold, positive_samples, retained_information,
                         retained_summary, separability, slices_from_episodes, wlt_records, FPR_TARGETS)
from .metrics import compute_metrics
from .synth import CorpusSpec, frame_suite, generate_corpus, write_corpus

log = logging.getLogger("evasive")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 2, 3
EVENTS = "events.json"
CRASH_EVENTS = "crash_events.json"


def _f(x) -> str:
    """Deterministic text for a float cell."""
    x = float(x)
    return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _input(path: str, out: str, name: str) -> str:
    # without a configured path, fall back to a corpus written by 'evasive synth' into the output directory
    if path:
        return path
    local = os.path.join(out, name)
    return local if os.path.exists(local) else ""


def _tracks(cfg: RunConfig, out: str):
    path = _input(cfg.tracks, out, "tracks.csv")
    if not path:
        raise InputError("no trajectory file given (set 'tracks' in the config or run 'evasive synth')")
    return ingest(path, cfg.schema(), cfg.resample_hz or None)


def _crashes(cfg: RunConfig, out: str):
    path = _input(cfg.crashes, out, "crashes.csv")
    return ingest_crashes(path, cfg.schema(), cfg.resample_hz or None) if path else []


# --------------------------------------------------------------------------- commands

def cmd_synth(cfg: RunConfig, out: str) -> None:
    tracks, crashes = generate_corpus(CorpusSpec(cfg.synth_crashes, cfg.synth_noncrashes, cfg.seed,
                                                 cfg.synth_rate_hz))
    write_corpus(os.path.join(out, "tracks.csv"), os.path.join(out, "crashes.csv"), tracks, crashes)
    log.info("wrote %d tracks and %d crash cases to %s", len(tracks), len(crashes), out)


def _frame_rows(pair_id, ta, tb, metrics, ep, mp, timing):
    ia, ib = common_frames(ta, tb)
    keys = [model_key(*m) for m in MODEL_SET]
    rows = []
    for i, j in zip(ia, ib):
        a, b = ta.frames[i], tb.frames[j]
        t0 = time.perf_counter()
        fm = compute_metrics(a, b, metrics, mp, ep)
        timing.append([pair_id, _f(a.timestamp), _f((time.perf_counter() - t0) * 1e3), _f(fm.elapsed * 1e3)])
        row = [pair_id, ta.track_id, tb.track_id, _f(a.timestamp)]
        for m in metrics:
            s = fm.samples[m]
            row += [_f(s.raw), _f(s.risk)]
        ea = [fm.ea_per_model.get(k) for k in keys]
        row += [_f(math.nan if v is None else v) for v in ea]
        row += [int(fm.already_colliding), int(fm.any_undefined)]
        rows.append(row)
    return rows


def cmd_compute(cfg: RunConfig, out: str) -> None:
    """Per-frame metrics for every co-present track pair and every crash case."""
    metrics = list(cfg.metrics)
    ep, mp = cfg.ea_config(), cfg.metric_params()
    header = ["pair_id", "track_a", "track_b", "time"]
    for m in metrics:
        header += [f"{m}_raw", f"{m}_risk"]
    header += [f"EA_{model_key(*m)}" for m in MODEL_SET] + ["already_colliding", "any_undefined"]
    rows, timing = [], []
    tracks = sorted(_tracks(cfg, out), key=lambda t: t.track_id)
    for ta, tb in combinations(tracks, 2):
        rows += _frame_rows(f"{ta.track_id}|{tb.track_id}", ta, tb, metrics, ep, mp, timing)
    for c in _crashes(cfg, out):
        rows += _frame_rows(c.case_id, c.track_a, c.track_b, metrics, ep, mp, timing)
    _write_csv(os.path.join(out, "frames.csv"), header, rows)
    _write_csv(os.path.join(out, "frames_timing.csv"), ["pair_id", "time", "frame_ms", "ea_ms"], timing)
    log.info("computed %d frame rows", len(rows))


def cmd_screen(cfg: RunConfig, out: str) -> None:
    """Potential conflicts from the trajectory file, plus crash events when a crash file is given."""
    metrics = list(cfg.metrics)
    counts: dict = {}
    events = screen_conflicts(_tracks(cfg, out), cfg.screen_params(), metrics, cfg.metric_params(), cfg.ea_config(),
                              counts)
    save_events(os.path.join(out, EVENTS), events)
    crashes = _crashes(cfg, out)
    if crashes:
        save_events(os.path.join(out, CRASH_EVENTS),
                    [crash_event(c, metrics, cfg.metric_params(), cfg.ea_config()) for c in crashes])
    episodes = [align_episode(e, "noncrash", cfg.lead_grid, cfg.align_tol) for e in events]
    counts["complete_episodes"] = sum(e.complete for e in episodes)
    counts["crash_cases"] = len(crashes)
    _write_json(os.path.join(out, "screen_summary.json"), counts)
    log.info("screening: %s", counts)


def _load_corpora(cfg: RunConfig, out: str):
    ev_path, cr_path = os.path.join(out, EVENTS), os.path.join(out, CRASH_EVENTS)
    if not os.path.exists(ev_path):
        raise InputError(f"noncrash events not found at {ev_path}; run 'evasive screen' first")
    if not os.path.exists(cr_path):
        raise InputError(f"crash corpus missing: no positives at {cr_path}; set 'crashes' in the config "
                         "and rerun 'evasive screen', or generate one with 'evasive synth'")
    events, crashes = load_events(ev_path), load_events(cr_path)
    if not crashes:
        raise InputError(f"crash corpus at {cr_path} is empty: no positives")
    if not events:
        raise InputError(f"no noncrash events at {ev_path}: no negatives")
    return events, crashes


def _metrics_in(events, cfg):
    have = set(events[0].series)
    return [m for m in cfg.metrics if m in have]


def cmd_separability(cfg: RunConfig, out: str) -> None:
    events, crashes = _load_corpora(cfg, out)
    header = ["metric", "window_start", "window_end", "n_pos", "n_neg", "auprc", "auroc", "ks"] + \
        [f"tpr_at_fpr_{t:g}" for t in FPR_TARGETS]
    rows, report = [], []
    for m in _metrics_in(events, cfg):
        neg = negative_samples(events, m)
        for w in cfg.lead_windows:
            pos = positive_samples(crashes, m, w)
            if len(pos) == 0 or len(neg) == 0:
                raise InputError(f"{m}: no defined {'positives' if len(pos) == 0 else 'negatives'} "
                                 f"in window [{w}, -0.1]")
            r = separability(pos, neg)
            rows.append([m, _f(w), _f(-0.1), r.n_pos, r.n_neg, _f(r.auprc), _f(r.auroc), _f(r.ks)] +
                        [_f(r.tpr_at_fpr[t]) for t in FPR_TARGETS])
            report.append(dict(metric=m, window=[w, -0.1], auprc=r.auprc, auroc=r.auroc, ks=r.ks, n_pos=r.n_pos,
                               n_neg=r.n_neg, tpr_at_fpr={f"{t:g}": v for t, v in r.tpr_at_fpr.items()}))
    _write_csv(os.path.join(out, "separability.csv"), header, rows)
    _write_json(os.path.join(out, "separability.json"), report)


def cmd_wlt(cfg: RunConfig, out: str) -> None:
    events, crashes = _load_corpora(cfg, out)
    rec_rows, sum_rows = [], []
    for m in _metrics_in(events, cfg):
        maxima = negative_samples(events, m)
        if len(maxima) == 0:
            raise InputError(f"{m}: no defined noncrash event maxima")
        thetas = {p: percentile_threshold(maxima, p) for p in cfg.percentiles}
        recs = wlt_records(crashes, m, thetas)
        for r in recs:
            rec_rows.append([m, r.case_id, _f(r.threshold_percentile), _f(r.theta), _f(r.wlt)])
        for p, theta in thetas.items():
            w = [r.wlt for r in recs if r.threshold_percentile == p]
            sum_rows.append([m, _f(p), _f(theta), len(w), _f(np.median(w)) if w else "nan",
                             _f(np.mean(np.asarray(w) > 0)) if w else "nan"])
    _write_csv(os.path.join(out, "wlt_records.csv"), ["metric", "case_id", "percentile", "theta", "wlt"], rec_rows)
    _write_csv(os.path.join(out, "wlt_summary.csv"),
               ["metric", "percentile", "theta", "n_cases", "median_wlt", "share_warned"], sum_rows)


def cmd_info(cfg: RunConfig, out: str) -> None:
    events, crashes = _load_corpora(cfg, out)
    methods = _metrics_in(events, cfg)
    episodes = [align_episode(e, "noncrash", cfg.lead_grid, cfg.align_tol) for e in events] + \
        [align_episode(e, "crash", cfg.lead_grid, cfg.align_tol) for e in crashes]
    slices = slices_from_episodes(episodes, methods)
    if not slices:
        raise InputError("no complete episodes with defined values for every metric")
    pairs = [("EA", m) for m in methods if m != "EA"] if "EA" in methods else []
    rep = retained_information(slices, methods, cfg.folds, cfg.seed, pairs)
    ci = bootstrap_ci(slices, retained_summary(methods, cfg.folds, cfg.seed, pairs), cfg.bootstrap_n,
                      cfg.bootstrap_level, cfg.seed) if rep.taus else {}
    rows = []
    for t in rep.taus:
        for m in methods:
            rows.append([_f(t), m, rep.n[t][0], rep.n[t][1], _f(rep.entropy[t]), _f(rep.residual[(t, m)]),
                         _f(rep.retained[(t, m)]), _f(rep.ratio[(t, m)])])
    _write_csv(os.path.join(out, "info.csv"),
               ["tau", "method", "n_crash", "n_noncrash", "entropy", "residual", "retained", "ratio"], rows)
    inc = [[_f(t), x, y, _f(rep.incremental[(t, x, y)])] for t in rep.taus for (a, b) in pairs
           for x, y in ((a, b), (b, a))]
    _write_csv(os.path.join(out, "info_incremental.csv"), ["tau", "added", "to", "incremental"], inc)
    summary = {
        "folds": rep.folds, "seed": rep.seed, "bootstrap_n": cfg.bootstrap_n, "level": cfg.bootstrap_level,
        "notes": rep.notes, "taus": rep.taus,
        "mean_entropy": float(np.mean([rep.entropy[t] for t in rep.taus])) if rep.taus else None,
        "mean_retained": {m: rep.mean_retained(m) for m in methods} if rep.taus else {},
        "mean_incremental": {f"{x}|{y}": rep.mean_incremental(x, y) for a, b in pairs for x, y in ((a, b), (b, a))}
        if rep.taus else {},
        "ci": {k: list(v) for k, v in ci.items()},
    }
    _write_json(os.path.join(out, "info.json"), summary)


def cmd_bench(cfg: RunConfig, out: str) -> None:
    frames = frame_suite(cfg.bench_frames, cfg.seed)
    ep = cfg.ea_config()
    from .ea_core import benchmark
    benchmark(frames[:5], ep)   # loads compiled kernels
    res = benchmark(frames, ep)
    res["horizon"] = cfg.horizon
    _write_json(os.path.join(out, "bench_timing.json"), res)
    print(f"four-model EA: {res['mean_ms']:.3f} ms/frame mean over {res['n']} frames "
          f"(p95 {res['p95_ms']:.3f}, max {res['max_ms']:.3f})")


EXPERIMENTS = {"separability": cmd_separability, "wlt": cmd_wlt, "info": cmd_info}


# --------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evasive", description="Evasive acceleration and surrogate safety metrics.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--metric", help="comma-separated metric ids, overriding the config")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic crash/noncrash corpus")
    sub.add_parser("compute", parents=[common], help="per-frame metrics CSV")
    sub.add_parser("screen", parents=[common], help="potential-conflict screening")
    ex = sub.add_parser("experiment", parents=[common], help="run one of the three experiments")
    ex.add_argument("which", choices=sorted(EXPERIMENTS))
    sub.add_parser("bench", parents=[common], help="four-model EA timing")
    return ap


def resolve(args) -> RunConfig:
    cfg = cfgmod.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.metric:
        try:
            cfg = replace(cfg, metrics=tuple(m.strip() for m in args.metric.split(",") if m.strip()))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args)
        os.makedirs(args.out, exist_ok=True)
        cfgmod.dump(cfg, os.path.join(args.out, "config.txt"))
        if args.command == "experiment":
            EXPERIMENTS[args.which](cfg, args.out)
        else:
            {"synth": cmd_synth, "compute": cmd_compute, "screen": cmd_screen, "bench": cmd_bench}[args.command](
                cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
