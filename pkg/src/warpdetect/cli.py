"""Command-line entry point: ``warpdetect <command> [flags]``.

Every command writes into ``--out``: a ``config.json`` echo, a
``timing.json`` with wall-clock per phase, and its result files.  Result
CSVs start with ``#`` lines carrying the tool version and configuration and
contain no timings, so identical inputs and seeds give identical bytes.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    continuous_benchmark_config,
    isolated_benchmark_config,
    load_manifest,
    load_model,
    save_model,
    synth_continuous,
    synth_isolated,
    write_manifest,
)
from .detect import (
    BowScorer,
    ContinuousConfig,
    ContinuousModel,
    WarpScorer,
    WindowGrid,
    detect_continuous,
    export_score_table,
    train_continuous,
)
from .encoding import Encoding, FrameEncoder
from .eval import (
    DEFAULT_C_GRID,
    DEFAULT_T_GRID,
    AblationConfig,
    binary_metrics,
    config_dict,
    continuous_eval,
    evaluate_cell,
    evaluate_dtw_kernel,
    make_folds,
    run_ablation,
    score_isolated,
    train_isolated,
)
from .warprep import WarpMode

logger = logging.getLogger("warpdetect")

ENCODINGS = [e.value for e in Encoding]
MODES = [m.value for m in WarpMode]


def _floats(text: str):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("grid values must be positive")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


# -- output helpers ----------------------------------------------------------

def _result_config(args) -> dict:
    """Configuration echoed into results (output location excluded)."""
    skip = {"out", "func", "verbose"}
    cfg = {}
    for k, v in vars(args).items():
        if k not in skip:
            cfg[k] = list(v) if isinstance(v, tuple) else str(v) if isinstance(v, Path) else v
    return {"tool": "warpdetect", "version": __version__, **cfg}


def _write_csv(path: Path, args, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# warpdetect {__version__}\n")
        fh.write("# config " + json.dumps(_result_config(args), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


class _Timer:
    def __init__(self):
        self.phases = {}

    def __call__(self, name):
        timer = self

        class _Phase:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.phases[name] = timer.phases.get(name, 0.0) + time.perf_counter() - self.t0

        return _Phase()


def _dataset(args):
    manifest, seqs = load_manifest(args.manifest)
    logger.info("loaded %d sequences from %s", len(seqs), args.manifest)
    return manifest, seqs


# -- commands ----------------------------------------------------------------

def cmd_synth(args, out: Path, timer) -> None:
    with timer("synthesise"):
        if args.kind == "isolated":
            cfg = isolated_benchmark_config(args.seed)
            write_manifest("synthetic-isolated", synth_isolated(cfg), out, provenance=json.dumps(config_dict(cfg)))
        else:
            cfg = continuous_benchmark_config(args.seed)
            words, decoys = synth_continuous(cfg)
            n_train = args.n_train
            if not 0 < n_train < len(words):
                raise ValueError(f"--n-train must be in [1, {len(words) - 1}]")
            prov = json.dumps(config_dict(cfg))
            write_manifest("synthetic-continuous-train", words[:n_train], out / "train", provenance=prov)
            write_manifest("synthetic-continuous-test", words[n_train:] + decoys, out / "test", provenance=prov)


def _ablation_config(args, **extra) -> AblationConfig:
    return AblationConfig(folds=args.folds, seed=args.seed, K=args.K, C_grid=args.C_grid,
                          T=args.T, threads=args.threads, **extra)


def cmd_train_isolated(args, out: Path, timer) -> None:
    _, seqs = _dataset(args)
    classes = sorted({str(s.label) for s in seqs if s.label is not None})
    if len(classes) < 2:
        raise ValueError("training needs at least two classes in the manifest")
    positive = args.positive or classes[0]
    config = _ablation_config(args, inner_folds=min(args.folds, 3))
    with timer("train"):
        enc, model = train_isolated(seqs, args.encoding, args.pbar, positive, config, seed=args.seed)
    with timer("score"):
        scores = score_isolated(enc, model, seqs)
    y = np.array([1 if str(s.label) == positive else -1 for s in seqs])
    m = binary_metrics(scores, y)
    save_model(model, out / "model.bin", codebook=enc.codebook,
               extra={"task": "isolated", "encoding": enc.encoding.value, "positive": positive})
    _write_csv(out / "train_metrics.csv", args, ["positive", "C", "auc", "f1", "accuracy"],
               [[positive, model.C, m.auc, m.max_f1, m.accuracy]])


def cmd_train_continuous(args, out: Path, timer) -> None:
    _, seqs = _dataset(args)
    best = None
    with timer("train"):
        for C in args.C_grid:
            cfg = ContinuousConfig(feature=args.feature, pbar=args.pbar, C=C, K=args.K,
                                   n_candidates=args.window_candidates, iterations=args.iterations,
                                   seed=args.seed, threads=args.threads)
            cm = train_continuous(seqs, cfg)
            logger.info("C=%g: validation AUC %.4f", C, cm.val_auc)
            if best is None or cm.val_auc > best.val_auc:
                best = cm
    codebook = best.scorer.encoder.codebook if args.feature == "bow" else None
    save_model(best.model, out / "model.bin", codebook=codebook,
               extra={"task": "continuous", "feature": args.feature, "grid": list(best.grid.lengths)})
    _write_csv(out / "train_metrics.csv", args, ["feature", "C", "val_auc", "window_lengths"],
               [[args.feature, best.config.C, best.val_auc, " ".join(map(str, best.grid.lengths))]])


def _load_continuous(path, fft: bool) -> ContinuousModel:
    model, extra, codebook = load_model(path)
    if extra.get("task") != "continuous":
        raise ValueError(f"{path}: not a continuous detection model")
    if extra["feature"] == "bow":
        scorer = BowScorer(model, FrameEncoder.from_codebook(Encoding.NONLINEAR, codebook))
    else:
        scorer = WarpScorer(model, fft=fft)
    return ContinuousModel(scorer, WindowGrid(tuple(extra["grid"])), ContinuousConfig(feature=extra["feature"]))


def cmd_detect(args, out: Path, timer) -> None:
    _, seqs = _dataset(args)
    cm = _load_continuous(args.model, args.fft)
    with timer("score"):
        dets = [cm.detect(s) for s in seqs]
    rows = [[s.id, d.start, d.end, d.window_length_used, d.score] for s, d in zip(seqs, dets)]
    _write_csv(out / "detections.csv", args, ["id", "start", "end", "length", "score"], rows)
    truths = [s.event_span for s in seqs]
    try:
        m = continuous_eval(dets, truths)
    except ValueError as exc:
        logger.info("no metrics: %s", exc)
        return
    _write_csv(out / "metrics.csv", args, ["auc", "f1", "mean_overlap"], [[m.auc, m.max_f1, m.mean_overlap]])


def cmd_export_scores(args, out: Path, timer) -> None:
    _, seqs = _dataset(args)
    cm = _load_continuous(args.model, args.fft)
    (out / "scores").mkdir(exist_ok=True)
    with timer("score"):
        for s in seqs:
            export_score_table(detect_continuous(s, cm.scorer, cm.grid, keep_scores=True),
                               out / "scores" / f"{s.id}.csv")


def cmd_eval(args, out: Path, timer) -> None:
    _, seqs = _dataset(args)
    classes = sorted({str(s.label) for s in seqs if s.label is not None})
    if args.model:
        model, extra, codebook = load_model(args.model)
        if extra.get("task") != "isolated":
            raise ValueError(f"{args.model}: use 'detect' for continuous models")
        positive = extra["positive"]
        y = np.array([1 if str(s.label) == positive else -1 for s in seqs])
        if len(np.unique(y)) < 2:
            raise ValueError("evaluation needs both positive and negative sequences")
        with timer("score"):
            scores = score_isolated(FrameEncoder.from_codebook(extra["encoding"], codebook), model, seqs)
        m = binary_metrics(scores, y)
        _write_csv(out / "metrics.csv", args, ["positive", "auc", "f1", "accuracy"],
                   [[positive, m.auc, m.max_f1, m.accuracy]])
        return
    if len(classes) < 2:
        raise ValueError("evaluation needs at least two classes in the manifest")
    positives = classes[:1] if len(classes) == 2 else classes
    rows = []
    with timer("evaluate"):
        if args.method == "dtw-kernel":
            for cls in positives:
                r = evaluate_dtw_kernel(seqs, cls, folds=args.folds, C_grid=args.C_grid,
                                        t_grid=args.t_grid, seed=args.seed)
                rows.append([cls, r["auc"], r["f1"], r["accuracy"]])
        else:
            config = _ablation_config(args)
            plan = make_folds([s.id for s in seqs], [s.label for s in seqs], k=args.folds, seed=args.seed)
            byid = {s.id: s for s in seqs}
            for cls in positives:
                cells = [evaluate_cell([byid[i] for i in tr], [byid[i] for i in te], args.encoding,
                                       args.pbar, cls, config, seed=args.seed + f)
                         for f, (tr, te) in enumerate(zip(plan.train, plan.test))]
                rows.append([cls] + [float(np.nanmean([c[k] for c in cells])) for k in ("auc", "f1", "accuracy")])
    _write_csv(out / "metrics.csv", args, ["positive", "auc", "f1", "accuracy"], rows)


def cmd_ablate(args, out: Path, timer) -> None:
    _, seqs = _dataset(args)
    with timer("ablate"):
        rows = run_ablation(seqs, _ablation_config(args))
    for r in rows:
        timer.phases[f"cell:{r['encoding']}/{r['pbar']}"] = r["seconds"]
    _write_csv(out / "ablation.csv", args, ["encoding", "pbar", "accuracy", "auc", "f1"],
               [[r["encoding"], r["pbar"], r["accuracy"], r["auc"], r["f1"]] for r in rows])


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="warpdetect", description="Warp-averaged event detection toolkit.")
    p.add_argument("--version", action="version", version=f"warpdetect {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help, manifest=True):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--out", required=True, type=Path, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=_positive_int, default=1)
        sp.add_argument("-v", "--verbose", action="store_true")
        if manifest:
            sp.add_argument("--manifest", required=True, type=Path)
        sp.set_defaults(func=func)
        return sp

    def learning_flags(sp):
        sp.add_argument("--encoding", choices=ENCODINGS, default="linear")
        sp.add_argument("--pbar", choices=MODES, default="learned")
        sp.add_argument("--T", type=_positive_int, default=None, help="mean-warp length (default: longest positive)")
        sp.add_argument("--K", type=_positive_int, default=32, help="codebook size")
        sp.add_argument("--C-grid", dest="C_grid", type=_floats, default=DEFAULT_C_GRID)
        sp.add_argument("--folds", type=_positive_int, default=5)

    sp = command("synth", cmd_synth, "write a seeded synthetic dataset", manifest=False)
    sp.add_argument("--kind", choices=["isolated", "continuous"], default="isolated")
    sp.add_argument("--n-train", dest="n_train", type=_positive_int, default=30)

    sp = command("train-isolated", cmd_train_isolated, "train a one-vs-rest isolated classifier")
    learning_flags(sp)
    sp.add_argument("--positive", default=None, help="positive class (default: first label)")

    sp = command("train-continuous", cmd_train_continuous, "train a structured continuous detector")
    sp.add_argument("--feature", choices=["warp", "bow"], default="warp")
    sp.add_argument("--pbar", choices=MODES, default="learned")
    sp.add_argument("--K", type=_positive_int, default=300, help="codebook size (bow)")
    sp.add_argument("--C-grid", dest="C_grid", type=_floats, default=(1.0,))
    sp.add_argument("--window-candidates", dest="window_candidates", type=_positive_int, default=10)
    sp.add_argument("--iterations", type=_positive_int, default=30)

    for name, func, help in (("detect", cmd_detect, "detect events in every manifest sequence"),
                             ("export-scores", cmd_export_scores, "write per-window score tables")):
        sp = command(name, func, help)
        sp.add_argument("--model", required=True, type=Path)
        sp.add_argument("--fft", action="store_true", help="frequency-domain window scoring")

    sp = command("eval", cmd_eval, "score a trained model, or cross-validate one configuration")
    learning_flags(sp)
    sp.add_argument("--model", type=Path, default=None)
    sp.add_argument("--method", choices=["linear", "dtw-kernel"], default="linear")
    sp.add_argument("--t-grid", dest="t_grid", type=_floats, default=DEFAULT_T_GRID)

    sp = command("ablate", cmd_ablate, "cross-validate every encoding x mean-warp cell")
    learning_flags(sp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("manifest", "model"):
        path = getattr(args, name, None)
        if path is not None and not Path(path).is_file():
            parser.error(f"--{name}: no such file: {path}")
    out = Path(args.out)
    timer = _Timer()
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.json", {**_result_config(args), "out": str(out)})
        args.func(args, out, timer)
        _write_json(out / "timing.json", {k: round(v, 6) for k, v in timer.phases.items()})
    except Exception as exc:  # one-line diagnostic, no traceback
        if args.verbose:
            logger.exception("command failed")
        print(f"warpdetect {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
