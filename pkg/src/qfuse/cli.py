"""Command line interface: ``qfuse fuse | decompose | metrics | synth-eval``.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import imaging
from .config import PRESETS, RunConfig
from .focus import label_image
from .fusion import fuse_detailed, write_scores
from .metrics import metric_qg, metric_qmi
from .qfed import decompose, write_trace
from .synthetic import SPLITS, patch_truth, psnr, synth_pair
from .validation import check_image_stack, from_quaternion, to_quaternion

log = logging.getLogger("qfuse")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def bundled_image_path() -> Path:
    return Path(str(resources.files("qfuse") / "data" / "test_scene.png"))


def _solver_flags(p):
    p.add_argument("--config", help="flat JSON file with RunConfig keys")
    p.add_argument("--preset", choices=sorted(PRESETS) + ["custom"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu0", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--shrink-mode", dest="shrink_mode", choices=["columnwise", "entrywise"])
    p.add_argument("--dictionary", help="binary quaternion dictionary file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qfuse", description="Quaternion multi-focus colour image fusion")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fuse", help="fuse two or more registered images")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--maps-dir", help="also write focus label maps here")
    p.add_argument("--trace", help="directory for solver and similarity-score CSV traces")
    _solver_flags(p)

    p = sub.add_parser("decompose", help="write base/detail/noise layers of one image")
    p.add_argument("--input", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--trace", help="CSV file for per-iteration diagnostics")
    _solver_flags(p)

    p = sub.add_parser("metrics", help="print fusion quality metrics")
    p.add_argument("--fused", required=True)
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--reference", help="ground truth image for PSNR")

    p = sub.add_parser("synth-eval", help="synthetic ground-truth fusion check")
    p.add_argument("--image", help="all-in-focus image (default: bundled scene)")
    p.add_argument("--split", choices=SPLITS, default="left-right")
    p.add_argument("--sigma", type=float, default=3.0)
    p.add_argument("--json", dest="json_out", help="write the report here as well")
    p.add_argument("--output", help="write the fused image here")
    _solver_flags(p)
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    return cfg.updated(preset=args.preset, alpha=args.alpha, beta=args.beta, lam=args.lam,
                       mu0=args.mu0, tol=args.tol, max_iter=args.max_iter, seed=args.seed,
                       shrink_mode=args.shrink_mode, dictionary=args.dictionary)


def _read_all(paths):
    try:
        return [imaging.read_image(p) for p in paths]
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image: {exc}") from exc


def cmd_fuse(args) -> int:
    cfg = _run_config(args).updated(inputs=list(args.inputs), output=args.output)
    if len(cfg.inputs) < 2:
        raise UsageError("fuse needs at least two --inputs")
    images = _read_all(cfg.inputs)
    try:
        quats = check_image_stack([to_quaternion(im) for im in images])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    res = fuse_detailed(quats, cfg.fusion_config(), cfg.load_dictionary())
    for path, dec in zip(cfg.inputs, res.decompositions):
        if not dec.converged:
            log.warning("%s: solver did not converge in %d iterations (rel_diff=%.3g)",
                        path, dec.iterations, dec.rel_diff)
    imaging.write_png(cfg.output, from_quaternion(res.fused, atol=1e-9))
    if args.trace:
        Path(args.trace).mkdir(parents=True, exist_ok=True)
        for k, dec in enumerate(res.decompositions):
            write_trace(dec.history, Path(args.trace) / f"input{k}.csv")
        write_scores(res.scores, res.choice, Path(args.trace) / "wq_scores.csv")
    if args.maps_dir:
        n = len(quats)
        out = Path(args.maps_dir)
        imaging.write_png(out / "base_map.png", label_image(res.maps.base, res.maps.base_grid, n))
        imaging.write_png(out / "detail_map.png", label_image(res.maps.detail, res.maps.detail_grid, n))
    print(json.dumps({"output": cfg.output, "iterations": [d.iterations for d in res.decompositions]}))
    return EXIT_OK


def _layer_preview(layer, offset):
    return np.clip(layer[..., 1:] + offset, 0.0, 1.0)


def cmd_decompose(args) -> int:
    cfg = _run_config(args)
    img = _read_all([args.input])[0]
    res = decompose(to_quaternion(img), cfg.qfed_config(), cfg.load_dictionary(), trace=args.trace)
    if not res.converged:
        log.warning("solver did not converge in %d iterations (rel_diff=%.3g)", res.iterations, res.rel_diff)
    out = Path(args.outdir)
    for name, layer, offset in (("base", res.B, 0.0), ("detail", res.D, 0.5), ("noise", res.E, 0.5)):
        imaging.write_layer_dump(out / f"{name}.qf32", layer)
        imaging.write_png(out / f"{name}.png", _layer_preview(layer, offset))
    print(json.dumps({
        "iterations": res.iterations, "converged": res.converged,
        "rel_diff": res.rel_diff, "constraint_residual": res.constraint_residual,
    }))
    return EXIT_OK


def cmd_metrics(args) -> int:
    fused = _read_all([args.fused])[0]
    inputs = _read_all(args.inputs)
    try:
        rows = {"Q_MI": metric_qmi(fused, inputs), "Q_G": metric_qg(fused, inputs)}
        if args.reference:
            rows["PSNR"] = psnr(fused, _read_all([args.reference])[0])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    width = max(map(len, rows))
    for key, val in rows.items():
        print(f"{key:<{width}}  {val:.4f}")
    return EXIT_OK


def synth_eval(gt, split="left-right", sigma=3.0, cfg: RunConfig | None = None):
    """Fuse synthetic inputs made from ``gt`` and score against ``gt``."""
    cfg = cfg or RunConfig()
    inputs, labels = synth_pair(gt, split, sigma)
    res = fuse_detailed([to_quaternion(im) for im in inputs], cfg.fusion_config(), cfg.load_dictionary())
    fused = from_quaternion(res.fused)
    in_psnr = [psnr(im, gt) for im in inputs]
    out_psnr = psnr(fused, gt)
    truth = patch_truth(labels, res.maps.detail_grid)
    keep = truth >= 0
    src = res.source_map()
    accuracy = float(np.mean(src[keep] == truth[keep]))
    gain = out_psnr - max(in_psnr)
    report = {
        "split": split, "sigma": sigma, "n_inputs": len(inputs),
        "psnr_fused": out_psnr, "psnr_inputs": in_psnr, "psnr_gain": gain,
        "patch_accuracy": accuracy,
        "iterations": [d.iterations for d in res.decompositions],
        "pass": bool(out_psnr >= 28.0 and gain >= 5.0 and accuracy >= 0.90),
    }
    return report, fused


def cmd_synth_eval(args) -> int:
    cfg = _run_config(args)
    gt = _read_all([args.image or bundled_image_path()])[0]
    report, fused = synth_eval(gt, args.split, args.sigma, cfg)
    if args.output:
        imaging.write_png(args.output, fused)
    text = json.dumps(report, indent=2)
    if args.json_out:
        Path(args.json_out).write_text(text + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {
    "fuse": cmd_fuse,
    "decompose": cmd_decompose,
    "metrics": cmd_metrics,
    "synth-eval": cmd_synth_eval,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"qfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"qfuse: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"qfuse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"qfuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
