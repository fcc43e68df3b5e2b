"""Command-line interface: render, sample, dataset, infer, eval.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, io, priors
from .config import ConfigError, load_settings
from .evaluation import BatchSummary, batch_evaluate, make_dataset
from .grammar import GrammarError, serialize
from .inference import best_state, run_chains
from .likelihood import binarize
from .renderer import BlurParams, render
from .wreath_process import sample_hyper, sample_noise

log = logging.getLogger("wreathe")


class MismatchError(Exception):
    """Dataset and inferred directories do not line up."""


def _size(text: str) -> tuple:
    m = re.fullmatch(r"(\d+)(?:x(\d+))?", text.strip())
    if not m:
        raise argparse.ArgumentTypeError(f"size must be N or WxH, got {text!r}")
    w = int(m.group(1))
    h = int(m.group(2) or w)
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return w, h


def _blur(text: str) -> BlurParams:
    try:
        w, s = text.split(",")
        return BlurParams(int(w), float(s))
    except ValueError:
        raise argparse.ArgumentTypeError(f"blur must be W,SIGMA with W >= 0 and SIGMA > 0, got {text!r}") from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wreathe", description="Stochastic wreath process: render, sample and infer shapes.")
    p.add_argument("--version", action="version", version=f"wreathe {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("render", help="render a .wreath shape file to PNG")
    r.add_argument("shape_file")
    r.add_argument("out_png")
    r.add_argument("--noisy", action="store_true", help="draw hyperparameters and noise from the prior")
    r.add_argument("--seed", type=int, default=0, help="seed for --noisy (default 0)")
    r.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="pixels per unit (default: the file's '# lambda=' comment, else 10)")
    r.add_argument("--size", type=_size, default=None, help="canvas N or WxH pixels (default from config, 64)")
    r.add_argument("--blur", type=_blur, default=None, help="Gaussian blur W,SIGMA (default none)")
    r.add_argument("--config", default=None, help="key=value config file (default $WREATHE_CONFIG)")

    s = sub.add_parser("sample", help="write prior samples (shapes and noisy renders)")
    s.add_argument("out_dir", help="directory for sample_NNNN.png/.wreath and manifest.txt")
    s.add_argument("--n", type=_positive, default=10, help="number of samples (default 10)")
    s.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    s.add_argument("--size", type=_size, default=None, help="canvas N or WxH pixels (default from config, 64)")
    s.add_argument("--config", default=None, help="key=value config file (default $WREATHE_CONFIG)")

    d = sub.add_parser("dataset", help="write an evaluation dataset of prior samples")
    d.add_argument("out_dir", help="directory for item_NNNN.png/.wreath and manifest.txt")
    d.add_argument("--n", type=_positive, default=50, help="number of items (default 50)")
    d.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    d.add_argument("--max-levels", type=_positive, default=None, help="override the prior's level cap")
    d.add_argument("--size", type=_size, default=None, help="canvas N or WxH pixels (default from config, 64)")
    d.add_argument("--identifiable", action="store_true",
                   help="redraw samples that leave the canvas or carry a level with no visible effect")
    d.add_argument("--config", default=None, help="key=value config file (default $WREATHE_CONFIG)")

    i = sub.add_parser("infer", help="run MCMC chains on an image")
    i.add_argument("in_png", help="observed image")
    i.add_argument("out_dir", help="directory for map.wreath/.png, chain_K/ and manifest.txt")
    i.add_argument("--iterations", type=_positive, default=10000, help="steps per chain (default 10000)")
    i.add_argument("--chains", type=_positive, default=4, help="number of chains (default 4)")
    i.add_argument("--seed", type=int, default=0, help="chain k uses seed + k")
    i.add_argument("--config", default=None, help="key=value config file (default $WREATHE_CONFIG)")
    i.add_argument("--restrict-levels", type=_positive, default=None, help="cap on the number of levels")
    i.add_argument("--thin", type=_positive, default=None, help="keep every THIN-th sample (default from config, 10)")
    i.add_argument("--workers", type=_positive, default=1, help="processes running chains (default 1)")
    i.add_argument("--plot", action="store_true", help="also write trace.png")

    e = sub.add_parser("eval", help="score inferred shapes against a dataset")
    e.add_argument("dataset_dir", help="directory written by the dataset command")
    e.add_argument("inferred_dir", help="directory holding one infer output per dataset item")
    e.add_argument("--out", default=None, help="report path (default INFERRED_DIR/report.txt)")
    e.add_argument("--plot", default=None, metavar="PNG", help="also write a summary figure")
    return p


def _canvas(settings, size):
    cfg = settings.render
    if size is not None:
        cfg = replace(cfg, width=size[0], height=size[1])
    return cfg


def cmd_render(args) -> int:
    settings = load_settings(args.config)
    shape, file_lam = io.read_shape(args.shape_file)
    lam = args.lam if args.lam is not None else (file_lam if file_lam is not None else 10.0)
    cfg = _canvas(settings, args.size).with_scale(lam)
    noise = None
    if args.noisy:
        rng = np.random.default_rng(args.seed)
        hyper = sample_hyper(shape, rng, settings.model.parametrization)
        noise = sample_noise(shape, hyper, rng, cfg.segments, cfg.circle_points)
    io.write_png(render(shape, noise, args.blur, cfg), args.out_png)
    return 0


def _write_items(out_dir: Path, prefix: str, items) -> None:
    for k, it in enumerate(items):
        io.write_png(it.image, out_dir / f"{prefix}_{k:04d}.png")
        io.write_shape(it.shape, out_dir / f"{prefix}_{k:04d}.wreath", lam=it.lam,
                       comments=[f"blur_w={it.blur.w_b} blur_sigma={it.blur.sigma_b!r}"])


def _manifest_base(command: str, args, settings) -> dict:
    out = {"tool": f"wreathe {__version__}", "command": command}
    for k, v in sorted(vars(args).items()):
        if k in ("command", "verbose", "out_dir", "workers"):
            continue
        out[f"arg.{k}"] = v if not isinstance(v, BlurParams) else f"{v.w_b},{v.sigma_b!r}"
    for k, v in settings.values:
        out[f"config.{k}"] = v
    return out


def cmd_sample(args) -> int:
    settings = load_settings(args.config)
    out = io.ensure_dir(args.out_dir)
    cfg = _canvas(settings, args.size)
    rng = np.random.default_rng(args.seed)
    items = []
    for _ in range(args.n):
        shape = priors.sample_shape_prior(settings.prior, rng)
        hyper = sample_hyper(shape, rng, settings.model.parametrization)
        noise = sample_noise(shape, hyper, rng, cfg.segments, cfg.circle_points)
        blur = priors.sample_blur(settings.prior, rng)
        lam = priors.sample_lambda(settings.prior, rng)
        img = render(shape, noise, blur, cfg.with_scale(lam))
        items.append(_Item(shape, img, lam, blur))
    _write_items(out, "sample", items)
    io.write_manifest(out / "manifest.txt", _manifest_base("sample", args, settings))
    return 0


class _Item:
    def __init__(self, shape, image, lam, blur):
        self.shape, self.image, self.lam, self.blur = shape, image, lam, blur


def cmd_dataset(args) -> int:
    settings = load_settings(args.config)
    out = io.ensure_dir(args.out_dir)
    prior = settings.prior if args.max_levels is None else replace(settings.prior, max_levels=args.max_levels)
    cfg = _canvas(settings, args.size)
    items = make_dataset(args.n, prior, args.seed, cfg, settings.model.use_noise, identifiable=args.identifiable)
    _write_items(out, "item", items)
    m = _manifest_base("dataset", args, settings)
    m["items"] = args.n
    io.write_manifest(out / "manifest.txt", m)
    return 0


def cmd_infer(args) -> int:
    settings = load_settings(args.config)
    img = io.read_png(args.in_png)
    obs = binarize(img, settings.threshold)
    out = io.ensure_dir(args.out_dir)
    model = settings.model_config()
    chain = replace(settings.chain, iterations=args.iterations, seed=args.seed,
                    max_levels=args.restrict_levels,
                    thin=args.thin if args.thin is not None else settings.chain.thin,
                    progress_every=settings.chain.progress_every or (max(args.iterations // 10, 1) if args.verbose else 0))
    t0 = time.monotonic()
    results = run_chains(obs, model, chain, n_chains=args.chains, workers=args.workers)
    elapsed = time.monotonic() - t0

    def emit(state, stem: Path):
        io.write_shape(state.shape, stem.with_suffix(".wreath"), lam=state.lam,
                       comments=[f"log_posterior={state.logpost!r} log_likelihood={state.loglik!r}"])
        cfg = model.render.with_scale(state.lam)
        cfg = replace(cfg, width=obs.shape[1], height=obs.shape[0])
        io.write_png(render(state.shape, state.noise, state.blur, cfg), stem.with_suffix(".png"))

    for r in results:
        cdir = io.ensure_dir(out / f"chain_{r.seed - args.seed:02d}")
        io.write_samples(r.samples, cdir / "posterior.samples")
        emit(r.map_state, cdir / "map")
        emit(r.ml_state, cdir / "ml")
    best = best_state(results)
    emit(best, out / "map")
    ml = max((r.ml_state for r in results), key=lambda s: s.loglik)
    emit(ml, out / "ml")

    m = _manifest_base("infer", args, settings)
    m["input_shape"] = f"{obs.shape[1]}x{obs.shape[0]}"
    m["chain_seeds"] = ",".join(str(r.seed) for r in results)
    for r in results:
        for move in r.proposed:
            m[f"chain_{r.seed - args.seed:02d}.accept.{move}"] = f"{r.accepted[move]}/{r.proposed[move]}"
    m["map_shape"] = serialize(best.shape)
    m["ml_shape"] = serialize(ml.shape)
    io.write_manifest(out / "manifest.txt", m)
    if args.plot:
        from .plotting import plot_traces

        cfg = replace(model.render.with_scale(best.lam), width=obs.shape[1], height=obs.shape[0])
        plot_traces(results, out / "trace.png", observed=obs, map_render=render(best.shape, best.noise, best.blur, cfg))
    # wall-clock goes to stderr only, so the output directory stays reproducible
    print(f"infer: {args.chains} chain(s) x {args.iterations} iterations in {elapsed:.1f} s", file=sys.stderr)
    print(serialize(best.shape))
    return 0


_ITEM_RE = re.compile(r"item_(\d{4})\.wreath$")


def _inferred_path(inferred_dir: Path, stem: str):
    for cand in (inferred_dir / f"{stem}.wreath", inferred_dir / stem / "map.wreath"):
        if cand.is_file():
            return cand
    return None


def cmd_eval(args) -> int:
    dataset_dir, inferred_dir = Path(args.dataset_dir), Path(args.inferred_dir)
    for d in (dataset_dir, inferred_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"{d}: no such directory")
    truths = sorted(p for p in dataset_dir.iterdir() if _ITEM_RE.search(p.name))
    if not truths:
        raise MismatchError(f"{dataset_dir}: no item_NNNN.wreath files")
    pairs, missing = [], []
    width = height = 64
    for t in truths:
        stem = t.stem
        found = _inferred_path(inferred_dir, stem)
        if found is None:
            missing.append(stem)
            continue
        truth, lam_t = io.read_shape(t)
        inferred, lam_i = io.read_shape(found)
        png = dataset_dir / f"{stem}.png"
        if png.is_file():
            h, w = io.read_png(png).shape
            width, height = w, h
        pairs.append((inferred, truth, lam_i if lam_i is not None else 10.0, lam_t if lam_t is not None else 10.0))
    if missing:
        raise MismatchError(f"{inferred_dir}: no inferred shape for {', '.join(missing)}")
    summary: BatchSummary = batch_evaluate(pairs, width=width, height=height)
    report = summary.to_text()
    out = Path(args.out) if args.out else inferred_dir / "report.txt"
    io._write_text(out, report)
    if args.plot:
        from .plotting import plot_evaluation

        plot_evaluation(summary, args.plot)
    sys.stdout.write(report)
    return 0


COMMANDS = {"render": cmd_render, "sample": cmd_sample, "dataset": cmd_dataset, "infer": cmd_infer, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (FileNotFoundError, ConfigError, GrammarError, io.ImageNotFoundError, io.MalformedImageError, MismatchError) as e:
        print(f"wreathe {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (io.ImageIOError, OSError, ValueError, RuntimeError) as e:
        print(f"wreathe {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
