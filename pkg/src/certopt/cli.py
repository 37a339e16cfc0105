"""Command-line front end: ``certopt generate | certify | oracle | sweep``.

Exit codes: 0 on success, 2 for an unreadable or invalid problem file,
3 when the target spectrum lies outside what the kernel can represent.
The seed comes from ``--seed``, else ``CERTOPT_SEED``, else 0.
"""

from __future__ import annotations

import argparse
import csv
import os
import platform
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__, _backend
from .certifier import DEFAULT_DELTA, DEVIATION_SCALES, ESTIMATORS, OutOfReachError, certify
from .harmonic.sampling import BesselSpectrumDistribution
from .harmonic.spectra import ChebPoly, KernelMixture, TrigPoly
from .io import KINDS, ProblemFormatError, generate_problem, load_problem, problem_digest, save_problem, write_json
from .model import KSoSModel
from .oracle import grid_minimize
from .trainer import TrainConfig, find_candidate, train_model

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_OUT_OF_REACH = 3

ORACLE_MAX_DIM = 3

SWEEP_COLUMNS = (
    "problem_digest", "shape", "n_params", "N", "delta", "seed", "c", "epsilon", "bound",
    "estimate", "deviation", "norm_bound", "tail", "train_ms", "sample_ms", "coefficients_ms", "error",
)


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return int(seed)
    env = os.environ.get("CERTOPT_SEED")
    return int(env) if env not in (None, "") else 0


def derive_seeds(seed: int) -> dict:
    """Independent integer seeds for the three random phases."""
    kids = np.random.SeedSequence(seed).spawn(3)
    names = ("candidate", "train", "sample")
    return {name: int(k.generate_state(1, np.uint64)[0]) for name, k in zip(names, kids)}


def _is_constant(f) -> bool:
    if isinstance(f, (TrigPoly, ChebPoly)):
        active = f.coeffs != 0
        return not f.freqs[active].any()
    return False


def _model_scale(f, requested: float | None) -> float:
    if requested is not None:
        return float(requested)
    if isinstance(f, KernelMixture):
        # a mixture at scale s is a model-spectrum function only at model scale s / 2
        return float(np.mean(f.scale)) / 2.0
    return 1.0


def _zero_model(f, cfg: TrainConfig) -> KSoSModel:
    rng = np.random.default_rng(cfg.seed)
    pos = rng.random((cfg.blocks, cfg.block_size, f.dim))
    if f.basis != "torus":
        pos = 0.5 * pos
    return KSoSModel(pos, np.zeros((cfg.blocks, cfg.rank, cfg.block_size)), np.full(f.dim, cfg.scale), f.basis)


def run_pipeline(f, cfg: TrainConfig, n_samples: int, delta: float, seeds: dict, estimator: str = "mom",
                 union_bound: bool = False, deviation_scale: str = "residual", n_starts: int = 16,
                 max_iters: int = 500) -> dict:
    """Candidate, training and certificate; returns the report body."""
    timing = {}
    t0 = time.perf_counter()
    cand = find_candidate(f, n_starts=n_starts, max_iters=max_iters, seed=seeds["candidate"])
    timing["candidate_ms"] = 1e3 * (time.perf_counter() - t0)

    t0 = time.perf_counter()
    c = cand.value
    if _is_constant(f):
        model = _zero_model(f, cfg)
    else:
        result = train_model(f, c, cfg)
        model = result.best_model
        c = result.best_c
    timing["train_ms"] = 1e3 * (time.perf_counter() - t0)

    dist = BesselSpectrumDistribution(model.scale, f.basis)
    cert = certify(f, c, model, dist, n_samples, delta, seeds["sample"], estimator, union_bound,
                   deviation_scale, timings=timing)
    return {
        "candidate": {"point": cand.point.tolist(), "value": cand.value, "c": c, "c_hex": float(c).hex()},
        "model": {
            "basis": model.basis,
            "shape": {"blocks": model.n_blocks, "block_size": model.block_size, "rank": model.rank},
            "n_params": model.n_params,
            "scale": model.scale.tolist(),
        },
        "certificate": cert.as_dict(),
        "epsilon_hex": float(cert.epsilon).hex(),
        "timing": timing,
    }


def _versions() -> dict:
    return {
        "certopt": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "backend": _backend.BACKEND,
        "threads": _backend.get_threads(),
    }


def _train_config(args, f, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        final_lr=args.final_lr,
        momentum=args.momentum,
        temperature=args.temperature,
        reg_weight=args.reg_weight,
        seed=seed,
        blocks=args.blocks,
        block_size=args.block_size,
        rank=args.rank,
        scale=_model_scale(f, args.scale),
        factor_init=args.factor_init,
        learn_c=args.learn_c,
    )


# -- commands -------------------------------------------------------------


def cmd_generate(args) -> int:
    seed = resolve_seed(args.seed)
    f, meta = generate_problem(args.kind, args.dim, args.degree, args.norm, args.n_terms, args.size, seed)
    save_problem(f, args.output, meta)
    return EXIT_OK


def cmd_certify(args) -> int:
    f, _ = load_problem(args.problem)
    seed = resolve_seed(args.seed)
    seeds = derive_seeds(seed)
    cfg = _train_config(args, f, seeds["train"])
    body = run_pipeline(f, cfg, args.samples, args.delta, seeds, args.estimator, args.union_bound,
                        args.deviation_scale, args.starts)
    report = {"problem_digest": problem_digest(f), "seed": seed, "seeds": seeds, "train_config": asdict(cfg)}
    report.update(body)
    report["versions"] = _versions()
    write_json(report, args.output)
    return EXIT_OK


def cmd_oracle(args) -> int:
    f, _ = load_problem(args.problem)
    if f.dim > ORACLE_MAX_DIM and not args.allow_high_dim:
        print(f"error: grid oracle refuses d > {ORACLE_MAX_DIM} (pass --allow-high-dim)", file=sys.stderr)
        return EXIT_INVALID
    t0 = time.perf_counter()
    res = grid_minimize(f, args.points)
    write_json(
        {
            "problem_digest": problem_digest(f),
            "points_per_dim": res.points_per_dim,
            "point": res.point.tolist(),
            "value": res.value,
            "slack": res.slack,
            "lower_bound": res.value - res.slack,
            "wall_ms": 1e3 * (time.perf_counter() - t0),
        },
        args.output,
    )
    return EXIT_OK


def parse_shape(text: str) -> tuple[int, int, int]:
    """``"b,s,r"`` -> ``(blocks, block_size, rank)``."""
    parts = text.replace("x", ",").split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"shape must be blocks,block_size,rank (got {text!r})")
    b, s, r = (int(p) for p in parts)
    if min(b, s, r) < 1:
        raise argparse.ArgumentTypeError("shape entries must be positive")
    return b, s, r


def sweep_rows(f, shapes, sample_counts, seeds, args):
    """One row per (shape, seed, N); training is shared across the N values."""
    digest = problem_digest(f)
    for shape in shapes:
        for seed in seeds:
            derived = derive_seeds(seed)
            base = {"problem_digest": digest, "shape": "x".join(map(str, shape)), "seed": seed,
                    "delta": args.delta}
            try:
                args.blocks, args.block_size, args.rank = shape
                cfg = _train_config(args, f, derived["train"])
                cand = find_candidate(f, n_starts=args.starts, seed=derived["candidate"])
                t0 = time.perf_counter()
                if _is_constant(f):
                    model, c = _zero_model(f, cfg), cand.value
                else:
                    trained = train_model(f, cand.value, cfg)
                    model, c = trained.best_model, trained.best_c
                train_ms = 1e3 * (time.perf_counter() - t0)
                dist = BesselSpectrumDistribution(model.scale, f.basis)
            except Exception as err:  # noqa: BLE001 - per-row failures are recorded, the sweep goes on
                for n in sample_counts:
                    yield {**base, "N": n, "error": f"{type(err).__name__}: {err}"}
                continue
            for n in sample_counts:
                row = {**base, "N": n, "n_params": model.n_params, "c": c, "train_ms": train_ms}
                timing = {}
                try:
                    cert = certify(f, c, model, dist, n, args.delta, derived["sample"], args.estimator,
                                   args.union_bound, args.deviation_scale, timings=timing)
                except Exception as err:  # noqa: BLE001
                    row["error"] = f"{type(err).__name__}: {err}"
                else:
                    row.update(epsilon=cert.epsilon, bound=cert.lower_bound, estimate=cert.estimate,
                               deviation=cert.deviation, norm_bound=cert.norm_bound, tail=cert.tail, error="")
                    row.update(timing)
                yield row


def cmd_sweep(args) -> int:
    f, _ = load_problem(args.problem)
    seeds = args.seeds if args.seeds else [resolve_seed(None)]
    out = sys.stdout if args.output in (None, "-") else open(args.output, "w", newline="")
    try:
        writer = csv.DictWriter(out, fieldnames=SWEEP_COLUMNS, restval="")
        writer.writeheader()
        for row in sweep_rows(f, args.shapes, args.samples, seeds, args):
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
            out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def _add_training(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=d.epochs)
    g.add_argument("--batch-size", type=int, default=d.batch_size)
    g.add_argument("--lr", type=float, default=d.lr)
    g.add_argument("--final-lr", type=float, default=d.final_lr)
    g.add_argument("--momentum", type=float, default=d.momentum)
    g.add_argument("--temperature", type=float, default=d.temperature)
    g.add_argument("--reg-weight", type=float, default=d.reg_weight)
    g.add_argument("--factor-init", type=float, default=d.factor_init)
    g.add_argument("--scale", type=float, default=None,
                   help="model kernel scale (default 1, or half the mixture scale)")
    g.add_argument("--learn-c", action="store_true", help="train the offset c jointly with the model")
    g.add_argument("--starts", type=int, default=16, help="multi-start count for the candidate search")
    c = p.add_argument_group("certificate")
    c.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    c.add_argument("--estimator", choices=ESTIMATORS, default="mom")
    c.add_argument("--union-bound", action="store_true",
                   help="with --estimator both, run each at delta/2 so the reported confidence is 1 - delta")
    c.add_argument("--deviation-scale", choices=DEVIATION_SCALES, default="residual")
    c.add_argument("--threads", type=int, default=1)
    c.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="certopt", description="Certified global minimization of smooth periodic and polynomial functions.")
    parser.add_argument("--version", action="version", version=f"certopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a random problem file")
    p.add_argument("--kind", choices=KINDS, default="trig_poly")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--degree", type=int, default=5)
    p.add_argument("--norm", type=float, default=1.0, help="target RKHS norm")
    p.add_argument("--n-terms", type=int, default=None, help="random subset size of the support")
    p.add_argument("--size", type=int, default=10, help="number of mixture centers")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("certify", help="candidate, training and certificate for one problem")
    p.add_argument("problem")
    p.add_argument("--blocks", type=int, default=TrainConfig.blocks)
    p.add_argument("--block-size", type=int, default=TrainConfig.block_size)
    p.add_argument("--rank", type=int, default=TrainConfig.rank)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("-o", "--output", default="-")
    _add_training(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("oracle", help="exhaustive grid minimum with resolution slack")
    p.add_argument("problem")
    p.add_argument("--points", type=int, default=256, help="grid points per dimension")
    p.add_argument("--allow-high-dim", action="store_true")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="certificates over model shapes, sample counts and seeds (CSV)")
    p.add_argument("problem")
    p.add_argument("--shapes", type=parse_shape, nargs="+", required=True, metavar="B,S,R")
    p.add_argument("--samples", type=int, nargs="+", default=[10**6])
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("-o", "--output", default="-")
    _add_training(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = getattr(args, "threads", 1)
    if threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INVALID
    _backend.set_threads(threads)
    try:
        return args.func(args)
    except ProblemFormatError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except OutOfReachError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_OUT_OF_REACH


if __name__ == "__main__":
    sys.exit(main())
