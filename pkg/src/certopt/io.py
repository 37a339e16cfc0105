"""JSON problem and report files.

Floats are written as hex strings (``float.hex``) so every coefficient
round-trips bit for bit. Each entry also carries a decimal mirror that is
never read back.

Trigonometric polynomials store one representative per ``{w, -w}`` pair
and are Hermitian-completed on load.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .harmonic.sampling import BesselSpectrumDistribution
from .harmonic.spectra import ChebPoly, KernelMixture, TrigPoly

FORMAT = "certopt-problem"
VERSION = 1
KINDS = ("trig_poly", "cheb_poly", "kernel_mixture")


class ProblemFormatError(ValueError):
    """The problem file is missing, malformed or describes an invalid target."""


def _hex(x: float) -> str:
    return float(x).hex()


def _unhex(s) -> float:
    if isinstance(s, (int, float)):
        return float(s)
    try:
        return float.fromhex(s)
    except (TypeError, ValueError) as err:
        raise ProblemFormatError(f"bad float encoding {s!r}") from err


def _is_representative(w) -> bool:
    """True for the first of each ``{w, -w}`` pair (first nonzero entry positive)."""
    for v in w:
        if v:
            return v > 0
    return True


# -- encoding -------------------------------------------------------------


def problem_to_dict(f, metadata: dict | None = None) -> dict:
    """Serializable description of a target."""
    out = {"format": FORMAT, "version": VERSION, "dim": int(f.dim)}
    if isinstance(f, TrigPoly):
        out["kind"] = "trig_poly"
        terms = []
        for w, a in zip(f.freqs.tolist(), f.coeffs.tolist()):
            if _is_representative(w):
                terms.append({"freq": w, "re": _hex(a.real), "im": _hex(a.imag), "decimal": [a.real, a.imag]})
        out["terms"] = terms
    elif isinstance(f, ChebPoly):
        out["kind"] = "cheb_poly"
        out["terms"] = [
            {"freq": w, "value": _hex(a), "decimal": a} for w, a in zip(f.freqs.tolist(), f.coeffs.tolist())
        ]
    elif isinstance(f, KernelMixture):
        out["kind"] = "kernel_mixture"
        out["scale"] = [_hex(v) for v in f.scale.tolist()]
        out["centers"] = [[_hex(v) for v in row] for row in f.centers.tolist()]
        out["weights"] = [_hex(v) for v in f.weights.tolist()]
        out["decimal"] = {"centers": f.centers.tolist(), "weights": f.weights.tolist()}
    else:
        raise TypeError(f"cannot serialize {type(f).__name__}")
    if metadata:
        out["metadata"] = metadata
    return out


def problem_from_dict(data: dict):
    """Inverse of :func:`problem_to_dict`; raises :class:`ProblemFormatError`."""
    try:
        if data.get("format") != FORMAT:
            raise ProblemFormatError("not a certopt problem file")
        kind = data["kind"]
        dim = int(data["dim"])
        if dim < 1:
            raise ProblemFormatError("dimension must be positive")
        if kind == "trig_poly":
            freqs = [list(map(int, t["freq"])) for t in data["terms"]]
            coeffs = [complex(_unhex(t["re"]), _unhex(t["im"])) for t in data["terms"]]
            if any(len(w) != dim for w in freqs):
                raise ProblemFormatError("frequency length does not match dim")
            if any(not _is_representative(w) for w in freqs):
                raise ProblemFormatError("store only one of each +-w pair (first nonzero entry positive)")
            return TrigPoly.hermitian_completion(np.array(freqs, dtype=np.int64).reshape(-1, dim), coeffs, dim)
        if kind == "cheb_poly":
            freqs = np.array([list(map(int, t["freq"])) for t in data["terms"]], dtype=np.int64).reshape(-1, dim)
            coeffs = [_unhex(t["value"]) for t in data["terms"]]
            return ChebPoly(freqs, coeffs, dim)
        if kind == "kernel_mixture":
            centers = np.array([[_unhex(v) for v in row] for row in data["centers"]]).reshape(-1, dim)
            weights = [_unhex(v) for v in data["weights"]]
            scale = [_unhex(v) for v in data["scale"]]
            return KernelMixture(centers, weights, scale)
        raise ProblemFormatError(f"unknown problem kind {kind!r}")
    except ProblemFormatError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as err:
        raise ProblemFormatError(f"invalid problem description: {err}") from err


def save_problem(f, path, metadata: dict | None = None) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(f, metadata), indent=1) + "\n")


def load_problem(path):
    """Read a problem file; returns ``(target, metadata)``."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ProblemFormatError(f"cannot read {path}: {err}") from err
    if not isinstance(data, dict):
        raise ProblemFormatError("problem file must hold a JSON object")
    return problem_from_dict(data), data.get("metadata", {})


def problem_digest(f) -> str:
    """Short content hash of the target (metadata excluded)."""
    data = problem_to_dict(f)
    # the decimal mirrors are advisory and must not affect the digest
    for t in data.get("terms", []):
        t.pop("decimal", None)
    data.pop("decimal", None)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_json(obj, path) -> None:
    text = json.dumps(obj, indent=1, sort_keys=False, default=_json_default)
    if path in (None, "-"):
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# -- random problems ------------------------------------------------------


#: Kernel scale of the model whose RKHS defines the generator's norm.
NORM_MODEL_SCALE = 1.0


def _box(dim: int, lo: int, hi: int) -> np.ndarray:
    axis = np.arange(lo, hi + 1)
    return np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)


def generate_problem(kind: str, dim: int, degree: int, norm: float = 1.0, n_terms: int | None = None,
                     size: int = 10, seed=None):
    """Random target with a prescribed RKHS norm.

    Trigonometric polynomials draw complex gaussian coefficients on one
    representative of each ``{w, -w}`` pair with ``0 < |w|_inf <= degree``
    (optionally a random subset of ``n_terms`` of them). Chebyshev
    polynomials use every nonzero ``w`` in ``{0..degree}^dim`` with gaussian
    coefficients. Both are rescaled so that their norm in the RKHS of the
    scale-1 model equals ``norm``. Kernel mixtures draw ``size`` uniform
    centers with gaussian weights at mixture scale 2 and are rescaled so
    that ``a^T K a = norm^2``.

    Returns
    -------
    target, metadata : tuple
    """
    if not norm > 0:
        raise ValueError("target norm must be positive")
    rng = np.random.default_rng(seed)
    meta = {"generator_seed": seed, "rkhs_norm": float(norm), "norm_model_scale": NORM_MODEL_SCALE}
    scale = np.full(dim, NORM_MODEL_SCALE)
    if kind == "trig_poly":
        box = _box(dim, -degree, degree)
        reps = np.array([w for w in box.tolist() if any(w) and _is_representative(w)], dtype=np.int64).reshape(-1, dim)
        if n_terms is not None:
            if not 0 < n_terms <= len(reps):
                raise ValueError(f"n_terms must lie in 1..{len(reps)}")
            reps = reps[np.sort(rng.choice(len(reps), n_terms, replace=False))]
        coeffs = rng.standard_normal(len(reps)) + 1j * rng.standard_normal(len(reps))
        f = TrigPoly.hermitian_completion(reps, coeffs, dim)
        weights = BesselSpectrumDistribution(scale, "torus").weight
        f = TrigPoly(f.freqs, f.coeffs * (norm / math.sqrt(f.hilbert_norm_sq(weights))), True, dim)
        meta["support_rule"] = "one of each +-w pair with 0 < |w|_inf <= degree" + (
            f", random subset of {n_terms}" if n_terms is not None else ""
        )
    elif kind == "cheb_poly":
        freqs = _box(dim, 0, degree)[1:]
        if n_terms is not None:
            if not 0 < n_terms <= len(freqs):
                raise ValueError(f"n_terms must lie in 1..{len(freqs)}")
            freqs = freqs[np.sort(rng.choice(len(freqs), n_terms, replace=False))]
        f = ChebPoly(freqs, rng.standard_normal(len(freqs)), dim)
        weights = BesselSpectrumDistribution(scale, "chebychev").weight
        f = ChebPoly(f.freqs, f.coeffs * (norm / math.sqrt(f.hilbert_norm_sq(weights))), dim)
        meta["support_rule"] = "all w in {0..degree}^dim except 0" + (
            f", random subset of {n_terms}" if n_terms is not None else ""
        )
    elif kind == "kernel_mixture":
        centers = rng.random((size, dim))
        weights = rng.standard_normal(size)
        f = KernelMixture(centers, weights, 2.0 * NORM_MODEL_SCALE)
        f = KernelMixture(centers, weights * (norm / f.rkhs_norm()), 2.0 * NORM_MODEL_SCALE)
        meta["support_rule"] = f"{size} uniform centers, mixture scale {2.0 * NORM_MODEL_SCALE}"
    else:
        raise ValueError(f"kind must be one of {KINDS}")
    meta["kind"] = kind
    meta["degree"] = degree
    return f, meta
