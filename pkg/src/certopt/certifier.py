"""Probabilistic lower bounds on the minimum of a target from a nonnegative model.

For a candidate value ``c`` and a nonnegative model ``g``, the minimum of
``f`` is at least ``c - ||f - c - g||_F`` where ``||.||_F`` is the l1 norm of
the spectrum. The F-norm is estimated from frequencies drawn with
probability proportional to the kernel spectral weights; its deviation is
controlled by the Hilbert norm of the residual ``u = f - c - g``.

Every certificate stores ``epsilon = estimate + deviation + tail``, where
``tail`` bounds the F-norm mass on frequencies the truncated sampler can
never draw (``sqrt(dropped_mass) * B`` by Cauchy-Schwarz).
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .harmonic.sampling import BesselSpectrumDistribution
from .harmonic.spectra import KernelMixture
from .model import KSoSModel

DEFAULT_DELTA = math.exp(-4.0)
ESTIMATORS = ("mom", "cheby", "both")
DEVIATION_SCALES = ("residual", "model")


class OutOfReachError(ValueError):
    """The target has spectral mass the kernel cannot represent."""


class InsufficientSamplesError(ValueError):
    """Fewer draws than median-of-means blocks."""


@dataclass(frozen=True, eq=False)
class ResidualSamples:
    """Residual spectrum at the unique sampled frequencies.

    Attributes
    ----------
    freqs : ndarray, shape (k, d)
    probability : ndarray, shape (k,)
        Sampling probability of each frequency (truncated, renormalized).
    magnitude : ndarray, shape (k,)
        ``|f_w - c 1[w = 0] - g_w|``.
    counts : ndarray, shape (k,)
        Multiplicity of each unique frequency.
    inverse : ndarray, shape (N,)
        Index into the unique arrays for every draw, in draw order.
    """

    freqs: np.ndarray
    probability: np.ndarray
    magnitude: np.ndarray
    counts: np.ndarray
    inverse: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        return self.magnitude / self.probability

    @property
    def raw_ratios(self) -> np.ndarray:
        """Ratios expanded back to the original draw order."""
        return self.ratios[self.inverse]

    @property
    def n_draws(self) -> int:
        return int(self.inverse.shape[0])

    def __len__(self) -> int:
        return int(self.freqs.shape[0])


@dataclass(frozen=True)
class Certificate:
    """``min f >= candidate - epsilon`` with probability at least ``confidence``."""

    candidate: float
    epsilon: float
    delta: float
    n_samples: int
    estimator: str
    estimate: float
    deviation: float
    norm_bound: float
    tail: float
    seed: int | None
    confidence: float
    details: dict = field(default_factory=dict)

    @property
    def lower_bound(self) -> float:
        return self.candidate - self.epsilon

    def as_dict(self) -> dict:
        out = asdict(self)
        out["lower_bound"] = self.lower_bound
        return out


def _check_compatible(f, g: KSoSModel, dist: BesselSpectrumDistribution) -> None:
    if not (f.dim == g.dim == dist.dim):
        raise ValueError("target, model and distribution must share the dimension")
    if not (f.basis == g.basis == dist.basis):
        raise ValueError("target, model and distribution must share the basis")
    if not np.array_equal(g.scale, dist.scale):
        raise ValueError("distribution scale must equal the model kernel scale")


def _residual_coefficients(f, c: float, g: KSoSModel, freqs: np.ndarray) -> np.ndarray:
    u = np.asarray(f.coefficients(freqs)) - g.coefficients(freqs)
    zero = ~freqs.any(axis=1)
    return u - c * zero


def residual_samples(
    f, c: float, g: KSoSModel, dist: BesselSpectrumDistribution, n: int, seed, timings: dict | None = None
) -> ResidualSamples:
    """Draw ``n`` frequencies and evaluate the residual spectrum once per unique one.

    If ``timings`` is given, wall-clock milliseconds of the two phases are
    stored under ``"sample_ms"`` and ``"coefficients_ms"``.
    """
    _check_compatible(f, g, dist)
    t0 = time.perf_counter()
    draw = dist.sample(n, seed)
    prob = dist.probability(draw.freqs)
    if not (prob > 0).all():
        raise RuntimeError("sampler emitted a frequency outside its own support")
    t1 = time.perf_counter()
    mag = np.abs(_residual_coefficients(f, c, g, draw.freqs))
    if timings is not None:
        timings["sample_ms"] = 1e3 * (t1 - t0)
        timings["coefficients_ms"] = 1e3 * (time.perf_counter() - t1)
    return ResidualSamples(draw.freqs, prob, mag, draw.counts, draw.inverse)


def mean_estimate(samples: ResidualSamples) -> float:
    """Multiplicity-weighted mean of the ratios, correctly rounded.

    The sum is accumulated exactly, so the value does not depend on draw
    order or on deduplication.
    """
    total = sum(
        (Fraction(r) * int(k) for r, k in zip(samples.ratios.tolist(), samples.counts.tolist())),
        Fraction(0),
    )
    return float(total / int(samples.counts.sum()))


def mom_blocks(delta: float) -> int:
    """Number of median-of-means blocks for confidence ``1 - delta``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    # guard against ceil(32.000000000000004) when delta = e^-4
    return max(1, math.ceil(8.0 * math.log(1.0 / delta) - 1e-9))


def mom_estimate(raw_ratios, delta: float) -> float:
    """Median of contiguous block means over the draws in order.

    Draws past ``K * floor(N / K)`` are discarded. An even number of blocks
    takes the mean of the two middle block means.
    """
    values = np.asarray(raw_ratios, dtype=np.float64).ravel()
    k = mom_blocks(delta)
    if values.shape[0] < k:
        raise InsufficientSamplesError("insufficient samples for requested confidence")
    size = values.shape[0] // k
    means = values[: k * size].reshape(k, size).mean(axis=1)
    return float(np.median(means))


def _mixture_cross_terms(f: KernelMixture, c: float, g: KSoSModel, lam0: float):
    """``||f - c||^2`` and ``<f - c, g>`` in the RKHS of the model spectrum."""
    if not np.allclose(f.scale, 2.0 * g.scale, rtol=1e-14, atol=0):
        raise OutOfReachError(
            "target spectrum outside kernel reach; increase s "
            "(kernel mixtures need a mixture scale equal to twice the model scale)"
        )
    a = f.weights
    norm_sq = float(a @ f.gram() @ a - 2.0 * c * a.sum() + c * c / lam0)
    g0 = float(np.real(g.coefficients(np.zeros((1, g.dim), dtype=np.int64))[0]))
    inner = float(a @ g.evaluate(f.centers) - c * g0 / lam0)
    return norm_sq, inner


def residual_hilbert_norm_bound(f, c: float, g: KSoSModel, dist: BesselSpectrumDistribution) -> float:
    """Upper bound ``B`` on the Hilbert norm of ``f - c - g``.

    Uses the exact expansion ``||f - c||^2 - 2 <f - c, g> + hs(g)^2`` where
    the model norm is replaced by its Hilbert-Schmidt bound. If rounding
    makes that negative the triangle inequality is used instead.

    Raises
    ------
    OutOfReachError
        If the target has a coefficient outside the truncated support.
    """
    _check_compatible(f, g, dist)
    hs = g.hs_norm_bound()
    zero = np.zeros((1, f.dim), dtype=np.int64)
    lam0 = float(dist.weight(zero)[0])
    if isinstance(f, KernelMixture):
        norm_sq, inner = _mixture_cross_terms(f, c, g, lam0)
    else:
        shifted = f.add_constant(-c)
        freqs = shifted.freqs
        if not len(freqs):
            norm_sq, inner = 0.0, 0.0
        else:
            if not dist.in_support(freqs).all():
                raise OutOfReachError("target spectrum outside kernel reach; increase s")
            lam = dist.weight(freqs)
            fc = np.asarray(shifted.coeffs)
            gc = g.coefficients(freqs)
            norm_sq = math.fsum((np.abs(fc) ** 2 / lam).tolist())
            inner = math.fsum((np.real(np.conj(fc) * gc) / lam).tolist())
    radicand = norm_sq - 2.0 * inner + hs * hs
    if radicand >= 0.0:
        return math.sqrt(radicand)
    return math.sqrt(max(norm_sq, 0.0)) + hs


def _assemble(kind, c, estimate, deviation, norm_bound, tail, delta, n, seed, confidence, details=None):
    eps = max(0.0, estimate + deviation + tail)
    return Certificate(
        candidate=float(c),
        epsilon=float(eps),
        delta=float(delta),
        n_samples=int(n),
        estimator=kind,
        estimate=float(estimate),
        deviation=float(deviation),
        norm_bound=float(norm_bound),
        tail=float(tail),
        seed=seed,
        confidence=float(confidence),
        details=details or {},
    )


def _prepare(f, c, g, dist, n, seed, deviation_scale, timings=None):
    if deviation_scale not in DEVIATION_SCALES:
        raise ValueError(f"deviation_scale must be one of {DEVIATION_SCALES}")
    bound = residual_hilbert_norm_bound(f, c, g, dist)
    tail = math.sqrt(dist.dropped_mass) * bound
    scale = bound if deviation_scale == "residual" else g.hs_norm_bound()
    samples = residual_samples(f, c, g, dist, n, seed, timings)
    return samples, scale, tail


def chebyshev_deviation(norm_bound: float, n: int, delta: float) -> float:
    return norm_bound / math.sqrt(n * delta)


def mom_deviation(norm_bound: float, n: int, delta: float) -> float:
    return 4.0 * math.sqrt(2.0) * norm_bound * math.sqrt(math.log(1.0 / delta) / n)


def certify_chebyshev(f, c, g, dist, n, delta, seed, deviation_scale: str = "residual", timings=None) -> Certificate:
    """Plain-mean certificate from Chebyshev's inequality."""
    samples, scale, tail = _prepare(f, c, g, dist, n, seed, deviation_scale, timings)
    est = mean_estimate(samples)
    return _assemble("cheby", c, est, chebyshev_deviation(scale, n, delta), scale, tail, delta, n, seed, 1.0 - delta)


def certify_mom(f, c, g, dist, n, delta, seed, deviation_scale: str = "residual", timings=None) -> Certificate:
    """Median-of-means certificate with sub-Gaussian deviation."""
    if n < mom_blocks(delta):
        raise InsufficientSamplesError("insufficient samples for requested confidence")
    samples, scale, tail = _prepare(f, c, g, dist, n, seed, deviation_scale, timings)
    est = mom_estimate(samples.raw_ratios, delta)
    return _assemble("mom", c, est, mom_deviation(scale, n, delta), scale, tail, delta, n, seed, 1.0 - delta)


def certify(
    f,
    c: float,
    g: KSoSModel,
    dist: BesselSpectrumDistribution,
    n: int,
    delta: float = DEFAULT_DELTA,
    seed=None,
    estimator: str = "mom",
    union_bound: bool = False,
    deviation_scale: str = "residual",
    timings: dict | None = None,
) -> Certificate:
    """Certificate with the chosen estimator.

    With ``estimator="both"`` the tighter of the two is reported. Without
    ``union_bound`` each runs at ``delta`` and the reported confidence is
    ``1 - 2 delta``; with it each runs at ``delta / 2`` and the confidence
    is ``1 - delta``. Both estimators share the same draws. ``timings``
    is filled as in :func:`residual_samples`.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    if estimator == "mom":
        return certify_mom(f, c, g, dist, n, delta, seed, deviation_scale, timings)
    if estimator == "cheby":
        return certify_chebyshev(f, c, g, dist, n, delta, seed, deviation_scale, timings)

    each = delta / 2.0 if union_bound else delta
    confidence = 1.0 - delta if union_bound else 1.0 - 2.0 * delta
    if n < mom_blocks(each):
        raise InsufficientSamplesError("insufficient samples for requested confidence")
    samples, scale, tail = _prepare(f, c, g, dist, n, seed, deviation_scale, timings)
    cheb = (mean_estimate(samples), chebyshev_deviation(scale, n, each))
    mom = (mom_estimate(samples.raw_ratios, each), mom_deviation(scale, n, each))
    details = {
        "cheby": {"estimate": cheb[0], "deviation": cheb[1], "epsilon": sum(cheb) + tail},
        "mom": {"estimate": mom[0], "deviation": mom[1], "epsilon": sum(mom) + tail},
    }
    kind, (est, dev) = min((("mom", mom), ("cheby", cheb)), key=lambda kv: sum(kv[1]))
    return _assemble(kind, c, est, dev, scale, tail, each, n, seed, confidence, details)


def f_norm_truncated(f, c: float, g: KSoSModel, box: int, budget: int = 10**7) -> float:
    """``sum |f_w - c 1[w = 0] - g_w|`` over ``|w|_inf <= box`` by enumeration.

    On the cube basis the box is ``0 <= w_l <= box``.
    """
    if box < 0:
        raise ValueError("box must be nonnegative")
    lo = -box if g.basis == "torus" else 0
    count = (box - lo + 1) ** g.dim
    if count > budget:
        raise ValueError(f"enumeration of {count} frequencies exceeds the budget {budget}")
    axes = [np.arange(lo, box + 1)] * g.dim
    freqs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, g.dim)
    return math.fsum(np.abs(_residual_coefficients(f, c, g, freqs)).tolist())
