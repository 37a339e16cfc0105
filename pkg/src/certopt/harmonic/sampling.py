"""Product Bessel distribution over frequencies and its sampler.

For a kernel scale ``s`` the model lives in the RKHS whose spectral weights
are ``prod_l e^{-2 s_l} I_{|w_l|}(2 s_l)``. Those weights sum to one, so they
double as the sampling distribution of the stochastic F-norm estimator.
On the Chebyshev basis the spectrum is folded onto nonnegative indices
(``w > 0`` gets twice the torus weight).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bessel import bessel_i

#: Relative cut below which a one-dimensional weight is dropped.
TRUNCATION_RATIO = 2.0**-53

BASES = ("torus", "chebychev")


def truncation_order(s: float) -> int:
    """Largest order kept for the per-dimension table at scale ``s``.

    Orders are kept while ``I_w(2s) >= 2^-53 I_0(2s)``.
    """
    ref = bessel_i(0, 2.0 * s)
    w = 0
    while bessel_i(w + 1, 2.0 * s) >= TRUNCATION_RATIO * ref:
        w += 1
    return w


@dataclass(frozen=True, eq=False)
class FrequencySample:
    """Deduplicated draws.

    ``freqs[inverse]`` reproduces the raw draws in draw order and
    ``counts`` holds the multiplicity of each unique frequency.
    """

    freqs: np.ndarray
    counts: np.ndarray
    inverse: np.ndarray

    @property
    def n_draws(self) -> int:
        return int(self.inverse.shape[0])

    def __len__(self) -> int:
        return int(self.freqs.shape[0])


@dataclass(frozen=True, eq=False)
class BesselSpectrumDistribution:
    """Truncated, renormalized product of per-dimension Bessel weights.

    Parameters
    ----------
    scale : array_like
        Per-dimension kernel scale ``s_l > 0`` of the model. The weights use
        ``2 s_l``.
    basis : {"torus", "chebychev"}
    """

    scale: np.ndarray
    basis: str = "torus"
    orders: tuple = field(init=False)
    tables: tuple = field(init=False)
    kept_mass: tuple = field(init=False)

    def __post_init__(self):
        scale = np.atleast_1d(np.asarray(self.scale, dtype=np.float64)).copy()
        if (scale <= 0).any() or not np.isfinite(scale).all():
            raise ValueError("kernel scale must be positive and finite")
        if self.basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}")
        scale.setflags(write=False)
        object.__setattr__(self, "scale", scale)
        orders, tables, kept = [], [], []
        for s in scale.tolist():
            omega = truncation_order(s)
            base = math.exp(-2.0 * s) * np.array(
                [bessel_i(k, 2.0 * s) for k in range(omega + 1)]
            )
            if self.basis == "torus":
                w = np.concatenate([base[:0:-1], base])
            else:
                w = base * np.where(np.arange(omega + 1) > 0, 2.0, 1.0)
            mass = math.fsum(w.tolist())
            orders.append(omega)
            tables.append(w / mass)
            kept.append(mass)
        object.__setattr__(self, "orders", tuple(orders))
        object.__setattr__(self, "tables", tuple(tables))
        object.__setattr__(self, "kept_mass", tuple(kept))

    @property
    def dim(self) -> int:
        return int(self.scale.shape[0])

    def support_values(self, l: int) -> np.ndarray:
        o = self.orders[l]
        return np.arange(-o, o + 1) if self.basis == "torus" else np.arange(o + 1)

    @property
    def dropped_mass(self) -> float:
        """Exact weight mass outside the truncated support."""
        return max(0.0, 1.0 - math.prod(self.kept_mass))

    def in_support(self, freqs) -> np.ndarray:
        freqs = np.atleast_2d(np.asarray(freqs, dtype=np.int64))
        lo = -np.array(self.orders) if self.basis == "torus" else np.zeros(self.dim, np.int64)
        return ((freqs >= lo) & (freqs <= np.array(self.orders))).all(axis=1)

    def probability(self, freqs) -> np.ndarray:
        """Renormalized sampling probability of each frequency (0 off support)."""
        freqs = np.atleast_2d(np.asarray(freqs, dtype=np.int64))
        ok = self.in_support(freqs)
        p = np.where(ok, 1.0, 0.0)
        for l in range(self.dim):
            offset = self.orders[l] if self.basis == "torus" else 0
            idx = np.where(ok, freqs[:, l] + offset, 0)
            p = p * self.tables[l][idx]
        return p

    def weight(self, freqs) -> np.ndarray:
        """Exact, untruncated spectral weight ``lambda_w`` (no renormalization)."""
        freqs = np.atleast_2d(np.asarray(freqs, dtype=np.int64))
        out = np.ones(len(freqs))
        for l, s in enumerate(self.scale.tolist()):
            a = np.abs(freqs[:, l])
            top = int(a.max(initial=0))
            table = math.exp(-2.0 * s) * np.array([bessel_i(k, 2.0 * s) for k in range(top + 1)])
            if self.basis == "chebychev":
                table = table * np.where(np.arange(top + 1) > 0, 2.0, 1.0)
            out *= table[a]
        return out

    def sample(self, n: int, seed) -> FrequencySample:
        """Draw ``n`` i.i.d. frequencies and deduplicate them.

        Each coordinate uses its own generator spawned from ``seed``, so the
        result depends only on ``(self, n, seed)``.
        """
        n = int(n)
        if n < 1:
            raise ValueError("need at least one draw")
        children = np.random.SeedSequence(seed).spawn(self.dim)
        draws = np.empty((n, self.dim), dtype=np.int64)
        for l, child in enumerate(children):
            rng = np.random.default_rng(child)
            cdf = np.cumsum(self.tables[l])
            cdf[-1] = 1.0
            idx = np.searchsorted(cdf, rng.random(n), side="right")
            draws[:, l] = self.support_values(l)[np.minimum(idx, len(cdf) - 1)]
        widths = [len(t) for t in self.tables]
        if sum(math.log2(w) for w in widths) < 62:
            # mixed-radix key: exact, order-preserving per coordinate
            key = np.zeros(n, dtype=np.int64)
            for l in range(self.dim):
                offset = self.orders[l] if self.basis == "torus" else 0
                key = key * widths[l] + (draws[:, l] + offset)
        else:
            key = draws
        _, first, inverse, counts = np.unique(
            key, axis=0 if key.ndim == 2 else None,
            return_index=True, return_inverse=True, return_counts=True,
        )
        return FrequencySample(draws[first], counts.astype(np.int64), inverse.ravel())
