"""Modified Bessel functions of the first kind, integer order.

Everything here is evaluated with the defining power series

    I_n(x) = sum_{p >= 0} (x/2)^(2p+n) / (p! (p+n)!)

using the term ratio for the recursion and stopping once the tail can no
longer change the partial sum. All arguments used by the package are of
order ``2 s`` with ``s`` a kernel scale, so the series stays short.
"""

from __future__ import annotations

import math

import numpy as np

#: Largest argument accepted. Beyond this the series needs > 60 terms and an
#: asymptotic branch would be preferable; nothing in the package gets close.
MAX_ARG = 30.0

_MAX_TERMS = 200


def bessel_i(order: int, arg: float) -> float:
    """Return ``I_order(arg)`` for a nonnegative integer order and ``arg >= 0``.

    Parameters
    ----------
    order : int
        Nonnegative integer order.
    arg : float
        Nonnegative, finite argument no larger than :data:`MAX_ARG`.

    Returns
    -------
    float
        The Bessel value, accurate to about 1e-15 relative.

    Raises
    ------
    ValueError
        If ``order`` is negative, or ``arg`` is negative, non-finite or too large.
    """
    order = int(order)
    arg = float(arg)
    if order < 0:
        raise ValueError(f"order must be nonnegative, got {order}")
    if not math.isfinite(arg) or arg < 0.0:
        raise ValueError(f"argument must be finite and nonnegative, got {arg}")
    if arg > MAX_ARG:
        raise ValueError(f"argument {arg} exceeds the series range {MAX_ARG}")
    half = 0.5 * arg
    if half == 0.0:
        # covers subnormal arguments whose half underflows
        return 1.0 if order == 0 else 0.0
    # (x/2)^n / n! in log space so large orders underflow cleanly to 0.
    log_t0 = order * math.log(half) - math.lgamma(order + 1)
    if log_t0 < -745.0:
        return 0.0
    term = math.exp(log_t0)
    total = term
    q = half * half
    for p in range(1, _MAX_TERMS):
        term *= q / (p * (p + order))
        total += term
        if term < 1e-17 * total:
            break
    return total


def bessel_i_array(order: int, x: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Vectorized ``I_order(x)`` over an array of real arguments.

    Negative arguments are allowed and use the parity of the series,
    ``I_n(-x) = (-1)^n I_n(x)``; the kernel coefficient formulas produce
    such arguments whenever two anchors sit more than half a period apart.

    ``dtype=np.longdouble`` runs the series in extended precision, which
    the closed-form model spectra need when anchor Gram matrices are badly
    conditioned.
    """
    order = int(order)
    if order < 0:
        raise ValueError(f"order must be nonnegative, got {order}")
    x = np.asarray(x, dtype=dtype)
    ax = np.abs(x)
    if ax.size and float(ax.max()) > MAX_ARG:
        raise ValueError(f"argument exceeds the series range {MAX_ARG}")

    half = 0.5 * ax
    q = half * half
    with np.errstate(divide="ignore", under="ignore"):
        if order == 0:
            term = np.ones_like(ax)
        elif dtype == np.float64:
            term = np.exp(order * np.log(half) - math.lgamma(order + 1))
        else:
            term = half**order / np.asarray(math.factorial(order), dtype=dtype)
    total = term.copy()
    for p in range(1, _MAX_TERMS):
        term = term * (q / (p * (p + order)))
        total += term
        if not np.any(term > 1e-17 * total):
            break
    if order % 2 == 1:
        total = np.where(x < 0.0, -total, total)
    return total


def bessel_i_table(max_order: int, x: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Stack ``I_n(x)`` for ``n = 0..max_order`` along a new leading axis."""
    x = np.asarray(x, dtype=dtype)
    out = np.empty((max_order + 1,) + x.shape, dtype=dtype)
    for n in range(max_order + 1):
        out[n] = bessel_i_array(n, x, dtype)
    return out


def scaled_bessel_weights(max_order: int, s: float) -> np.ndarray:
    """Return ``e^{-s} I_n(s)`` for ``n = 0..max_order``.

    These are the Fourier weights of the periodic kernel
    ``exp(s (cos 2 pi x - 1))``.
    """
    return math.exp(-s) * np.array([bessel_i(n, s) for n in range(max_order + 1)])
