"""Brute-force references: grid minimization, quadrature spectra, dense models.

Nothing here calls into the closed-form coefficient code of
:mod:`certopt.model`; every quantity is recomputed from point evaluations
or from the kernel definition so the two routes can check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .harmonic.spectra import ChebPoly

GRID_BUDGET = 10**8
QUADRATURE_BUDGET = 2**24
_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class GridResult:
    """Best grid point, its value and a bound on ``value - min f``."""

    point: np.ndarray
    value: float
    slack: float
    points_per_dim: int


def _lipschitz(f) -> tuple[float, float]:
    if isinstance(f, ChebPoly):
        # constants of the lifted function u -> h(cos 2 pi u)
        l1 = np.abs(f.freqs).sum(axis=1).astype(np.float64)
        a = np.abs(f.coeffs)
        return float(2.0 * np.pi * (a * l1).sum()), float(4.0 * np.pi**2 * (a * l1**2).sum())
    return f.lipschitz_constants()


def grid_slack(f, spacing: float) -> float:
    """Bound on ``min_grid f - min f`` for a grid of the given spacing.

    Every point is within ``spacing / 2`` of the grid in the sup norm. The
    first-order bound is ``L1 * spacing / 2``; at the minimizer the gradient
    vanishes, which gives the second-order bound ``L2 * spacing^2 / 8``.
    The smaller of the two is returned.
    """
    l1, l2 = _lipschitz(f)
    h = 0.5 * spacing
    return min(l1 * h, 0.5 * l2 * h * h)


def grid_minimize(f, points_per_dim: int, budget: int = GRID_BUDGET) -> GridResult:
    """Exhaustive minimization on a uniform tensor grid.

    Torus targets use ``k / n`` per coordinate. Chebyshev targets use the
    lifted coordinate ``u`` on ``n`` equispaced points of ``[0, 1/2]`` and
    report the cube point ``cos 2 pi u``.
    """
    n = int(points_per_dim)
    total = n ** f.dim
    if n < 2 or total > budget:
        raise ValueError(f"grid of {n}^{f.dim} points exceeds the budget {budget}")
    cheb = isinstance(f, ChebPoly)
    if cheb:
        axis = np.linspace(0.0, 0.5, n)
        spacing = 0.5 / (n - 1)
        evaluate = f.evaluate_lifted
    else:
        axis = np.arange(n) / n
        spacing = 1.0 / n
        evaluate = f.evaluate

    best_val, best_idx = math.inf, 0
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        digits = np.stack(np.unravel_index(flat, (n,) * f.dim), axis=1)
        vals = evaluate(axis[digits])
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_idx = float(vals[j]), int(flat[j])
    point = axis[np.array(np.unravel_index(best_idx, (n,) * f.dim))]
    if cheb:
        point = np.cos(2.0 * np.pi * point)
    return GridResult(point, best_val, grid_slack(f, spacing), n)


# -- quadrature -----------------------------------------------------------


def _tensor_grid(axis: np.ndarray, dim: int) -> np.ndarray:
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, dim)


def quadrature_fourier_coeffs(func, dim: int, freqs, grid_n: int, budget: int = QUADRATURE_BUDGET) -> np.ndarray:
    """Trapezoidal Fourier coefficients of a periodic function on ``[0, 1)^dim``.

    ``func`` maps points of shape ``(n, dim)`` to values. The rule is exact
    for trigonometric polynomials whose degree is below ``grid_n / 2``.
    """
    freqs = np.atleast_2d(np.asarray(freqs, dtype=np.int64))
    if grid_n ** dim > budget:
        raise ValueError(f"quadrature grid {grid_n}^{dim} exceeds the budget {budget}")
    if grid_n < 4 * (1 + int(np.abs(freqs).max(initial=0))):
        raise ValueError("grid too coarse for the requested frequencies")
    axis = np.arange(grid_n) / grid_n
    values = np.asarray(func(_tensor_grid(axis, dim)), dtype=np.complex128).reshape((grid_n,) * dim)
    out = np.empty(len(freqs), dtype=np.complex128)
    for i, w in enumerate(freqs):
        acc = values
        for l in range(dim):
            # contract the leading axis with the 1-d Fourier row of this dimension
            row = np.exp(-2j * np.pi * w[l] * axis) / grid_n
            acc = np.tensordot(row, acc, axes=(0, 0))
        out[i] = acc
    return out


def quadrature_fourier_coeff(func, dim: int, freq, grid_n: int) -> complex:
    return complex(quadrature_fourier_coeffs(func, dim, [freq], grid_n)[0])


def quadrature_cheb_coeffs(func, dim: int, freqs, nodes_n: int, budget: int = QUADRATURE_BUDGET) -> np.ndarray:
    """Chebyshev coefficients by Chebyshev-Gauss quadrature.

    Per dimension the coefficient of ``H_k`` is
    ``(2 - 1[k = 0]) / n * sum_j f(cos t_j) cos(k t_j)`` with
    ``t_j = (j + 1/2) pi / n``.
    """
    freqs = np.atleast_2d(np.asarray(freqs, dtype=np.int64))
    if (freqs < 0).any():
        raise ValueError("Chebyshev frequencies must be nonnegative")
    if nodes_n ** dim > budget:
        raise ValueError(f"quadrature grid {nodes_n}^{dim} exceeds the budget {budget}")
    t = (np.arange(nodes_n) + 0.5) * np.pi / nodes_n
    values = np.asarray(func(_tensor_grid(np.cos(t), dim)), dtype=np.float64).reshape((nodes_n,) * dim)
    out = np.empty(len(freqs))
    for i, w in enumerate(freqs):
        acc = values
        for l in range(dim):
            row = (2.0 - (w[l] == 0)) / nodes_n * np.cos(w[l] * t)
            acc = np.tensordot(row, acc, axes=(0, 0))
        out[i] = acc
    return out


def quadrature_cheb_coeff(func, dim: int, freq, nodes_n: int) -> float:
    return float(quadrature_cheb_coeffs(func, dim, [freq], nodes_n)[0])


# -- dense models ---------------------------------------------------------


def direct_kernel(x: np.ndarray, z: np.ndarray, scale, basis: str) -> np.ndarray:
    """Kernel matrix straight from its definition.

    Torus: ``prod_l exp(s_l (cos 2 pi (x_l - z_l) - 1))``. Cube: with
    ``x = cos 2 pi t`` and anchors at ``u = z``,
    ``prod_l (q(t_l + z_l) + q(t_l - z_l)) / 2``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (x.shape[1],))
    if basis == "torus":
        diff = x[:, None, :] - z[None, :, :]
        return np.exp((scale * (np.cos(2.0 * np.pi * diff) - 1.0)).sum(axis=-1))
    t = np.arccos(np.clip(x, -1.0, 1.0)) / (2.0 * np.pi)
    plus = np.cos(2.0 * np.pi * (t[:, None, :] + z[None, :, :]))
    minus = np.cos(2.0 * np.pi * (t[:, None, :] - z[None, :, :]))
    per_dim = 0.5 * (np.exp(scale * (plus - 1.0)) + np.exp(scale * (minus - 1.0)))
    return per_dim.prod(axis=-1)


def dense_model_evaluate(anchors, gram_coeffs, scale, basis: str, x) -> np.ndarray:
    """``sum_ab G_ab K(x, z_a) K(x, z_b)`` for a dense coefficient matrix."""
    k = direct_kernel(x, anchors, scale, basis)
    return np.einsum("na,ab,nb->n", k, np.asarray(gram_coeffs), k)


def truncated_hilbert_norm_sq(coeffs: np.ndarray, weights: np.ndarray) -> float:
    """``sum |c_w|^2 / lambda_w`` over whatever frequencies were supplied."""
    return math.fsum((np.abs(coeffs) ** 2 / weights).tolist())


def box_frequencies(dim: int, width: int, nonnegative: bool = False) -> np.ndarray:
    """All frequencies with ``|w|_inf <= width`` (or ``0 <= w_l <= width``)."""
    axis = np.arange(0 if nonnegative else -width, width + 1)
    return _tensor_grid(axis, dim).astype(np.int64)

