"""Sparse periodic targets: trigonometric polynomials, Chebyshev polynomials
and Bessel-kernel mixtures.

All three expose the same small surface used by the trainer and the
certifier: ``dim``, ``basis``, ``evaluate(points)``, ``gradient(points)``
and ``coefficients(freqs)``. Points are arrays of shape ``(n, dim)``;
frequencies are integer arrays of shape ``(k, dim)``.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping

import numpy as np

from .bessel import bessel_i

TWO_PI = 2.0 * np.pi


class NonRealError(ValueError):
    """Raised when a real-flagged polynomial evaluates to a complex value."""


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if dim == 1 and x.shape[0] != 1:
            x = x[:, None]
        else:
            x = x[None, :]
    if x.shape[-1] != dim:
        raise ValueError(f"points must have last dimension {dim}, got shape {x.shape}")
    return x


def _as_freqs(freqs, dim: int) -> np.ndarray:
    freqs = np.asarray(freqs, dtype=np.int64)
    if freqs.ndim == 1:
        freqs = freqs.reshape(-1, dim) if dim > 1 else freqs[:, None]
    if freqs.shape[-1] != dim:
        raise ValueError(f"frequencies must have last dimension {dim}, got {freqs.shape}")
    return freqs


def _merge_terms(freqs: np.ndarray, coeffs: np.ndarray, dim: int):
    """Sum duplicate frequencies and drop exact zeros, keeping first-seen order."""
    table: dict[tuple, complex] = {}
    for w, a in zip(map(tuple, freqs.tolist()), coeffs.tolist()):
        table[w] = table.get(w, 0) + a
    keys = [k for k, v in table.items() if v != 0]
    if not keys:
        return np.zeros((0, dim), dtype=np.int64), np.zeros(0, dtype=coeffs.dtype)
    return (
        np.array(keys, dtype=np.int64).reshape(-1, dim),
        np.array([table[k] for k in keys], dtype=coeffs.dtype),
    )


class TrigPoly:
    """Finite Fourier series ``f(z) = sum_w c_w exp(2 pi i w.z)`` on the torus.

    Parameters
    ----------
    freqs : array_like of int, shape (n, dim)
    coeffs : array_like of complex, shape (n,)
    real : bool
        If true (the default) the coefficients must satisfy Hermitian
        symmetry ``c_{-w} = conj(c_w)``; a violation raises ``ValueError``.
    dim : int, optional
        Needed only when ``freqs`` is empty.
    """

    basis = "torus"

    def __init__(self, freqs, coeffs, real: bool = True, dim: int | None = None):
        coeffs = np.asarray(coeffs, dtype=np.complex128).ravel()
        if dim is None:
            arr = np.asarray(freqs)
            if arr.ndim != 2:
                raise ValueError("dim is required when freqs is not a 2-d array")
            dim = arr.shape[1]
        freqs = _as_freqs(freqs, dim) if len(coeffs) else np.zeros((0, dim), np.int64)
        if len(freqs) != len(coeffs):
            raise ValueError("freqs and coeffs must have the same length")
        self.dim = int(dim)
        self.real = bool(real)
        self.freqs, self.coeffs = _merge_terms(freqs, coeffs, self.dim)
        self._index = {w: i for i, w in enumerate(map(tuple, self.freqs.tolist()))}
        if self.real:
            self._check_hermitian()

    @classmethod
    def from_dict(cls, terms: Mapping[Iterable[int], complex], dim: int, real: bool = True):
        keys = [tuple(int(v) for v in np.atleast_1d(k)) for k in terms]
        return cls(np.array(keys, dtype=np.int64).reshape(-1, dim), list(terms.values()), real, dim)

    @classmethod
    def hermitian_completion(cls, freqs, coeffs, dim: int | None = None):
        """Build a real polynomial from one representative of each ``{w, -w}`` pair.

        The zero frequency keeps only its real part. Passing both ``w`` and
        ``-w`` is an error.
        """
        coeffs = np.asarray(coeffs, dtype=np.complex128).ravel()
        if dim is None:
            dim = np.asarray(freqs).shape[1]
        freqs = _as_freqs(freqs, dim) if len(coeffs) else np.zeros((0, dim), np.int64)
        seen = set()
        out_f, out_c = [], []
        for w, a in zip(map(tuple, freqs.tolist()), coeffs.tolist()):
            neg = tuple(-v for v in w)
            if w in seen or neg in seen:
                raise ValueError(f"frequency {w} or its negative given twice")
            seen.add(w)
            if all(v == 0 for v in w):
                out_f.append(w)
                out_c.append(complex(a.real, 0.0))
            else:
                out_f += [w, neg]
                out_c += [a, a.conjugate()]
        return cls(np.array(out_f, dtype=np.int64).reshape(-1, dim), out_c, True, dim)

    def _check_hermitian(self) -> None:
        scale = max(1.0, float(np.abs(self.coeffs).max(initial=0.0)))
        for w, a in zip(map(tuple, self.freqs.tolist()), self.coeffs):
            j = self._index.get(tuple(-v for v in w))
            partner = 0.0 if j is None else self.coeffs[j]
            if abs(partner - np.conj(a)) > 1e-12 * scale:
                raise ValueError(f"coefficients are not Hermitian-symmetric at frequency {w}")

    # -- basic properties -------------------------------------------------

    def __len__(self) -> int:
        return len(self.coeffs)

    @property
    def max_degree(self) -> int:
        """Largest ``|w_l|`` over the support."""
        return int(np.abs(self.freqs).max(initial=0))

    def fnorm(self) -> float:
        """Sum of absolute coefficients, an upper bound on the sup norm."""
        return float(np.abs(self.coeffs).sum())

    def coefficient(self, freq) -> complex:
        j = self._index.get(tuple(int(v) for v in np.atleast_1d(freq)))
        return 0j if j is None else complex(self.coeffs[j])

    def coefficients(self, freqs) -> np.ndarray:
        freqs = _as_freqs(freqs, self.dim)
        out = np.zeros(len(freqs), dtype=np.complex128)
        for k, w in enumerate(map(tuple, freqs.tolist())):
            j = self._index.get(w)
            if j is not None:
                out[k] = self.coeffs[j]
        return out

    def add_constant(self, value: float) -> "TrigPoly":
        zero = np.zeros((1, self.dim), dtype=np.int64)
        return TrigPoly(
            np.vstack([self.freqs, zero]), np.append(self.coeffs, value), self.real, self.dim
        )

    # -- evaluation -------------------------------------------------------

    def _phases(self, x: np.ndarray) -> np.ndarray:
        """``exp(2 pi i w.x)`` for every point and term, shape ``(n, terms)``."""
        return np.exp(1j * TWO_PI * (x @ self.freqs.T.astype(np.float64)))

    def _dense_tensor(self):
        """Coefficients scattered on their bounding box, or None if too sparse."""
        lo = self.freqs.min(axis=0)
        shape = tuple((self.freqs.max(axis=0) - lo + 1).tolist())
        size = math.prod(shape)
        if size > 64 * len(self.coeffs) or size > 4_000_000:
            return None
        tensor = np.zeros(shape, dtype=np.complex128)
        tensor[tuple((self.freqs - lo).T)] = self.coeffs
        return lo, tensor

    def _evaluate_box(self, x: np.ndarray, lo: np.ndarray, tensor: np.ndarray) -> np.ndarray:
        # contract one dimension at a time, last dimension first
        tables = [
            np.exp(1j * TWO_PI * np.outer(x[:, l], np.arange(lo[l], lo[l] + tensor.shape[l])))
            for l in range(self.dim)
        ]
        acc = tensor.reshape(-1, tensor.shape[-1]) @ tables[-1].T
        for l in range(self.dim - 2, -1, -1):
            acc = acc.reshape(-1, tensor.shape[l], len(x))
            acc = np.einsum("akn,nk->an", acc, tables[l])
        return acc.reshape(len(x))

    def evaluate_complex(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        if not len(self.coeffs):
            return np.zeros(len(x), dtype=np.complex128)
        if not hasattr(self, "_box"):
            self._box = self._dense_tensor()
        out = np.empty(len(x), dtype=np.complex128)
        # chunk to bound the intermediate (points x terms) arrays
        width = len(self.coeffs) if self._box is None else self._box[1].size
        step = max(1, 2_000_000 // max(1, width))
        for i in range(0, len(x), step):
            chunk = x[i:i + step]
            if self._box is None:
                out[i:i + step] = self._phases(chunk) @ self.coeffs
            else:
                out[i:i + step] = self._evaluate_box(chunk, *self._box)
        return out

    def evaluate(self, x) -> np.ndarray:
        """Evaluate at points of shape ``(n, dim)``; returns a real array.

        Raises
        ------
        NonRealError
            If the imaginary residue exceeds 1e-10 relative to the F-norm,
            which means the Hermitian invariant was broken.
        """
        vals = self.evaluate_complex(x)
        if not self.real:
            return vals
        scale = max(self.fnorm(), 1e-300)
        if vals.size and float(np.abs(vals.imag).max()) > 1e-10 * scale:
            raise NonRealError("imaginary residue in real polynomial evaluation")
        return vals.real.copy()

    def __call__(self, x):
        return self.evaluate(x)

    def gradient(self, x) -> np.ndarray:
        """Gradient with respect to the torus coordinates, shape ``(n, dim)``."""
        x = _as_points(x, self.dim)
        if not len(self.coeffs):
            return np.zeros_like(x)
        ph = self._phases(x) * self.coeffs
        grad = (ph @ (1j * TWO_PI * self.freqs.astype(np.float64)))
        return grad.real if self.real else grad

    def lipschitz_constants(self) -> tuple[float, float]:
        """Bounds on first and second directional variation.

        Returns ``(L1, L2)`` such that for any displacement ``h``,
        ``|f(x+h) - f(x)| <= L1 |h|_inf`` and the second derivative along
        ``h`` is at most ``L2 |h|_inf^2``.
        """
        l1 = np.abs(self.freqs).sum(axis=1).astype(np.float64)
        a = np.abs(self.coeffs)
        return float(TWO_PI * (a * l1).sum()), float(TWO_PI**2 * (a * l1**2).sum())

    def hilbert_norm_sq(self, weights) -> float:
        """``sum |c_w|^2 / weights(w)`` for a callable spectral weight."""
        lam = weights(self.freqs)
        return float((np.abs(self.coeffs) ** 2 / lam).sum())

    def __repr__(self) -> str:
        return f"TrigPoly(dim={self.dim}, terms={len(self)})"


def chebyshev_table(max_order: int, x: np.ndarray, dtype=np.float64) -> np.ndarray:
    """``H_k(x)`` for ``k = 0..max_order`` via the three-term recurrence."""
    x = np.asarray(x, dtype=dtype)
    out = np.empty((max_order + 1,) + x.shape, dtype=dtype)
    out[0] = 1.0
    if max_order >= 1:
        out[1] = x
    for k in range(1, max_order):
        out[k + 1] = 2.0 * x * out[k] - out[k - 1]
    return out


def chebyshev_derivative_table(max_order: int, x: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``H_k'(x)`` from ``H_{k+1}' = 2 H_k + 2 x H_k' - H_{k-1}'``."""
    out = np.zeros_like(values)
    if max_order >= 1:
        out[1] = 1.0
    for k in range(1, max_order):
        out[k + 1] = 2.0 * values[k] + 2.0 * x * out[k] - out[k - 1]
    return out


class ChebPoly:
    """Real polynomial ``h(x) = sum_w c_w prod_l H_{w_l}(x_l)`` on ``[-1, 1]^dim``.

    ``H_k`` is the Chebyshev polynomial of the first kind.
    """

    basis = "chebychev"

    def __init__(self, freqs, coeffs, dim: int | None = None):
        coeffs = np.asarray(coeffs, dtype=np.float64).ravel()
        if dim is None:
            arr = np.asarray(freqs)
            if arr.ndim != 2:
                raise ValueError("dim is required when freqs is not a 2-d array")
            dim = arr.shape[1]
        freqs = _as_freqs(freqs, dim) if len(coeffs) else np.zeros((0, dim), np.int64)
        if len(freqs) != len(coeffs):
            raise ValueError("freqs and coeffs must have the same length")
        if (freqs < 0).any():
            raise ValueError("Chebyshev frequencies must be nonnegative")
        self.dim = int(dim)
        self.freqs, self.coeffs = _merge_terms(freqs, coeffs, self.dim)
        self._index = {w: i for i, w in enumerate(map(tuple, self.freqs.tolist()))}

    @classmethod
    def from_dict(cls, terms: Mapping[Iterable[int], float], dim: int):
        keys = [tuple(int(v) for v in np.atleast_1d(k)) for k in terms]
        return cls(np.array(keys, dtype=np.int64).reshape(-1, dim), list(terms.values()), dim)

    def __len__(self) -> int:
        return len(self.coeffs)

    @property
    def max_degree(self) -> int:
        return int(self.freqs.max(initial=0))

    def fnorm(self) -> float:
        return float(np.abs(self.coeffs).sum())

    def coefficients(self, freqs) -> np.ndarray:
        freqs = _as_freqs(freqs, self.dim)
        out = np.zeros(len(freqs))
        for k, w in enumerate(map(tuple, freqs.tolist())):
            j = self._index.get(w)
            if j is not None:
                out[k] = self.coeffs[j]
        return out

    def add_constant(self, value: float) -> "ChebPoly":
        zero = np.zeros((1, self.dim), dtype=np.int64)
        return ChebPoly(np.vstack([self.freqs, zero]), np.append(self.coeffs, value), self.dim)

    def _tables(self, x: np.ndarray):
        return [chebyshev_table(self.max_degree, x[:, l]) for l in range(self.dim)]

    def evaluate(self, x) -> np.ndarray:
        """Evaluate at points in ``[-1, 1]^dim`` with the three-term recurrence."""
        x = _as_points(x, self.dim)
        if (np.abs(x) > 1.0 + 1e-12).any():
            raise ValueError("Chebyshev polynomial evaluated outside [-1, 1]^d")
        x = np.clip(x, -1.0, 1.0)
        if not len(self.coeffs):
            return np.zeros(len(x))
        tables = self._tables(x)
        prod = np.ones((len(self.coeffs), len(x)))
        for l in range(self.dim):
            prod *= tables[l][self.freqs[:, l]]
        return self.coeffs @ prod

    def __call__(self, x):
        return self.evaluate(x)

    def gradient(self, x) -> np.ndarray:
        """Gradient with respect to ``x`` in ``[-1, 1]^dim``."""
        x = _as_points(x, self.dim)
        x = np.clip(x, -1.0, 1.0)
        grad = np.zeros_like(x)
        if not len(self.coeffs):
            return grad
        tables = self._tables(x)
        dtables = [
            chebyshev_derivative_table(self.max_degree, x[:, l], tables[l]) for l in range(self.dim)
        ]
        for k in range(self.dim):
            prod = np.ones((len(self.coeffs), len(x)))
            for l in range(self.dim):
                t = dtables[l] if l == k else tables[l]
                prod *= t[self.freqs[:, l]]
            grad[:, k] = self.coeffs @ prod
        return grad

    def evaluate_lifted(self, u) -> np.ndarray:
        """``h(cos 2 pi u)`` for torus points ``u``."""
        return self.evaluate(np.cos(TWO_PI * _as_points(u, self.dim)))

    def gradient_lifted(self, u) -> np.ndarray:
        u = _as_points(u, self.dim)
        return self.gradient(np.cos(TWO_PI * u)) * (-TWO_PI * np.sin(TWO_PI * u))

    def hilbert_norm_sq(self, weights) -> float:
        lam = weights(self.freqs)
        return float((self.coeffs**2 / lam).sum())

    def __repr__(self) -> str:
        return f"ChebPoly(dim={self.dim}, terms={len(self)})"


def lift_cheb_to_trig(h: ChebPoly) -> TrigPoly:
    """Rewrite ``h(cos 2 pi z)`` as a trigonometric polynomial in ``z``.

    Each ``H_k(cos 2 pi z) = (e^{2 pi i k z} + e^{-2 pi i k z}) / 2`` for
    ``k > 0``; a product over coordinates expands into all sign patterns of
    the nonzero entries, each weighted by ``2^-(number of nonzero entries)``.
    """
    out_f, out_c = [], []
    for w, a in zip(h.freqs.tolist(), h.coeffs.tolist()):
        nz = [l for l, v in enumerate(w) if v != 0]
        share = a * 0.5 ** len(nz)
        for mask in range(1 << len(nz)):
            f = list(w)
            for bit, l in enumerate(nz):
                if mask >> bit & 1:
                    f[l] = -f[l]
            out_f.append(f)
            out_c.append(share)
    freqs = np.array(out_f, dtype=np.int64).reshape(-1, h.dim)
    return TrigPoly(freqs, out_c, real=True, dim=h.dim)


class KernelMixture:
    """``h(x) = sum_i a_i prod_l exp(s_l (cos 2 pi (x_l - c_il) - 1))`` on the torus."""

    basis = "torus"

    def __init__(self, centers, weights, scale):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        self.weights = np.asarray(weights, dtype=np.float64).ravel()
        self.dim = self.centers.shape[1]
        self.scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (self.dim,)).copy()
        if len(self.weights) != len(self.centers):
            raise ValueError("one weight per center is required")
        if (self.scale <= 0).any():
            raise ValueError("kernel scale must be positive")

    def __len__(self) -> int:
        return len(self.weights)

    def kernel(self, x, y) -> np.ndarray:
        x = _as_points(x, self.dim)
        y = _as_points(y, self.dim)
        diff = x[:, None, :] - y[None, :, :]
        return np.exp((self.scale * (np.cos(TWO_PI * diff) - 1.0)).sum(-1))

    def evaluate(self, x) -> np.ndarray:
        return self.kernel(x, self.centers) @ self.weights

    def __call__(self, x):
        return self.evaluate(x)

    def gradient(self, x) -> np.ndarray:
        x = _as_points(x, self.dim)
        diff = x[:, None, :] - self.centers[None, :, :]
        k = self.kernel(x, self.centers) * self.weights
        return -(k[:, :, None] * self.scale * TWO_PI * np.sin(TWO_PI * diff)).sum(1)

    def gram(self) -> np.ndarray:
        return self.kernel(self.centers, self.centers)

    def rkhs_norm(self) -> float:
        """Norm in the RKHS of the mixture's own kernel."""
        return float(math.sqrt(max(self.weights @ self.gram() @ self.weights, 0.0)))

    def _weights_1d(self, l: int, max_order: int) -> np.ndarray:
        s = float(self.scale[l])
        return math.exp(-s) * np.array([bessel_i(k, s) for k in range(max_order + 1)])

    def coefficients(self, freqs) -> np.ndarray:
        freqs = _as_freqs(freqs, self.dim)
        out = np.zeros(len(freqs), dtype=np.complex128)
        if not len(freqs):
            return out
        amp = np.ones(len(freqs))
        for l in range(self.dim):
            table = self._weights_1d(l, int(np.abs(freqs[:, l]).max()))
            amp *= table[np.abs(freqs[:, l])]
        phase = np.exp(-1j * TWO_PI * (freqs @ self.centers.T))
        return amp * (phase @ self.weights)

    def lipschitz_constants(self) -> tuple[float, float]:
        """Same contract as :meth:`TrigPoly.lipschitz_constants`.

        Computed from the Fourier weights, summed until the tail is below
        double precision.
        """
        a = float(np.abs(self.weights).sum())
        m1 = np.zeros(self.dim)
        m2 = np.zeros(self.dim)
        for l in range(self.dim):
            w = self._weights_1d(l, 60)
            k = np.arange(61, dtype=np.float64)
            both = np.where(k > 0, 2.0, 1.0) * w
            m1[l] = (both * k).sum()
            m2[l] = (both * k * k).sum()
        first = m1.sum()
        second = m2.sum() + first**2 - (m1**2).sum()
        return TWO_PI * a * first, TWO_PI**2 * a * second

    def __repr__(self) -> str:
        return f"KernelMixture(dim={self.dim}, centers={len(self)})"
