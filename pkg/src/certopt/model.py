"""Block-diagonal kernel sum-of-squares model on the torus or the cube.

The model is

    g(x) = sum_i || Rt_i^T k_i(x) ||^2,    Rt_i = T_i^{-1} R_i^T,

where ``k_i(x)`` collects the kernel values between ``x`` and the anchors of
block ``i``, ``R_i`` is an ``r x s_blk`` factor and ``T_i`` the upper
Cholesky factor of the anchor Gram matrix. The per-dimension kernel is the
Bessel kernel ``exp(s (cos 2 pi t - 1))`` on the torus and its even
symmetrization ``(q(u + v) + q(u - v)) / 2`` on the cube, where a cube point
``x`` is identified with ``u`` through ``x = cos 2 pi u``.

Because the kernel has scale ``s``, ``g`` lives in the RKHS with spectral
weights ``prod_l e^{-2 s_l} I_{|w_l|}(2 s_l)``.
"""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np
from scipy.linalg import solve_triangular

from ._backend import contract
from .harmonic.bessel import bessel_i_table
from .harmonic.spectra import TWO_PI, _as_freqs, _as_points, chebyshev_table

BASES = ("torus", "chebychev")

JITTER = 1e-10
JITTER_RETRIES = 3

# Closed-form spectra sum pair weights of size |Rt|^2, which reaches ~1e9 for
# clustered anchors; per-pair rounding in double precision would then cost
# about 1e-7 relative accuracy, so the tables and weights use long double.
EXT = np.longdouble
PI_EXT = np.arccos(EXT(-1))


# -- kernels --------------------------------------------------------------


def torus_kernel(x: np.ndarray, z: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """``K[n, a] = prod_l exp(s_l (cos 2 pi (x_nl - z_al) - 1))``."""
    cx, sx = np.cos(TWO_PI * x), np.sin(TWO_PI * x)
    cz, sz = np.cos(TWO_PI * z), np.sin(TWO_PI * z)
    expo = (cx * scale) @ cz.T + (sx * scale) @ sz.T - scale.sum()
    return np.exp(np.minimum(expo, 0.0))


def _cheb_parts(x: np.ndarray, v: np.ndarray, scale: np.ndarray):
    """Per-dimension pieces of the cube kernel between points and anchors.

    ``x`` holds cube coordinates; ``v`` anchor positions in ``u`` space.
    Returns ``q(t + v)`` and ``q(t - v)`` with ``cos 2 pi t = x``, plus the
    cosines and sines needed for derivatives, each of shape ``(n, m, dim)``.
    """
    a = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    y, b = np.cos(TWO_PI * v), np.sin(TWO_PI * v)
    xy = x[:, None, :] * y[None, :, :]
    ab = a[:, None, :] * b[None, :, :]
    q_plus = np.exp(scale * (xy - ab - 1.0))
    q_minus = np.exp(scale * (xy + ab - 1.0))
    return q_plus, q_minus, a, y, b


def cheb_kernel(x: np.ndarray, v: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Cube kernel between points ``x`` in ``[-1, 1]^d`` and anchors at ``u = v``."""
    q_plus, q_minus, *_ = _cheb_parts(x, v, scale)
    return np.prod(0.5 * (q_plus + q_minus), axis=-1)


def cheb_kernel_lifted(u: np.ndarray, v: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Same kernel with both arguments given in ``u`` coordinates."""
    diff_p = u[:, None, :] + v[None, :, :]
    diff_m = u[:, None, :] - v[None, :, :]
    per_dim = 0.5 * (
        np.exp(scale * (np.cos(TWO_PI * diff_p) - 1.0))
        + np.exp(scale * (np.cos(TWO_PI * diff_m) - 1.0))
    )
    return np.prod(per_dim, axis=-1)


def _whiten(gram: np.ndarray) -> np.ndarray:
    """Upper Cholesky factor of ``gram`` plus a relative diagonal jitter."""
    size = gram.shape[0]
    jitter = JITTER * np.trace(gram) / size
    for _ in range(JITTER_RETRIES + 1):
        try:
            lower = np.linalg.cholesky(gram + jitter * np.eye(size))
            return lower.T.copy()
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError("anchor Gram matrix is not positive definite")


# -- Bessel-cosine expansion ----------------------------------------------


def fourier_bessel_cos_coeff(omega: int, n: int, s: float) -> float:
    """Fourier coefficient ``q_{w,n}`` of ``t -> e^{-2s} I_w(2 s cos 2 pi t)``.

    The expansion is ``sum_n q_{w,n} e^{2 pi i n t}``. Coefficients vanish
    when ``n`` and ``w`` have different parity and are even in ``n``.
    """
    omega, n = abs(int(omega)), abs(int(n))
    if (n - omega) % 2:
        return 0.0
    j = (n - omega) // 2
    log_half = math.log(0.5 * s)
    terms = []
    p = max(0, j)
    while True:
        m = 2 * p + omega
        log_t = (
            m * log_half
            - math.lgamma(p + 1)
            - math.lgamma(p + omega + 1)
            + math.lgamma(m + 1)
            - math.lgamma(p - j + 1)
            - math.lgamma(m - p + j + 1)
        )
        t = math.exp(log_t)
        terms.append(t)
        # terms eventually decay factorially; stop once negligible
        if p > max(0, j) + 4 and t < 1e-18 * max(terms):
            break
        p += 1
        if p > max(0, j) + 400:
            break
    return math.exp(-2.0 * s) * math.fsum(terms)


def hyperbolic_cross(dim: int, order: int) -> np.ndarray:
    """All ``k`` in ``Z^dim`` with ``prod_l max(1, |k_l|) <= order``."""
    if order < 1:
        raise ValueError("hyperbolic cross order must be >= 1")

    def rec(left: int, budget: int) -> Iterator[tuple]:
        if left == 0:
            yield ()
            return
        for k in range(-budget, budget + 1):
            for rest in rec(left - 1, budget // max(1, abs(k))):
                yield (k,) + rest

    return np.array(list(rec(dim, order)), dtype=np.int64).reshape(-1, dim)


# -- the model ------------------------------------------------------------


class KSoSModel:
    """Block-diagonal nonnegative kernel model.

    Parameters
    ----------
    positions : array_like, shape (b, s_blk, d)
        Anchors. Torus anchors are wrapped to ``[0, 1)``; cube anchors are
        ``u`` coordinates in ``[0, 1/2]`` (the cube point is ``cos 2 pi u``).
    factors : array_like, shape (b, r, s_blk)
        Factor ``R_i`` of each block.
    scale : float or array_like, shape (d,)
        Per-dimension kernel scale ``s_l > 0``.
    basis : {"torus", "chebychev"}
    whitening : array_like, shape (b, s_blk, s_blk), optional
        Precomputed upper Cholesky factors. When omitted they are computed
        from the anchor Gram matrices with a small diagonal jitter.
    """

    def __init__(self, positions, factors, scale, basis: str = "torus", whitening=None):
        if basis not in BASES:
            raise ValueError(f"basis must be one of {BASES}")
        pos = np.asarray(positions, dtype=np.float64)
        fac = np.asarray(factors, dtype=np.float64)
        if pos.ndim != 3 or fac.ndim != 3:
            raise ValueError("positions must be (b, s_blk, d) and factors (b, r, s_blk)")
        if fac.shape[0] != pos.shape[0] or fac.shape[2] != pos.shape[1]:
            raise ValueError("factors and positions disagree on block layout")
        self.basis = basis
        self.dim = pos.shape[2]
        self.scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (self.dim,)).copy()
        if (self.scale <= 0).any() or not np.isfinite(self.scale).all():
            raise ValueError("kernel scale must be positive and finite")
        if basis == "torus":
            pos = np.mod(pos, 1.0)
        elif pos.size and (pos.min() < 0.0 or pos.max() > 0.5):
            raise ValueError("cube anchors must be u coordinates in [0, 1/2]")
        self.positions = pos
        self.factors = fac
        if whitening is None:
            whitening = np.stack([_whiten(k) for k in self._block_grams()]) if len(pos) else np.zeros((0, 0, 0))
        self.whitening = np.asarray(whitening, dtype=np.float64)
        # Rt_i = T_i^{-1} R_i^T, shape (b, s_blk, r)
        self.whitened = np.stack(
            [solve_triangular(t, r.T, lower=False) for t, r in zip(self.whitening, fac)]
        ) if len(pos) else np.zeros((0, pos.shape[1], fac.shape[1]))

    @classmethod
    def from_dense(cls, anchors, factor, scale, basis: str = "torus") -> "KSoSModel":
        """Single-block model from ``m`` anchors and an ``r x m`` factor."""
        anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
        factor = np.atleast_2d(np.asarray(factor, dtype=np.float64))
        return cls(anchors[None], factor[None], scale, basis)

    @classmethod
    def from_whitened(cls, positions, whitened, scale, basis: str = "torus") -> "KSoSModel":
        """Model with given anchors and whitened factors ``Rt_i`` (``s_blk x r``).

        The whitening is computed for the new anchors and the factors are
        re-expressed as ``R_i = (T_i Rt_i)^T`` so the function is exactly the
        one described by ``Rt``.
        """
        probe = cls(positions, np.zeros((len(whitened), np.shape(whitened)[2], np.shape(whitened)[1])), scale, basis)
        factors = np.einsum("bst,btr->brs", probe.whitening, whitened)
        return cls(probe.positions, factors, scale, basis, whitening=probe.whitening)

    # -- shape ------------------------------------------------------------

    @property
    def n_blocks(self) -> int:
        return self.positions.shape[0]

    @property
    def block_size(self) -> int:
        return self.positions.shape[1]

    @property
    def rank(self) -> int:
        return self.factors.shape[1]

    @property
    def n_anchors(self) -> int:
        return self.n_blocks * self.block_size

    @property
    def n_params(self) -> int:
        return (self.rank + self.dim) * self.n_anchors

    def shape(self) -> dict:
        return {"blocks": self.n_blocks, "block_size": self.block_size, "rank": self.rank}

    # -- kernel helpers ---------------------------------------------------

    def _anchors(self) -> np.ndarray:
        return self.positions.reshape(-1, self.dim)

    def anchor_gram(self) -> np.ndarray:
        """Kernel Gram matrix over all ``m`` anchors, without jitter."""
        z = self._anchors()
        if self.basis == "torus":
            return torus_kernel(z, z, self.scale)
        return cheb_kernel_lifted(z, z, self.scale)

    def _block_grams(self) -> list:
        if self.basis == "torus":
            return [torus_kernel(z, z, self.scale) for z in self.positions]
        return [cheb_kernel_lifted(z, z, self.scale) for z in self.positions]

    def features(self, x) -> np.ndarray:
        """Kernel values between points and all anchors, shape ``(n, m)``."""
        x = _as_points(x, self.dim)
        if self.basis == "torus":
            return torus_kernel(x, self._anchors(), self.scale)
        if np.abs(x).max(initial=0.0) > 1.0 + 1e-12:
            raise ValueError("cube points must lie in [-1, 1]^d")
        return cheb_kernel(np.clip(x, -1.0, 1.0), self._anchors(), self.scale)

    def coefficient_matrix(self) -> np.ndarray:
        """Dense block-diagonal ``G`` over all anchors (``m x m``)."""
        m, s = self.n_anchors, self.block_size
        out = np.zeros((m, m))
        for i, rt in enumerate(self.whitened):
            out[i * s:(i + 1) * s, i * s:(i + 1) * s] = rt @ rt.T
        return out

    # -- evaluation -------------------------------------------------------

    def evaluate(self, x) -> np.ndarray:
        """Model values at points of shape ``(n, d)``; nonnegative by construction."""
        feats = self.features(x).reshape(-1, self.n_blocks, self.block_size)
        y = np.einsum("nbs,bsr->nbr", feats, self.whitened)
        return (y * y).sum(axis=(1, 2))

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate_lifted(self, u) -> np.ndarray:
        """Cube model evaluated at ``cos 2 pi u``."""
        if self.basis != "chebychev":
            raise ValueError("lifted evaluation only applies to the cube basis")
        return self.evaluate(np.cos(TWO_PI * _as_points(u, self.dim)))

    # -- spectra ----------------------------------------------------------

    def _pairs(self):
        """Upper-triangular anchor pairs of every block with their weights.

        Positions and weights are returned in extended precision.
        """
        s = self.block_size
        ia, ib = np.triu_indices(s)
        mult = np.where(ia == ib, 1.0, 2.0).astype(EXT)
        za, zb, w = [], [], []
        for pos, rt in zip(self.positions.astype(EXT), self.whitened.astype(EXT)):
            g = rt @ rt.T
            za.append(pos[ia])
            zb.append(pos[ib])
            w.append(g[ia, ib] * mult)
        if not za:
            empty = np.zeros((0, self.dim), dtype=EXT)
            return empty, empty, np.zeros(0, dtype=EXT)
        return np.concatenate(za), np.concatenate(zb), np.concatenate(w)

    def fourier_coefficients(self, freqs) -> np.ndarray:
        """Exact torus Fourier coefficients at each row of ``freqs``.

        Each coefficient is a sum over anchor pairs of products of
        per-dimension Bessel terms; the per-dimension tables are shared
        across all requested frequencies.
        """
        if self.basis != "torus":
            raise ValueError("Fourier coefficients require the torus basis")
        freqs = _as_freqs(freqs, self.dim)
        za, zb, w = self._pairs()
        if not len(freqs) or not len(w):
            return np.zeros(len(freqs), dtype=np.complex128)
        top = np.abs(freqs).max(axis=0)
        width = int(top.max())
        tables = np.zeros((self.dim, 2 * width + 1, len(w)), dtype=np.clongdouble)
        for l in range(self.dim):
            s = EXT(self.scale[l])
            k = int(top[l])
            amp = np.exp(-2 * s) * bessel_i_table(k, 2 * s * np.cos(PI_EXT * (za[:, l] - zb[:, l])), EXT)
            orders = np.arange(k + 1, dtype=EXT)[:, None]
            phase = PI_EXT * orders * (za[:, l] + zb[:, l])[None, :]
            pos_half = amp * (np.cos(phase) - 1j * np.sin(phase))
            tables[l, width:width + k + 1] = pos_half
            # negative orders are the exact conjugates, so ghat(-w) = conj(ghat(w))
            tables[l, width - k:width][::-1] = np.conj(pos_half[1:])
        return contract(tables, freqs + width, w)

    def fourier_coefficient(self, freq) -> complex:
        return complex(self.fourier_coefficients(np.asarray(freq).reshape(1, -1))[0])

    def cheb_coefficients(self, freqs) -> np.ndarray:
        """Exact Chebyshev coefficients at nonnegative frequencies."""
        if self.basis != "chebychev":
            raise ValueError("Chebyshev coefficients require the cube basis")
        freqs = _as_freqs(freqs, self.dim)
        if (freqs < 0).any():
            raise ValueError("Chebyshev frequencies must be nonnegative")
        za, zb, w = self._pairs()
        if not len(freqs) or not len(w):
            return np.zeros(len(freqs))
        top = freqs.max(axis=0)
        width = int(top.max())
        tables = np.zeros((self.dim, width + 1, len(w)), dtype=EXT)
        for l in range(self.dim):
            s = EXT(self.scale[l])
            k = int(top[l])
            sig_p = np.cos(PI_EXT * (za[:, l] + zb[:, l]))
            sig_m = np.cos(PI_EXT * (za[:, l] - zb[:, l]))
            tab = (
                bessel_i_table(k, 2 * s * sig_m, EXT) * chebyshev_table(k, sig_p, EXT)
                + bessel_i_table(k, 2 * s * sig_p, EXT) * chebyshev_table(k, sig_m, EXT)
            )
            doubling = np.where(np.arange(k + 1) > 0, 2, 1).astype(EXT)[:, None]
            tables[l, :k + 1] = doubling * (np.exp(-2 * s) / 2) * tab
        return contract(tables, freqs, w)

    def coefficients(self, freqs) -> np.ndarray:
        """Spectral coefficients in the model's own basis."""
        if self.basis == "torus":
            return self.fourier_coefficients(freqs)
        return self.cheb_coefficients(freqs)

    def fourier_coefficients_linear(self, freqs, hc_order: int) -> np.ndarray:
        """Torus coefficients through the Bessel-cosine embedding.

        Cost is linear in the number of anchors. The inner sum over the
        embedding index is truncated to the hyperbolic cross of order
        ``hc_order``, so the result is an approximation.
        """
        if self.basis != "torus":
            raise ValueError("Fourier coefficients require the torus basis")
        freqs = _as_freqs(freqs, self.dim)
        cross = hyperbolic_cross(self.dim, hc_order)
        out = np.zeros(len(freqs), dtype=np.complex128)
        cache: dict = {}

        def sqrt_q(l: int, w: int) -> np.ndarray:
            key = (l, abs(w))
            if key not in cache:
                s = float(self.scale[l])
                cache[key] = np.sqrt([fourier_bessel_cos_coeff(w, n, s) for n in cross[:, l]])
            return cache[key]

        cross_f = cross.astype(np.float64)
        for f, w in enumerate(freqs):
            amp = np.ones(len(cross))
            for l in range(self.dim):
                amp = amp * sqrt_q(l, int(w[l]))
            keep = amp > 0
            if not keep.any():
                continue
            n = cross_f[keep]
            a = amp[keep]
            total = 0.0 + 0.0j
            for pos, rt in zip(self.positions, self.whitened):
                left = a[:, None] * np.exp(1j * np.pi * ((n - w) @ pos.T))
                right = a[:, None] * np.exp(-1j * np.pi * ((n + w) @ pos.T))
                total += np.sum((left @ rt) * (right @ rt))
            out[f] = total
        return out

    # -- norms ------------------------------------------------------------

    def hs_norm_bound(self) -> float:
        """Hilbert-Schmidt bound on the model's RKHS norm.

        Returns ``sqrt(sum_{j,k} ||Rt_j^T Q_jk Rt_k||_F^2)`` with ``Q_jk`` the
        exact (unjittered) kernel Gram between blocks ``j`` and ``k``.
        """
        if not self.n_blocks:
            return 0.0
        b, s = self.n_blocks, self.block_size
        q = self.anchor_gram().reshape(b, s, b, s)
        cross = np.einsum("jar,jakc,kct->jkrt", self.whitened, q, self.whitened, optimize=True)
        return float(math.sqrt(max(float((cross * cross).sum()), 0.0)))

    def hs_reg_proxy(self) -> float:
        """``sum_{j,k} ||R_j R_k^T||_F^2`` (factors stored as ``r x s_blk``).

        This is the Hilbert-Schmidt bound with every kernel matrix and every
        whitening replaced by the identity; a cheap stand-in used only as a
        training regularizer. Equals ``tr(N^2)`` with ``N = sum_j R_j^T R_j``.
        """
        n = np.einsum("brs,brt->st", self.factors, self.factors)
        return float((n * n).sum())

    def __repr__(self) -> str:
        return (
            f"KSoSModel(basis={self.basis!r}, dim={self.dim}, blocks={self.n_blocks}, "
            f"block_size={self.block_size}, rank={self.rank})"
        )


# -- gradients used by the trainer ----------------------------------------


def model_forward(model: KSoSModel, x: np.ndarray):
    """Model values at ``x`` plus the intermediates :func:`model_backward` reuses."""
    x = _as_points(x, model.dim)
    b, s = model.n_blocks, model.block_size
    z = model._anchors()
    cache = {"x": x}
    if model.basis == "torus":
        feats = torus_kernel(x, z, model.scale)
    else:
        q_plus, q_minus, a, y, sb = _cheb_parts(x, z, model.scale)
        per_dim = 0.5 * (q_plus + q_minus)
        feats = np.prod(per_dim, axis=-1)
        cache.update(q_plus=q_plus, q_minus=q_minus, a=a, y=y, sb=sb, per_dim=per_dim)
    kb = feats.reshape(-1, b, s)
    # P_i = K_i T_i^{-1}, Y_i = P_i R_i^T = K_i Rt_i
    proj = np.stack(
        [solve_triangular(t, kb[:, i].T, lower=False, trans="T").T for i, t in enumerate(model.whitening)],
        axis=1,
    )
    y_out = np.einsum("nbs,brs->nbr", proj, model.factors)
    cache.update(feats=feats, proj=proj, y_out=y_out)
    return (y_out * y_out).sum(axis=(1, 2)), cache


def model_backward(model: KSoSModel, x: np.ndarray, upstream: np.ndarray, cache: dict | None = None):
    """Gradients of ``sum_n upstream[n] * g(x_n)`` with whitening held fixed.

    Returns
    -------
    grad_positions : ndarray, shape (b, s_blk, d)
        With respect to anchor positions (``u`` coordinates on the cube).
    grad_factors : ndarray, shape (b, r, s_blk)
    """
    if cache is None:
        _, cache = model_forward(model, x)
    x = cache["x"]
    b, s, d = model.n_blocks, model.block_size, model.dim
    z = model._anchors()
    scale = model.scale
    feats, proj, y_out = cache["feats"], cache["proj"], cache["y_out"]

    wy = upstream[:, None, None] * y_out
    grad_factors = 2.0 * np.einsum("nbr,nbs->brs", wy, proj)
    grad_feats = 2.0 * np.einsum("nbr,bsr->nbs", wy, model.whitened).reshape(-1, b * s)
    e = grad_feats * feats

    if model.basis == "torus":
        cx, sx = np.cos(TWO_PI * x), np.sin(TWO_PI * x)
        cz, sz = np.cos(TWO_PI * z), np.sin(TWO_PI * z)
        grad_z = TWO_PI * scale * (cz * (e.T @ sx) - sz * (e.T @ cx))
    else:
        xx = x[:, None, :]
        aa = cache["a"][:, None, :]
        yy, bb = cache["y"][None, :, :], cache["sb"][None, :, :]
        sin_plus = aa * yy + xx * bb
        sin_minus = aa * yy - xx * bb
        dper = 0.5 * TWO_PI * scale * (sin_minus * cache["q_minus"] - sin_plus * cache["q_plus"])
        grad_z = np.einsum("nm,nmd->md", e, dper / cache["per_dim"])
    return grad_z.reshape(b, s, d), grad_factors
