"""Candidate search and model fitting.

``find_candidate`` runs multi-start gradient descent on the target.
``train_model`` fits a nonnegative model to ``f - c`` by minimizing a
log-sum-exp smoothing of the maximum residual over random batches, with
momentum and a cosine learning-rate schedule. The anchor Gram whitening is
held fixed inside each gradient step and refreshed after every update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .harmonic.spectra import TWO_PI, ChebPoly
from .model import KSoSModel, model_backward, model_forward

EPS_ABS = 1e-8
MAX_FAILURES = 10


# -- candidate ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CandidateResult:
    """Best point found by multi-start descent.

    ``point`` lives in the target's domain (cube coordinates for Chebyshev
    targets) and ``value`` is recomputed from the target at that point.
    """

    point: np.ndarray
    value: float
    n_starts: int
    final_values: np.ndarray


def _objective(f):
    """Value and gradient callables in the coordinates descent runs in."""
    if isinstance(f, ChebPoly):
        return f.evaluate_lifted, f.gradient_lifted, 0.5
    return f.evaluate, f.gradient, 1.0


def find_candidate(f, n_starts: int = 16, max_iters: int = 500, seed=None) -> CandidateResult:
    """Multi-start gradient descent with backtracking.

    Each iteration tries the step ``0.1 * grad`` and halves it until the
    value decreases. A start stops when its gradient norm drops below 1e-10,
    when no decrease is found, or after ``max_iters`` iterations.
    Chebyshev targets are optimized through ``x = cos 2 pi u``.
    """
    value, grad, period = _objective(f)
    rng = np.random.default_rng(seed)
    x = rng.random((n_starts, f.dim)) * period
    fx = value(x)
    active = np.ones(n_starts, dtype=bool)
    for _ in range(max_iters):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        g = grad(x[idx])
        gnorm = np.sqrt((g * g).sum(axis=1))
        done = gnorm < 1e-10
        active[idx[done]] = False
        idx, g = idx[~done], g[~done]
        step = np.full(len(idx), 0.1)
        pending = np.ones(len(idx), dtype=bool)
        for _ in range(60):
            if not pending.any():
                break
            trial = x[idx[pending]] - step[pending, None] * g[pending]
            ft = value(trial)
            better = ft < fx[idx[pending]]
            acc = np.flatnonzero(pending)[better]
            x[idx[acc]] = trial[better]
            fx[idx[acc]] = ft[better]
            pending[acc] = False
            step[pending] *= 0.5
        active[idx[pending]] = False
    if period == 1.0:
        x = np.mod(x, 1.0)
    best = int(np.argmin(fx))
    if isinstance(f, ChebPoly):
        point = np.cos(TWO_PI * x[best])
    else:
        point = x[best].copy()
    val = float(f.evaluate(point[None, :])[0])
    return CandidateResult(point, val, n_starts, fx.copy())


# -- loss -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LossResult:
    loss: float
    grad_positions: np.ndarray
    grad_factors: np.ndarray
    grad_c: float
    residuals: np.ndarray


def lse_loss(
    target_values: np.ndarray,
    c: float,
    g: KSoSModel,
    x: np.ndarray,
    temperature: float = 0.05,
    reg_weight: float = 0.0,
) -> LossResult:
    """Smoothed maximum residual and its gradients.

    ``loss = tau * log sum_j exp(rho_j / tau) + reg_weight * hs_reg_proxy``
    with ``rho_j = sqrt(e_j^2 + 1e-16)`` and ``e_j = f(x_j) - c - g(x_j)``.

    Parameters
    ----------
    target_values : ndarray, shape (n,)
        ``f(x_j)`` on the batch.
    c : float
    g : KSoSModel
    x : ndarray, shape (n, d)
        Batch in the model's domain.
    temperature : float
    reg_weight : float

    Returns
    -------
    LossResult
        Gradients are with respect to anchor positions (``u`` coordinates
        on the cube), factors and ``c``, holding the whitening fixed.
    """
    if len(x) == 0:
        raise ValueError("batch must be nonempty")
    values, cache = model_forward(g, x)
    e = target_values - c - values
    rho = np.sqrt(e * e + EPS_ABS * EPS_ABS)
    z = rho / temperature
    top = z.max()
    w = np.exp(z - top)
    total = w.sum()
    soft = w / total
    loss = temperature * (top + math.log(total))
    upstream = -soft * e / rho
    gz, gf = model_backward(g, x, upstream, cache)
    if reg_weight:
        # d/dR_j tr(N^2) = 4 R_j N with N = sum_j R_j^T R_j
        n = np.einsum("brs,brt->st", g.factors, g.factors)
        loss += reg_weight * g.hs_reg_proxy()
        gf = gf + reg_weight * 4.0 * np.einsum("brs,st->brt", g.factors, n)
    return LossResult(float(loss), gz, gf, float(upstream.sum()), e)


# -- training -------------------------------------------------------------


@dataclass
class TrainConfig:
    """Hyperparameters of :func:`train_model`.

    The defaults were tuned on planted-model instances (targets that are
    themselves models of the same shape).
    """

    epochs: int = 2000
    batch_size: int = 1024
    lr: float = 0.1
    final_lr: float = 1e-3
    momentum: float = 0.9
    temperature: float = 0.05
    reg_weight: float = 1e-6
    seed: int | None = 0
    blocks: int = 1
    block_size: int = 8
    rank: int = 2
    scale: float = 1.0
    factor_init: float = 0.1
    anchor_lr_scale: float = 1.0
    validation_size: int = 4096
    validate_every: int = 10
    learn_c: bool = False

    def __post_init__(self):
        for name in ("epochs", "batch_size", "blocks", "block_size", "rank", "validation_size", "validate_every"):
            setattr(self, name, int(getattr(self, name)))
        for name in ("batch_size", "blocks", "block_size", "rank", "validation_size", "validate_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("lr", "final_lr", "temperature", "scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0 or self.reg_weight < 0 or not 0 <= self.momentum < 1:
            raise ValueError("epochs and reg_weight must be nonnegative, momentum in [0, 1)")


@dataclass(eq=False)
class TrainResult:
    model: KSoSModel
    best_model: KSoSModel
    c: float
    best_c: float
    validation: float
    best_validation: float
    history: list = field(default_factory=list)


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


class _Parametrization:
    """Unconstrained anchor parameters mapped to model positions."""

    def __init__(self, basis: str):
        self.basis = basis

    def init(self, rng, shape):
        if self.basis == "torus":
            return rng.random(shape)
        u = rng.uniform(0.02, 0.48, shape)
        return np.log(2.0 * u / (1.0 - 2.0 * u))

    def positions(self, theta):
        if self.basis == "torus":
            return np.mod(theta, 1.0)
        return 0.5 * _sigmoid(theta)

    def chain(self, theta, grad_positions):
        if self.basis == "torus":
            return grad_positions
        sig = _sigmoid(theta)
        return grad_positions * 0.5 * sig * (1.0 - sig)

    def domain_batch(self, rng, n, dim):
        if self.basis == "torus":
            return rng.random((n, dim))
        return np.cos(TWO_PI * rng.uniform(0.0, 0.5, (n, dim)))


def train_model(f, c: float, config: TrainConfig | None = None, init: KSoSModel | None = None) -> TrainResult:
    """Fit a nonnegative model to ``f - c``.

    Parameters
    ----------
    f : target with ``evaluate``, ``dim`` and ``basis``
    c : float
        Offset; trained jointly only when ``config.learn_c`` is set.
    config : TrainConfig, optional
    init : KSoSModel, optional
        Starting model; by default anchors are uniform in the domain and
        factors gaussian times ``config.factor_init``.

    Returns
    -------
    TrainResult
        Final model plus the model with the smallest held-out maximum
        residual among those validated.
    """
    cfg = config or TrainConfig()
    basis = f.basis
    dim = f.dim
    param = _Parametrization(basis)
    root = np.random.SeedSequence(cfg.seed)
    init_seq, batch_seq, val_seq = root.spawn(3)
    init_rng = np.random.default_rng(init_seq)
    batch_rng = np.random.default_rng(batch_seq)
    val_rng = np.random.default_rng(val_seq)

    if init is not None:
        if basis == "torus":
            theta = init.positions.copy()
        else:
            u = np.clip(init.positions, 1e-6, 0.5 - 1e-6)
            theta = np.log(2.0 * u / (1.0 - 2.0 * u))
        factors = init.factors.copy()
        scale = init.scale.copy()
    else:
        theta = param.init(init_rng, (cfg.blocks, cfg.block_size, dim))
        factors = cfg.factor_init * init_rng.standard_normal((cfg.blocks, cfg.rank, cfg.block_size))
        scale = np.full(dim, cfg.scale)

    def whitened(model, fa):
        # whitened factors of ``fa`` under the model's current Cholesky factors
        return np.stack([solve_triangular(t, r.T, lower=False) for t, r in zip(model.whitening, fa)])

    def step_model(model, th, fa):
        # keep Rt = T^{-1} R^T fixed across the refresh of T
        return KSoSModel.from_whitened(param.positions(th), whitened(model, fa), scale, basis)

    x_val = param.domain_batch(val_rng, cfg.validation_size, dim)
    f_val = f.evaluate(x_val)

    def validate(model, cc):
        return float(np.abs(f_val - cc - model.evaluate(x_val)).max())

    model = KSoSModel(param.positions(theta), factors, scale, basis)
    cur_c = float(c)
    best = (validate(model, cur_c), model, cur_c)
    history = [(0, best[0])]
    vel_t = np.zeros_like(theta)
    vel_f = np.zeros_like(factors)
    vel_c = 0.0
    lr_scale = 1.0
    failures = 0
    saved = (theta, model, vel_t, vel_f, vel_c, cur_c)

    for epoch in range(cfg.epochs):
        frac = epoch / cfg.epochs
        lr = lr_scale * (cfg.final_lr + 0.5 * (cfg.lr - cfg.final_lr) * (1.0 + math.cos(math.pi * frac)))
        x = param.domain_batch(batch_rng, cfg.batch_size, dim)
        res = None
        with np.errstate(all="ignore"):
            try:
                res = lse_loss(f.evaluate(x), cur_c, model, x, cfg.temperature, cfg.reg_weight)
                new_t = theta - lr * cfg.anchor_lr_scale * (cfg.momentum * vel_t + param.chain(theta, res.grad_positions))
                new_f = model.factors - lr * (cfg.momentum * vel_f + res.grad_factors)
                new_model = step_model(model, new_t, new_f)
                # g(x) <= m * ||Rt||_F^2 since every kernel value is at most 1, so a
                # finite bound here keeps the next loss finite as well
                size = new_model.n_anchors * float(np.sum(new_model.whitened**2))
                finite = bool(np.isfinite(res.loss) and math.isfinite(size) and np.isfinite(new_t).all())
            except (np.linalg.LinAlgError, ValueError):
                finite = False
        if not finite:
            failures += 1
            if failures >= MAX_FAILURES:
                raise RuntimeError("training diverged: too many consecutive non-finite losses")
            lr_scale *= 0.5
            theta, model, vel_t, vel_f, vel_c, cur_c = saved
            continue
        failures = 0
        saved = (theta, model, vel_t, vel_f, vel_c, cur_c)

        vel_t = cfg.momentum * vel_t + param.chain(theta, res.grad_positions)
        vel_f = cfg.momentum * vel_f + res.grad_factors
        theta, model = new_t, new_model
        if cfg.learn_c:
            vel_c = cfg.momentum * vel_c + res.grad_c
            cur_c -= lr * vel_c

        if (epoch + 1) % cfg.validate_every == 0 or epoch + 1 == cfg.epochs:
            score = validate(model, cur_c)
            history.append((epoch + 1, score))
            if score < best[0]:
                best = (score, model, cur_c)

    final = model
    final_score = validate(final, cur_c)
    if final_score < best[0]:
        best = (final_score, final, cur_c)
    return TrainResult(final, best[1], cur_c, best[2], final_score, best[0], history)
