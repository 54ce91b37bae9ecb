"""Elastic gradient descent: update directions in five flavors and the solver.

The update direction keeps only coordinates whose absolute gradient is at
least alpha times the largest one, and blends an l1-normalized with an
l2-normalized step. Flavors:

  * steepest (unscaled / scaled): unit-cost directions in the steepest
    descent framework; the scaled variant multiplies by c_alpha(q1) so that
    the blended cost h_alpha of the step is exactly 1.
  * stagewise (unscaled / scaled): the step size eps is folded into the
    direction; the scaled variant achieves h_alpha = eps exactly.
  * unnormalized: -(alpha*sgn + (1-alpha)*id) applied to the masked gradient;
    this is the variant whose small-step limit matches ridge-style shrinkage
    and is the default for elastic-net comparisons.

sgn(0) := 0 throughout, and argmax ties break toward the lowest index.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .data import Dataset, gradient_at
from .errors import AllZeroGradient, NonFiniteIterate


class Flavor(enum.IntEnum):
    STEEPEST_UNSCALED = 0
    STEEPEST_SCALED = 1
    STAGEWISE_UNSCALED = 2
    STAGEWISE_SCALED = 3
    UNNORMALIZED = 4

    @classmethod
    def parse(cls, name: str) -> "Flavor":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "steepest": cls.STEEPEST_UNSCALED,
            "steepest_scaled": cls.STEEPEST_SCALED,
            "stagewise": cls.STAGEWISE_UNSCALED,
            "stagewise_scaled": cls.STAGEWISE_SCALED,
            "unnormalized": cls.UNNORMALIZED,
            "steepest_unscaled": cls.STEEPEST_UNSCALED,
            "stagewise_unscaled": cls.STAGEWISE_UNSCALED,
        }
        if key not in aliases:
            raise ValueError(f"unknown flavor {name!r}")
        return aliases[key]


STAGEWISE_FLAVORS = (Flavor.STAGEWISE_UNSCALED, Flavor.STAGEWISE_SCALED)


@dataclass(frozen=True)
class DescentConfig:
    """Solver settings. step is the time increment (eps for stagewise flavors).

    tol is an absolute threshold on the sup-norm of the gradient; None means
    1e-6 times the initial gradient sup-norm.
    """

    alpha: float
    step: float = 0.01
    flavor: Flavor = Flavor.UNNORMALIZED
    tol: float | None = None
    max_steps: int = 10**6
    sample_every: int = 1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.step <= 0 or (self.tol is not None and self.tol <= 0):
            raise ValueError("step and tol must be positive")


@dataclass(frozen=True)
class DirectionResult:
    """One update direction with its active-set diagnostics."""

    dx: np.ndarray
    mask: np.ndarray
    p1: int
    q1: float
    m: int
    h_alpha_value: float
    scale: float


@dataclass(frozen=True)
class SolutionPath:
    """Samples (t, beta, gradient) recorded along one solver run."""

    t: np.ndarray
    beta: np.ndarray
    grad: np.ndarray
    converged: bool
    flavor: Flavor
    config: DescentConfig

    @property
    def l1(self) -> np.ndarray:
        return np.abs(self.beta).sum(axis=1)

    def beta_at(self, t: float | np.ndarray) -> np.ndarray:
        """Linear interpolation of the recorded samples in t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.shape[0], self.beta.shape[1]))
        for j in range(self.beta.shape[1]):
            out[:, j] = np.interp(t, self.t, self.beta[:, j])
        return out if out.shape[0] > 1 else out[0]


# ---------------------------------------------------------------------------
# Scalar pieces
# ---------------------------------------------------------------------------
def h_alpha(v: np.ndarray, alpha: float) -> float:
    """Blended step cost alpha*||v||_1 + (1-alpha)*||v||_2^2."""
    v = np.asarray(v, dtype=float)
    return float(alpha * np.abs(v).sum() + (1.0 - alpha) * v @ v)


@njit(cache=True)
def c_alpha(q1: float, alpha: float) -> float:
    """Scale that makes the steepest-flavor direction satisfy h_alpha = 1.

    At alpha = 1 the closed form is 0/0; the analytical limit is 1 (the
    single-coordinate direction already has unit cost). The naive expression
    (sqrt(q1*(a^2 q1 + 4(1-a))) - a q1) / (2(1-a)(sqrt(q1)(1-a) + a))
    cancels catastrophically near the endpoints; multiplying numerator and
    denominator by the conjugate removes both subtractions.
    """
    if alpha <= 0.0 or alpha >= 1.0:
        return 1.0
    x = q1 * (alpha * alpha * q1 + 4.0 * (1.0 - alpha))
    return 2.0 * q1 / ((math.sqrt(x) + alpha * q1)
                       * (math.sqrt(q1) * (1.0 - alpha) + alpha))


@njit(cache=True)
def c_alpha_eps(q1: float, alpha: float, eps: float) -> float:
    """Scale making the stagewise direction satisfy h_alpha = eps.

    Endpoints alpha in {0, 1} are analytical limits: the unscaled stagewise
    direction already has cost eps there, so the scale is 1.
    """
    if alpha <= 0.0 or alpha >= 1.0:
        return 1.0
    # conjugate form of
    #   ((sqrt(2a*sqrt(q1(a^2 q1 + 4 eps (1-a))) + q1((1-a)^3 - 2a^2))
    #     - (1-a)*sqrt(q1(1-a))) / (a*sqrt(4 eps (1-a))))^2
    # which is 0/0-unstable at both alpha endpoints
    u = 1.0 - alpha
    sx = math.sqrt(q1 * (alpha * alpha * q1 + 4.0 * eps * u))
    diff = 4.0 * eps * u * q1 / (sx + alpha * q1)  # = sqrt(x) - a*q1
    inner = 2.0 * alpha * diff + q1 * u ** 3
    ratio = (4.0 * q1 * math.sqrt(eps * u)
             / ((sx + alpha * q1) * (math.sqrt(inner) + u * math.sqrt(q1 * u))))
    return ratio * ratio


def h_alpha_bounds(p1: int, alpha: float, eps: float = 1.0,
                   stagewise: bool = False) -> tuple[float, float]:
    """Deviation bounds on h_alpha of the unscaled directions.

    Steepest: 1 - a(1-a)(2-a)(1 - 1/p1) <= h <= 1 + a(1-a)(sqrt(p1) - 1).
    Stagewise (eps <= 1): the same with 1/p1 -> eps/p1, sqrt(p1) -> sqrt(p1/eps),
    both scaled by eps.
    """
    a = alpha
    if stagewise:
        if eps > 1.0:
            raise ValueError("stagewise bounds require eps <= 1")
        lower = eps * (1.0 - a * (1.0 - a) * (2.0 - a) * (1.0 - eps / p1))
        upper = eps * (1.0 + a * (1.0 - a) * (math.sqrt(p1 / eps) - 1.0))
    else:
        lower = 1.0 - a * (1.0 - a) * (2.0 - a) * (1.0 - 1.0 / p1)
        upper = 1.0 + a * (1.0 - a) * (math.sqrt(p1) - 1.0)
    return lower, upper


def select_active(g: np.ndarray, alpha: float) -> tuple[np.ndarray, int]:
    """Mask of coordinates with |g_d| >= alpha*|g_m| and the argmax index m."""
    g = np.asarray(g, dtype=float)
    a = np.abs(g)
    m = int(np.argmax(a))  # ties break to the lowest index
    if a[m] == 0.0:
        raise AllZeroGradient("gradient is identically zero")
    return a >= alpha * a[m], m


# ---------------------------------------------------------------------------
# Direction dispatch
# ---------------------------------------------------------------------------
compute_gradient = gradient_at


def direction(g: np.ndarray, cfg: DescentConfig) -> DirectionResult:
    """Update direction for one step, per the configured flavor."""
    g = np.asarray(g, dtype=float)
    mask, m = select_active(g, cfg.alpha)
    gm = np.where(mask, g, 0.0)
    l1 = np.abs(gm).sum()
    l2 = float(np.sqrt(gm @ gm))
    q1 = (l1 / l2) ** 2
    p1 = int(mask.sum())
    scale = 1.0
    eps = cfg.step
    fl = cfg.flavor
    if fl == Flavor.STEEPEST_UNSCALED:
        dx = -gm * (cfg.alpha / l1 + (1.0 - cfg.alpha) / l2)
    elif fl == Flavor.STEEPEST_SCALED:
        scale = c_alpha(q1, cfg.alpha)
        dx = -scale * gm * (cfg.alpha / l1 + (1.0 - cfg.alpha) / l2)
    elif fl == Flavor.STAGEWISE_UNSCALED:
        dx = -gm * (cfg.alpha * eps / l1 + (1.0 - cfg.alpha) * math.sqrt(eps) / l2)
    elif fl == Flavor.STAGEWISE_SCALED:
        scale = c_alpha_eps(q1, cfg.alpha, eps)
        dx = -gm * (cfg.alpha * scale * eps / l1
                    + (1.0 - cfg.alpha) * math.sqrt(scale * eps) / l2)
    elif fl == Flavor.UNNORMALIZED:
        dx = -(cfg.alpha * np.sign(gm) + (1.0 - cfg.alpha) * gm)
    else:  # pragma: no cover
        raise ValueError(f"unknown flavor {fl}")
    return DirectionResult(dx=dx, mask=mask, p1=p1, q1=q1, m=m,
                           h_alpha_value=h_alpha(dx, cfg.alpha), scale=scale)


# ---------------------------------------------------------------------------
# Solver loop (hot path, jitted)
# ---------------------------------------------------------------------------
@njit(cache=True)
def _descent_loop(cov, covy, beta0, alpha, step, flavor, tol, max_steps, sample_every):
    p = beta0.shape[0]
    nbuf = max_steps // sample_every + 3
    ts = np.empty(nbuf)
    betas = np.empty((nbuf, p))
    grads = np.empty((nbuf, p))
    beta = beta0.copy()
    n_rec = 0
    status = 0  # 0: max_steps, 1: converged, 2: non-finite iterate
    k = 0
    while True:
        g = cov @ beta - covy
        gmax = 0.0
        for d in range(p):
            a = abs(g[d])
            if a > gmax:
                gmax = a
        done = gmax < tol or k >= max_steps or not np.isfinite(gmax)
        if k % sample_every == 0 or done:
            ts[n_rec] = k * step
            betas[n_rec] = beta
            grads[n_rec] = g
            n_rec += 1
        if done:
            if not np.isfinite(gmax):
                status = 2
            elif gmax < tol:
                status = 1
            break

        # masked gradient norms
        thr = alpha * gmax
        l1 = 0.0
        l2sq = 0.0
        for d in range(p):
            a = abs(g[d])
            if a >= thr:
                l1 += a
                l2sq += a * a
        l2 = math.sqrt(l2sq)
        q1 = (l1 / l2) ** 2

        if flavor == 0 or flavor == 1:
            c = c_alpha(q1, alpha) if flavor == 1 else 1.0
            coef = step * c * (alpha / l1 + (1.0 - alpha) / l2)
            for d in range(p):
                if abs(g[d]) >= thr:
                    beta[d] -= coef * g[d]
        elif flavor == 2 or flavor == 3:
            c = c_alpha_eps(q1, alpha, step) if flavor == 3 else 1.0
            coef = alpha * c * step / l1 + (1.0 - alpha) * math.sqrt(c * step) / l2
            for d in range(p):
                if abs(g[d]) >= thr:
                    beta[d] -= coef * g[d]
        else:  # unnormalized
            for d in range(p):
                if abs(g[d]) >= thr:
                    s = 0.0
                    if g[d] > 0.0:
                        s = 1.0
                    elif g[d] < 0.0:
                        s = -1.0
                    beta[d] -= step * (alpha * s + (1.0 - alpha) * g[d])
        k += 1
    return ts[:n_rec], betas[:n_rec], grads[:n_rec], status


def run_descent(data: Dataset, cfg: DescentConfig,
                beta0: np.ndarray | None = None) -> SolutionPath:
    """Iterate the configured flavor from beta0 (default 0) on linear least squares.

    Stops when the gradient sup-norm drops below tol or after max_steps.
    Every sample_every-th iterate is recorded, plus the final one.
    """
    beta0 = np.zeros(data.p) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    if not np.all(np.isfinite(beta0)):
        raise NonFiniteIterate("beta0 is not finite")
    g0 = gradient_at(data, beta0)
    tol = cfg.tol if cfg.tol is not None else 1e-6 * float(np.max(np.abs(g0)))
    ts, betas, grads, status = _descent_loop(
        data.cov, data.cov_y, beta0, float(cfg.alpha), float(cfg.step),
        int(cfg.flavor), float(tol), int(cfg.max_steps), int(cfg.sample_every))
    if status == 2:
        raise NonFiniteIterate("iterate became non-finite; reduce the step size")
    return SolutionPath(t=ts, beta=betas, grad=grads, converged=status == 1,
                        flavor=cfg.flavor, config=replace(cfg, tol=tol))
