"""Piecewise-analytical limits of the descent methods at infinitesimal step size.

Three solvers share one segment representation:

  * gradient flow (alpha = 0): a single matrix-exponential segment.
  * coordinate flow (alpha = 1): piecewise linear; per segment, the constant
    per-coordinate rates solve a small linear system that keeps the maximal
    absolute gradients tied together, and segment boundaries have closed forms.
  * elastic gradient flow (alpha in (0, 1)): per segment, coordinates split
    into a free set (updated at full rate), an inactive set (frozen) and a
    coupled set whose rate diagonal is expanded in a Taylor series; the state
    propagates through exp(Omega) where Omega collects the first one or two
    Magnus terms of the time-dependent system matrix. Segment boundaries are
    located numerically by bracketing and bisection.

Rates outside [0, 1] are infeasible; the worst offender is moved out of the
coupled (or tied) set and the system re-solved, one coordinate at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .data import Dataset, gradient_at
from .descent import DescentConfig, Flavor, SolutionPath, run_descent
from .errors import NoEventInHorizon, SingularSystem, TruncationBreakdown

COND_LIMIT = 1e12

# Segment end events, mirroring the boundary criteria plus bookkeeping states.
EVENT_INACTIVE_JOINS = "InactiveJoins"
EVENT_FREE_LEAVES = "FreeLeaves"
EVENT_COUPLED_EXITS = "CoupledExits"
EVENT_MAX_CHANGES = "MaxChanges"
EVENT_CONVERGED = "Converged"
EVENT_TMAX = "TMaxReached"
EVENT_HORIZON = "Horizon"
EVENT_FALLBACK = "Fallback"
# The leading gradient component changes sign. The sign vector (and with it
# the whole segment model) is stale past this point, so the segment must end
# there; when all components vanish together this is where the flow reaches
# the least squares solution.
EVENT_SIGN_FLIP = "SignFlip"


@dataclass(frozen=True)
class FlowConfig:
    alpha: float
    taylor_order: int = 4
    magnus_order: int = 2
    event_tol: float = 1e-10
    ridge_eps: float = 1e-8
    max_segments: int = 20000
    t_max: float = 1e4
    classification_tol: float = 1e-8
    seg_err_tol: float = 1e-8
    min_segment_dt: float = 1e-12
    conv_tol: float | None = None  # absolute; None -> 1e-8 * ||g(0)||_inf
    event_grid: int = 512

    def __post_init__(self):
        if self.taylor_order < 1:
            raise ValueError("taylor_order must be >= 1")
        if self.magnus_order not in (1, 2):
            raise ValueError("magnus_order must be 1 or 2")


@dataclass
class FlowSegment:
    """One analytical piece [t_start, t_end) of a flow solution."""

    t_start: float
    t_end: float
    beta_start: np.ndarray
    sign_vec: np.ndarray
    free: np.ndarray
    coupled: np.ndarray
    inactive: np.ndarray
    kind: str  # "linear" | "exp" | "gradient" | "fallback"
    alpha: float
    end_event: str = EVENT_HORIZON
    i_taylor: np.ndarray | None = None  # (K+1, p) diagonal Taylor coefficients
    slope: np.ndarray | None = None  # linear segments only
    cov: np.ndarray | None = field(default=None, repr=False)
    offset: np.ndarray | None = None  # exp segments: a/(1-a)*Sinv s + beta_ols
    beta_ols: np.ndarray | None = None
    eig: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    magnus_order: int = 2
    samples: tuple[np.ndarray, np.ndarray] | None = None  # fallback segments
    m: int = -1

    @property
    def members(self) -> np.ndarray:
        """Indices updated on this segment (free plus coupled)."""
        return np.concatenate([self.free, self.coupled])

    def i_diag_at(self, t: float) -> np.ndarray:
        """Diagonal of the rate matrix at time t within the segment."""
        if self.kind == "gradient":
            return np.ones(len(self.beta_start))
        if self.kind == "linear":
            return self.i_taylor[0].copy()
        h = t - self.t_start
        out = np.zeros(len(self.beta_start))
        hk = 1.0
        for k in range(self.i_taylor.shape[0]):
            out += self.i_taylor[k] * hk
            hk *= h / (k + 1)
        return out

    def int_i_at(self, t: float) -> np.ndarray:
        """Per-coordinate integral of the rate diagonal over [t_start, t]."""
        h = t - self.t_start
        if self.kind == "gradient":
            return np.full(len(self.beta_start), h)
        if self.kind == "linear":
            return h * self.i_taylor[0]
        out = np.zeros(len(self.beta_start))
        for k in range(self.i_taylor.shape[0]):
            out += self.i_taylor[k] * h ** (k + 1) / math.factorial(k + 1)
        return out

    def beta_at(self, t: float) -> np.ndarray:
        h = t - self.t_start
        if h == 0.0:
            return self.beta_start.copy()
        if self.kind == "linear":
            return self.beta_start + h * self.slope
        if self.kind == "gradient":
            w, v = self.eig
            decay = v @ (np.exp(-h * w) * (v.T @ (self.beta_ols - self.beta_start)))
            return self.beta_ols - decay
        if self.kind == "fallback":
            ts, betas = self.samples
            out = np.empty(betas.shape[1])
            for j in range(betas.shape[1]):
                out[j] = np.interp(t, ts, betas[:, j])
            return out
        om = magnus_omega(self, self.alpha, t)
        return self.offset - expm(om) @ (self.offset - self.beta_start)


def magnus_omega(segment: FlowSegment, alpha: float, t: float) -> np.ndarray:
    """Truncated Magnus log-propagator Omega(t_start, t) for an exp segment.

    The first term integrates the Taylor expansion of the rate diagonal times
    the covariance; the second collects the commutators of those Taylor
    coefficients with the closed-form double-sum weights.
    """
    h = t - segment.t_start
    cov = segment.cov
    it = segment.i_taylor
    K = it.shape[0] - 1
    IS = [it[l][:, None] * cov for l in range(K + 1)]
    om = np.zeros_like(cov)
    for l in range(K + 1):
        om += -(1.0 - alpha) * h ** (l + 1) / math.factorial(l + 1) * IS[l]
    if segment.magnus_order >= 2:
        pref = 0.5 * (1.0 - alpha) ** 2
        for l1 in range(2, K + 2):
            for l2 in range(1, l1):
                c = ((l1 - l2) * h ** (l1 + l2)
                     / (math.factorial(l1) * math.factorial(l2) * (l1 + l2)))
                comm = IS[l1 - 1] @ IS[l2 - 1] - IS[l2 - 1] @ IS[l1 - 1]
                om += pref * c * comm
    return om


@dataclass
class AnalyticalPath:
    """Ordered segments plus an evaluator mapping t to beta(t)."""

    segments: list[FlowSegment]
    data: Dataset
    alpha: float
    config: FlowConfig
    converged: bool

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    def _segment_for(self, t: float) -> FlowSegment:
        starts = [s.t_start for s in self.segments]
        i = int(np.searchsorted(starts, t, side="right")) - 1
        return self.segments[max(i, 0)]

    def beta_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            tf = float(t)
            if tf >= self.t_end:
                seg = self.segments[-1]
                return self.data.beta_ols.copy() if self.converged else seg.beta_at(min(tf, seg.t_end))
            return self._segment_for(tf).beta_at(tf)
        return np.stack([self.beta_at(float(ti)) for ti in t])

    def grad_at(self, t) -> np.ndarray:
        beta = self.beta_at(t)
        return beta @ self.data.cov - self.data.cov_y

    def int_i_at(self, t: float) -> np.ndarray:
        """Per-coordinate integral of the rate diagonal over [0, t]."""
        out = np.zeros(self.data.p)
        for seg in self.segments:
            if t <= seg.t_start:
                break
            out += seg.int_i_at(min(t, seg.t_end))
        return out

    def sample(self, ts: np.ndarray) -> SolutionPath:
        ts = np.asarray(ts, dtype=float)
        beta = self.beta_at(ts)
        return SolutionPath(t=ts, beta=beta, grad=beta @ self.data.cov - self.data.cov_y,
                            converged=self.converged, flavor=None, config=None)


# ---------------------------------------------------------------------------
# Gradient flow
# ---------------------------------------------------------------------------
def gradient_flow_beta(data: Dataset, t: float) -> np.ndarray:
    """(I - exp(-t*cov)) beta_ols via the spectral decomposition of cov."""
    if t < 0:
        raise ValueError("t must be >= 0")
    w, v = np.linalg.eigh(data.cov)
    coef = v.T @ data.beta_ols
    return v @ ((1.0 - np.exp(-t * np.clip(w, 0.0, None))) * coef)


def gradient_flow(data: Dataset, cfg: FlowConfig) -> AnalyticalPath:
    """Gradient flow as a single-segment analytical path."""
    g0 = -data.cov_y
    conv_tol = cfg.conv_tol if cfg.conv_tol is not None else 1e-8 * float(np.max(np.abs(g0)))
    w, v = np.linalg.eigh(data.cov)
    w = np.clip(w, 0.0, None)
    beta0 = np.zeros(data.p)

    # sup-norm of the gradient along the flow, decays to zero on the range of cov
    def gsup(t):
        beta = v @ ((1.0 - np.exp(-t * w)) * (v.T @ data.beta_ols))
        return float(np.max(np.abs(data.cov @ beta - data.cov_y)))

    t_end, event = cfg.t_max, EVENT_TMAX
    converged = False
    if gsup(cfg.t_max) < conv_tol:
        lo, hi = 0.0, cfg.t_max
        while hi - lo > max(cfg.event_tol, 1e-12 * hi):
            mid = 0.5 * (lo + hi)
            if gsup(mid) < conv_tol:
                hi = mid
            else:
                lo = mid
        t_end, event, converged = hi, EVENT_CONVERGED, True
    seg = FlowSegment(
        t_start=0.0, t_end=t_end, beta_start=beta0,
        sign_vec=np.sign(-g0), free=np.arange(data.p),
        coupled=np.array([], int), inactive=np.array([], int),
        kind="gradient", alpha=0.0, end_event=event,
        beta_ols=data.beta_ols, eig=(w, v), cov=data.cov)
    return AnalyticalPath([seg], data, 0.0, cfg, converged)


# ---------------------------------------------------------------------------
# Coordinate flow
# ---------------------------------------------------------------------------
def _tied_rates(cov: np.ndarray, s: np.ndarray, tied: np.ndarray) -> np.ndarray:
    """Constant rates on the tied set: first row ties the total speed to 1,
    the rest keep consecutive absolute gradients equal."""
    k = len(tied)
    A = np.empty((k, k))
    A[0] = s[tied]
    for j in range(k - 1):
        A[j + 1] = s[tied[j]] * cov[tied[j], tied] - s[tied[j + 1]] * cov[tied[j + 1], tied]
    if np.linalg.cond(A) > COND_LIMIT:
        raise SingularSystem("tied-gradient system is numerically singular")
    e1 = np.zeros(k)
    e1[0] = 1.0
    return np.linalg.solve(A, e1)  # = slope on the tied set; rate_d = x_d * s_d


def coordinate_flow(data: Dataset, cfg: FlowConfig) -> AnalyticalPath:
    """Piecewise-linear flow tying together the maximal absolute gradients."""
    cov, covy, beta_ols, p = data.cov, data.cov_y, data.beta_ols, data.p
    g0 = -covy
    conv_tol = cfg.conv_tol if cfg.conv_tol is not None else 1e-8 * float(np.max(np.abs(g0)))
    beta = np.zeros(p)
    t = 0.0
    segments: list[FlowSegment] = []
    converged = False

    while len(segments) < cfg.max_segments and t < cfg.t_max:
        g = cov @ beta - covy
        gmax = float(np.max(np.abs(g)))
        if gmax < conv_tol:
            converged = True
            beta = beta_ols.copy()
            if segments:
                segments[-1].end_event = EVENT_CONVERGED
            break
        s = -np.sign(g)
        tied = np.flatnonzero(np.abs(g) >= (1.0 - cfg.classification_tol) * gmax)
        # infeasible (non-positive) rates: drop the worst offender and re-solve
        while True:
            x = _tied_rates(cov, s, tied)
            rates = x * s[tied]
            if rates.min() > 0.0 or len(tied) == 1:
                break
            tied = np.delete(tied, int(np.argmin(rates)))
        slope = np.zeros(p)
        slope[tied] = x
        i_diag = np.zeros(p)
        i_diag[tied] = rates

        m1 = int(tied[0])
        resid = beta_ols - beta
        cands: list[tuple[float, str]] = []
        pos_floor = 1e-11 * max(1.0, t)
        for d in range(p):
            if d in tied:
                continue
            for sgn_k, row in ((1.0, cov[d] - cov[m1]), (-1.0, cov[d] + cov[m1])):
                den = row @ slope
                if den == 0.0:
                    continue
                dt = (row @ resid) / den
                if dt > pos_floor:
                    cands.append((t + dt, EVENT_INACTIVE_JOINS))
        rate_g = s[m1] * (cov @ slope)[m1]
        if rate_g > 0:
            cands.append((t + gmax / rate_g, EVENT_CONVERGED))
        cands.append((cfg.t_max, EVENT_TMAX))
        t_next, event = min(cands, key=lambda c: c[0])

        segments.append(FlowSegment(
            t_start=t, t_end=t_next, beta_start=beta.copy(), sign_vec=s,
            free=tied, coupled=np.array([], int),
            inactive=np.setdiff1d(np.arange(p), tied),
            kind="linear", alpha=1.0, end_event=event, slope=slope,
            i_taylor=i_diag[None, :], cov=cov, beta_ols=beta_ols, m=m1))
        beta = beta + (t_next - t) * slope
        t = t_next
        if event == EVENT_CONVERGED:
            converged = True
            beta = beta_ols.copy()
            break
        if event == EVENT_TMAX:
            break
    return AnalyticalPath(segments, data, 1.0, cfg, converged)


# ---------------------------------------------------------------------------
# Elastic gradient flow
# ---------------------------------------------------------------------------
def _poly_mul(a: list, b: list, order: int) -> list:
    out = [None] * (order + 1)
    for i, ai in enumerate(a):
        if ai is None:
            continue
        for j, bj in enumerate(b):
            if bj is None or i + j > order:
                continue
            out[i + j] = ai @ bj if out[i + j] is None else out[i + j] + ai @ bj
    return out


def _exp_series(W: list[np.ndarray | None], order: int, p: int) -> list[np.ndarray]:
    """Taylor derivatives at 0 of exp(sum_j W[j] h^j / j!), through `order`.

    W[j] is the j-th derivative of the exponent at 0 (W[0] ignored/zero).
    Returns E with E[k] the k-th derivative of the exponential at 0.
    """
    eye = np.eye(p)
    P = [None] * (order + 1)
    for j in range(1, order + 1):
        if W[j] is not None:
            P[j] = W[j] / math.factorial(j)
    E = [None] * (order + 1)
    E[0] = eye
    term = [eye] + [None] * order
    for n in range(1, order + 1):
        term = _poly_mul(term, P, order)
        if all(c is None for c in term):
            break
        for k in range(order + 1):
            if term[k] is not None:
                add = term[k] / math.factorial(n)
                E[k] = add if E[k] is None else E[k] + add
    return [np.zeros((p, p)) if e is None else e * math.factorial(k)
            for k, e in enumerate(E)]


def _omega_derivs(i_rows: np.ndarray, cov: np.ndarray, alpha: float,
                  jmax: int, magnus_order: int) -> list[np.ndarray | None]:
    """Derivatives of Omega at the segment start, W[1..jmax].

    i_rows holds the known diagonal Taylor coefficients of the rate matrix
    (rows beyond its length are treated as zero).
    """
    IS = [i_rows[l][:, None] * cov if l < i_rows.shape[0] else None
          for l in range(jmax)]
    W: list[np.ndarray | None] = [None] * (jmax + 1)
    for j in range(1, jmax + 1):
        acc = None
        if IS[j - 1] is not None:
            acc = -(1.0 - alpha) * IS[j - 1]
        if magnus_order >= 2:
            for l2 in range(1, (j - 1) // 2 + 1):
                a_idx, b_idx = j - l2 - 1, l2 - 1
                if IS[a_idx] is None or IS[b_idx] is None:
                    continue
                coef = ((j - 2 * l2) * math.factorial(j - 1)
                        / (math.factorial(l2) * math.factorial(j - l2)))
                comm = IS[a_idx] @ IS[b_idx] - IS[b_idx] @ IS[a_idx]
                add = 0.5 * (1.0 - alpha) ** 2 * coef * comm
                acc = add if acc is None else acc + add
        W[j] = acc
    return W


def _coupled_coefficients(cov, g, gs, free, coupled, m, alpha, v, K, magnus_order):
    """Taylor coefficients of the rate diagonal on the current sets.

    Returns (i_taylor, free, coupled, inactive) after feasibility repair of
    the order-zero solve; raises SingularSystem if the coupled system cannot
    be solved.
    """
    p = len(g)
    free = np.asarray(free, int)
    coupled = np.asarray(coupled, int)

    # order zero with repair: coupled rates must lie strictly inside (0, 1)
    while True:
        i0 = np.zeros(p)
        i0[free] = 1.0
        if len(coupled) == 0:
            break
        A = np.outer(g[coupled], cov[m, coupled]) - g[m] * cov[np.ix_(coupled, coupled)]
        if np.linalg.cond(A) > COND_LIMIT:
            raise SingularSystem("coupled-set system is numerically singular")
        b0 = (g[m] * cov[np.ix_(coupled, free)]
              - np.outer(g[coupled], cov[m, free])) @ gs[free]
        vals = np.linalg.solve(A, b0) / gs[coupled]
        if np.all((vals > 0.0) & (vals < 1.0)):
            i0[coupled] = vals
            break
        dev = np.maximum(-vals, vals - 1.0)
        worst = int(np.argmax(dev))
        if vals[worst] >= 1.0:
            free = np.append(free, coupled[worst])
        coupled = np.delete(coupled, worst)

    i_taylor = np.zeros((K + 1, p))
    i_taylor[0] = i0
    if len(coupled) > 0:
        A = np.outer(g[coupled], cov[m, coupled]) - g[m] * cov[np.ix_(coupled, coupled)]
        for k in range(1, K + 1):
            # forcing term: (k+1)-th gradient derivative with the unknown
            # k-th rate coefficient temporarily zeroed
            W = _omega_derivs(i_taylor[:k], cov, alpha, k + 1, magnus_order)
            E = _exp_series(W, k + 1, p)
            ck = -cov @ (E[k + 1] @ v)
            b = ck[m] * g[coupled] - g[m] * ck[coupled]
            i_taylor[k, coupled] = np.linalg.solve(A, b) / gs[coupled]
    inactive = np.setdiff1d(np.arange(p), np.concatenate([free, coupled]))
    return i_taylor, np.sort(free), np.sort(coupled), inactive


def _bisect_root(f, lo, hi, f_lo_sign, tol):
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if math.copysign(1.0, f(mid)) == f_lo_sign:
            lo = mid
        else:
            hi = mid
    return hi


def detect_next_event(segment: FlowSegment, data: Dataset, cfg: FlowConfig,
                      horizon: float | None = None,
                      conv_tol: float = 0.0) -> tuple[float, str]:
    """Earliest boundary event on (t_start, t_start + horizon].

    Scans a grid for sign changes of the boundary criteria and refines each
    bracket by bisection to event_tol; simultaneous events collapse into one
    boundary because the caller reclassifies all sets there.
    """
    t0 = segment.t_start
    if horizon is None:
        horizon = cfg.t_max - t0
    alpha = segment.alpha
    m = segment.m
    n = cfg.event_grid
    # geometric spacing resolves the set churn that clusters just after a
    # boundary while still covering the full horizon
    lo_h = max(cfg.min_segment_dt, cfg.event_tol, horizon * 1e-12)
    hs = np.geomspace(lo_h, horizon, n)
    betas = np.stack([segment.beta_at(t0 + h) for h in hs])
    absG = np.abs(betas @ data.cov - data.cov_y)
    am = absG[:, m]
    absG0 = np.abs(segment.beta_at(t0) @ data.cov - data.cov_y)
    gmax0 = float(absG0.max())
    # criteria sitting exactly on a just-processed boundary read their
    # departing sign from the first sample instead of the (zero) start value
    g_guard = 4.0 * cfg.classification_tol * max(gmax0, 1e-300)

    candidates: list[tuple[float, str]] = []

    def scan(f0: float, guard: float, vals: np.ndarray, scalar_f, label: str):
        if abs(f0) > guard:
            s0 = math.copysign(1.0, f0)
        else:
            s0 = np.sign(vals[0]) or 1.0
        signs = np.sign(vals)
        flips = np.flatnonzero(signs * s0 < 0)
        if len(flips) == 0:
            return
        i = int(flips[0])
        h_lo = hs[i - 1] if i > 0 else 0.0
        t_ev = _bisect_root(scalar_f, t0 + h_lo, t0 + hs[i], s0, cfg.event_tol)
        candidates.append((t_ev, label))

    def absg_scalar(d):
        return lambda t: abs(float((segment.beta_at(t) @ data.cov - data.cov_y)[d]))

    for d in segment.inactive:
        scan(absG0[d] - alpha * absG0[m], g_guard, absG[:, d] - alpha * am,
             lambda t, d=d: absg_scalar(d)(t) - alpha * absg_scalar(m)(t),
             EVENT_INACTIVE_JOINS)
    for d in segment.free:
        if d == m:
            continue
        scan(absG0[d] - alpha * absG0[m], g_guard, absG[:, d] - alpha * am,
             lambda t, d=d: absg_scalar(d)(t) - alpha * absg_scalar(m)(t),
             EVENT_FREE_LEAVES)
        scan(absG0[d] - absG0[m], g_guard, absG[:, d] - am,
             lambda t, d=d: absg_scalar(d)(t) - absg_scalar(m)(t),
             EVENT_MAX_CHANGES)
    for d in segment.coupled:
        i0 = segment.i_diag_at(t0)[d]
        i_vals = np.array([segment.i_diag_at(t0 + h)[d] for h in hs])
        scan(i0, 1e-12, i_vals, lambda t, d=d: segment.i_diag_at(t)[d],
             EVENT_COUPLED_EXITS)
        scan(i0 - 1.0, 1e-12, i_vals - 1.0,
             lambda t, d=d: segment.i_diag_at(t)[d] - 1.0, EVENT_COUPLED_EXITS)
    # signed zero crossing of the leading component; |g| ratios are preserved
    # inside a segment, so this is invisible to the magnitude criteria
    g0m = float((segment.beta_at(t0) @ data.cov - data.cov_y)[m])
    gm_vals = (betas @ data.cov - data.cov_y)[:, m]
    scan(g0m, 0.0, gm_vals,
         lambda t: float((segment.beta_at(t) @ data.cov - data.cov_y)[m]),
         EVENT_SIGN_FLIP)
    if conv_tol > 0.0:
        gsup = absG.max(axis=1)
        scan(gmax0 - conv_tol, 0.0, gsup - conv_tol,
             lambda t: float(np.max(np.abs(segment.beta_at(t) @ data.cov - data.cov_y))) - conv_tol,
             EVENT_CONVERGED)

    if not candidates:
        raise NoEventInHorizon(f"no boundary event in (t, t + {horizon:g}]")
    return min(candidates, key=lambda c: c[0])


def _truncation_horizon(segment: FlowSegment, t_rem: float, cfg: FlowConfig) -> float:
    """Largest admissible segment length for the current truncation orders.

    Compares the full evaluator against one with the highest Taylor
    coefficient dropped; the difference estimates the local truncation error.
    """
    lower = replace_taylor(segment, segment.i_taylor[:-1])
    h = min(1.0, t_rem)
    scale = max(1.0, float(np.max(np.abs(segment.beta_start))))

    def err(hh):
        t = segment.t_start + hh
        return float(np.max(np.abs(segment.beta_at(t) - lower.beta_at(t)))) / scale

    if err(h) <= cfg.seg_err_tol:
        while h < t_rem and err(min(2 * h, t_rem)) <= cfg.seg_err_tol:
            h = min(2 * h, t_rem)
            if h == t_rem:
                break
        return h
    while h > cfg.min_segment_dt:
        h *= 0.5
        if err(h) <= cfg.seg_err_tol:
            return h
    raise TruncationBreakdown("segment length below min_segment_dt")


def replace_taylor(segment: FlowSegment, i_taylor: np.ndarray) -> FlowSegment:
    out = FlowSegment(**{**segment.__dict__})
    out.i_taylor = i_taylor
    return out


def _sinv_apply(cov: np.ndarray, ridge_eps: float):
    """Returns s -> cov^{-1} s, regularized only when cov is rank-deficient."""
    w, v = np.linalg.eigh(cov)
    if w.min() < 1e-10 * w.max():
        w = w + ridge_eps
    return lambda s: v @ ((v.T @ s) / w)


def elastic_flow(data: Dataset, cfg: FlowConfig) -> AnalyticalPath:
    """Elastic gradient flow; alpha = 0 and alpha = 1 delegate to the
    gradient and coordinate flows they reduce to."""
    alpha = cfg.alpha
    if alpha == 0.0:
        return gradient_flow(data, cfg)
    if alpha == 1.0:
        return coordinate_flow(data, cfg)

    cov, covy, beta_ols, p = data.cov, data.cov_y, data.beta_ols, data.p
    sinv = _sinv_apply(cov, cfg.ridge_eps)
    # bound on |dg/dt| per unit coordinate speed, used to size the
    # set-classification band around alpha*|g_m|
    grad_rate = float(np.max(np.sum(np.abs(cov), axis=1)))
    g0 = -covy
    conv_tol = cfg.conv_tol if cfg.conv_tol is not None else 1e-8 * float(np.max(np.abs(g0)))
    beta = np.zeros(p)
    t = 0.0
    segments: list[FlowSegment] = []
    converged = False
    geom_cap = 1.0

    while len(segments) < cfg.max_segments and t < cfg.t_max:
        g = cov @ beta - covy
        gmax = float(np.max(np.abs(g)))
        if gmax < conv_tol:
            converged = True
            if segments:
                segments[-1].end_event = EVENT_CONVERGED
            break
        m = int(np.argmax(np.abs(g)))
        s = -np.sign(g)
        gs = alpha * np.sign(g) + (1.0 - alpha) * g
        # the absolute floor covers the residual left by locating the previous
        # boundary to event_tol in t (gradient slews at most grad_rate per unit t)
        band = max(cfg.classification_tol * alpha * gmax,
                   100.0 * cfg.event_tol * grad_rate)
        hi = np.abs(g) > alpha * gmax + band
        lo = np.abs(g) < alpha * gmax - band
        free0 = np.flatnonzero(hi)
        inactive0 = np.flatnonzero(lo)
        coupled0 = np.setdiff1d(np.arange(p), np.concatenate([free0, inactive0]))
        v = alpha / (1.0 - alpha) * sinv(s) + beta_ols - beta

        try:
            i_taylor, free, coupled, inactive = _coupled_coefficients(
                cov, g, gs, free0, coupled0, m, alpha, v, cfg.taylor_order,
                cfg.magnus_order)
            seg = FlowSegment(
                t_start=t, t_end=cfg.t_max, beta_start=beta.copy(), sign_vec=s,
                free=free, coupled=coupled, inactive=inactive, kind="exp",
                alpha=alpha, i_taylor=i_taylor, cov=cov,
                offset=alpha / (1.0 - alpha) * sinv(s) + beta_ols,
                beta_ols=beta_ols, magnus_order=cfg.magnus_order, m=m)
            t_rem = cfg.t_max - t
            if len(coupled) > 0:
                h_trunc = _truncation_horizon(seg, t_rem, cfg)
            else:
                h_trunc = t_rem
            horizon = min(t_rem, h_trunc, geom_cap)
        except (SingularSystem, TruncationBreakdown):
            beta, t, seg = _fallback_stretch(data, alpha, beta, t, cfg)
            segments.append(seg)
            geom_cap = 1.0
            continue

        try:
            t_ev, event = detect_next_event(seg, data, cfg, horizon=horizon,
                                            conv_tol=conv_tol)
        except NoEventInHorizon:
            t_ev = t + horizon
            if t_ev >= cfg.t_max - cfg.min_segment_dt:
                event = EVENT_TMAX
            else:
                event = EVENT_HORIZON
        seg.t_end = t_ev
        seg.end_event = event
        segments.append(seg)
        beta = seg.beta_at(t_ev)
        t = t_ev
        geom_cap = geom_cap * 4.0 if event == EVENT_HORIZON else 1.0
        if event == EVENT_CONVERGED:
            converged = True
            break
        if event == EVENT_TMAX:
            break
    return AnalyticalPath(segments, data, alpha, cfg, converged)


def _fallback_stretch(data: Dataset, alpha: float, beta: np.ndarray, t: float,
                      cfg: FlowConfig, dt: float = 1e-5, span: float = 1e-2):
    """Integrate the flow with fine-step unnormalized descent when the
    analytical expansion breaks down; flagged as a fallback segment."""
    n_steps = max(int(span / dt), 1)
    sub = run_descent(
        data,
        DescentConfig(alpha=alpha, step=dt, flavor=Flavor.UNNORMALIZED,
                      tol=1e-300, max_steps=n_steps, sample_every=max(n_steps // 256, 1)),
        beta0=beta)
    ts = sub.t + t
    g = gradient_at(data, beta)
    seg = FlowSegment(
        t_start=t, t_end=float(ts[-1]), beta_start=beta.copy(),
        sign_vec=-np.sign(g), free=np.array([], int), coupled=np.array([], int),
        inactive=np.array([], int), kind="fallback", alpha=alpha,
        end_event=EVENT_FALLBACK, samples=(ts, sub.beta), cov=data.cov,
        beta_ols=data.beta_ols, m=int(np.argmax(np.abs(g))))
    return sub.beta[-1].copy(), float(ts[-1]), seg
