"""The reduced profile ODE ``-y'' + k y' = g(y)``, the logarithmic cutoff and growth fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field_calculus import ScalarField, gradient_norm
from .model_space import Region
from .semilinear import STAGNATION_WINDOW, Nonlinearity, NumericalFailure

SMALL_O_MARGIN = 0.05


@dataclass(frozen=True, eq=False)
class ProfileSolution:
    t: np.ndarray
    y: np.ndarray
    yp: np.ndarray
    k: float
    ode_residual_max: float
    monotone: bool
    nondecreasing: bool
    converged: bool = True
    iterations: int = 0
    history: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "k": self.k,
            "T": float(self.t[-1]),
            "h": float(self.t[1] - self.t[0]),
            "nodes": int(self.t.size),
            "ode_residual_max": self.ode_residual_max,
            "monotone": self.monotone,
            "nondecreasing": self.nondecreasing,
            "min_yp": float(self.yp.min()),
            "converged": self.converged,
            "iterations": self.iterations,
            "history": list(self.history),
        }


def _centered(t: np.ndarray, y: np.ndarray):
    if y.size < 3:
        raise ValueError("the profile needs at least three nodes")
    h = float(t[1] - t[0])
    if not np.allclose(np.diff(t), h, rtol=1e-9, atol=1e-12 * max(1.0, abs(h))):
        raise ValueError("profile grid must be uniform")
    ypp = (y[2:] - 2 * y[1:-1] + y[:-2]) / h**2
    yp = (y[2:] - y[:-2]) / (2 * h)
    return h, ypp, yp


def _derivative(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    h = t[1] - t[0]
    yp = np.empty_like(y)
    yp[1:-1] = (y[2:] - y[:-2]) / (2 * h)
    yp[0] = (y[1] - y[0]) / h
    yp[-1] = (y[-1] - y[-2]) / h
    return yp


def ode_residual_array(t, y, k: float, nl: Nonlinearity) -> np.ndarray:
    _, ypp, yp = _centered(np.asarray(t, float), np.asarray(y, float))
    return -ypp + k * yp - nl.g(y[1:-1])


def ode_residual(y: ProfileSolution, nl: Nonlinearity) -> float:
    """``max |-y'' + k y' - g(y)|`` over interior nodes, centered differences."""
    return float(np.abs(ode_residual_array(y.t, y.y, y.k, nl)).max())


def make_profile(t, y, k: float, nl: Nonlinearity, **extra) -> ProfileSolution:
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    res = float(np.abs(ode_residual_array(t, y, k, nl)).max())
    yp = _derivative(t, y)
    inner = yp[1:-1]
    # slopes below this are indistinguishable from rounding in the difference quotient
    floor = 64 * np.finfo(float).eps * max(1.0, float(np.abs(y).max())) / float(np.diff(t).min())
    return ProfileSolution(t, y, yp, float(k), res, bool(inner.min() > 0), bool(inner.min() >= -floor), **extra)


def solve_profile(nl: Nonlinearity, k: float, boundary, T: float, h: float, tol: float = 1e-8,
                  max_iter: int = 60, y0=None) -> ProfileSolution:
    """Damped Newton for the Dirichlet problem ``-y'' + k y' = g(y)`` on ``[-T, T]``.

    The default initial guess is ``m + d tanh(t/sqrt 2)`` interpolating the boundary data.
    """
    if T <= 0 or h <= 0:
        raise ValueError("T and h must be positive")
    a, b = (float(v) for v in boundary)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("boundary values must be finite")
    cells = 2 * T / h
    if abs(cells - round(cells)) > 1e-8 * cells:
        raise ValueError("2T/h must be an integer")
    t = np.linspace(-T, T, int(round(cells)) + 1)
    if y0 is None:
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        y = mid + half * np.tanh(t / math.sqrt(2.0)) / math.tanh(T / math.sqrt(2.0))
    else:
        y = np.asarray(y0, float).copy()
    y[0], y[-1] = a, b
    n = t.size - 2
    lower = (-1.0 / h**2 - k / (2 * h)) * np.ones(n - 1)
    upper = (-1.0 / h**2 + k / (2 * h)) * np.ones(n - 1)

    def resid(y):
        return ode_residual_array(t, y, k, nl)

    F = resid(y)
    res = float(np.abs(F).max())
    history = [res]
    it = 0
    stalled = 0
    # damped Newton first; a stalled line search hands over to pseudo-transient continuation
    while res > tol and it < max_iter and stalled < 5:
        it += 1
        step = _tridiag_solve(lower, 2.0 / h**2 - nl.dg(y[1:-1]), upper, -F, it)
        merit = float(np.linalg.norm(F))
        alpha = 1.0
        for _ in range(31):
            cand = y.copy()
            cand[1:-1] += alpha * step
            F_c = resid(cand)
            if np.linalg.norm(F_c) < merit or alpha < 2.0**-30:
                break
            alpha *= 0.5
        y, F = cand, F_c
        new = float(np.abs(F).max())
        stalled = stalled + 1 if new > 0.99 * res else 0
        res = new
        history.append(res)
    dtau = 1.0
    best, since_best = res, 0
    while res > tol and it < 20 * max_iter and since_best < STAGNATION_WINDOW:
        it += 1
        step = _tridiag_solve(lower, 2.0 / h**2 - nl.dg(y[1:-1]) + 1.0 / dtau, upper, -F, it)
        y[1:-1] += step
        F_new = resid(y)
        dtau = min(dtau * float(np.linalg.norm(F)) / max(float(np.linalg.norm(F_new)), 1e-300), 1e12)
        F = F_new
        res = float(np.abs(F).max())
        history.append(res)
        if res < 0.99 * best:
            best, since_best = res, 0
        else:
            since_best += 1
    if res > tol:
        floor = 4 * np.finfo(float).eps * max(1.0, float(np.abs(y).max())) / h**2
        raise NumericalFailure(
            f"profile solve did not converge after {it} iterations; residual history tail {history[-5:]}"
            f" (rounding floor of the difference quotient about {floor:.1e})"
        )
    return make_profile(t, y, k, nl, converged=True, iterations=it, history=history)


def _tridiag_solve(lower, diag, upper, rhs, it):
    J = sp.diags([lower, diag, upper], [-1, 0, 1], format="csc")
    step = spla.splu(J).solve(rhs)
    if not np.all(np.isfinite(step)):
        raise NumericalFailure(f"degenerate linearization in the profile solve at iteration {it}")
    return step


# ------------------------------------------------------------------ cutoff
def log_cutoff(R: float, r):
    """``1`` on ``r <= sqrt R``, ``2 - 2 log r / log R`` up to ``R``, ``0`` beyond."""
    if R <= 1:
        raise ValueError("R must exceed 1")
    r = np.asarray(r, float)
    with np.errstate(divide="ignore"):
        mid = 2.0 - 2.0 * np.log(np.where(r > 0, r, 1.0)) / math.log(R)
    out = np.where(r <= math.sqrt(R), 1.0, np.where(r >= R, 0.0, mid))
    return float(out) if out.ndim == 0 else out


def log_cutoff_gradientsq(R: float, r):
    """``|grad h_R|^2 = 4 / (r^2 log^2 R)`` strictly between the knots, else 0."""
    if R <= 1:
        raise ValueError("R must exceed 1")
    r = np.asarray(r, float)
    inside = (r > math.sqrt(R)) & (r < R)
    out = np.where(inside, 4.0 / (np.where(inside, r, 1.0) ** 2 * math.log(R) ** 2), 0.0)
    return float(out) if out.ndim == 0 else out


def cutoff_energy(u: ScalarField, R: float, center=None) -> float:
    """``int |grad h_R|^2 |grad u|^2 dVol_f`` by node quadrature, with ``r`` the geodesic distance."""
    s = u.space
    Region.ball(R, center).mask(s)  # raises when B_R leaves the truncated domain
    r = s.distance_from(center)
    g2 = gradient_norm(u).values ** 2
    return float(np.sum(log_cutoff_gradientsq(R, r) * g2 * s.node_measure))


def ball_dirichlet_energy(u: ScalarField, R: float, center=None) -> float:
    """``int_{B_R} |grad u|^2 dVol_f`` by node quadrature."""
    s = u.space
    m = Region.ball(R, center).mask(s)
    g2 = gradient_norm(u).values ** 2
    return float(np.sum(np.where(m, g2 * s.node_measure, 0.0)))


# ------------------------------------------------------------------ growth
@dataclass(frozen=True)
class GrowthDiagnostic:
    R: tuple
    Q: tuple
    a: float
    p: float
    q: float
    fit_residual: float
    small_o_flag: bool
    gamma: tuple
    chain: dict | None = None

    def summary(self) -> dict:
        return {
            "R": list(self.R),
            "Q": list(self.Q),
            "fit": {"a": self.a, "p": self.p, "q": self.q, "residual": self.fit_residual},
            "small_o_flag": self.small_o_flag,
            "margin": SMALL_O_MARGIN,
            "gamma": list(self.gamma),
            "chain": self.chain,
        }


def _small_o(p: float, q: float, margin: float = SMALL_O_MARGIN) -> bool:
    if p < 2.0 - margin:
        return True
    if abs(p - 2.0) <= margin:
        return q < 1.0 - margin
    return False


def growth_diagnostic(samples: dict, chain: dict | None = None) -> GrowthDiagnostic:
    """Fit ``log Q = log a + p log R + q log log R`` and flag ``Q = o(R^2 log R)``.

    ``chain`` optionally carries the two sides of the product inequality per
    radius, ``{"lhs": {...}, "rhs": {...}}``; the holds-flag is recorded.
    """
    R = np.array(sorted(samples), float)
    if R.size < 6:
        raise ValueError("insufficient samples: need at least six radii")
    if np.any(R <= 1):
        raise ValueError("sample radii must exceed 1")
    if R[-1] / R[0] < 4:
        raise ValueError("insufficient samples: radii must span two doublings")
    Q = np.array([samples[r] for r in sorted(samples)], float)
    if np.any(Q <= 0):
        raise ValueError("growth samples must be positive")
    X = np.column_stack([np.ones_like(R), np.log(R), np.log(np.log(R))])
    coef, *_ = np.linalg.lstsq(X, np.log(Q), rcond=None)
    fit_res = float(np.sqrt(np.mean((X @ coef - np.log(Q)) ** 2)))
    loga, p, q = (float(c) for c in coef)
    gamma = Q / (R**2 * np.log(R))
    chain_out = None
    if chain is not None:
        lhs = {float(k): float(v) for k, v in chain["lhs"].items()}
        rhs = {float(k): float(v) for k, v in chain["rhs"].items()}
        keys = sorted(lhs)
        holds = [lhs[k] <= rhs[k] * (1 + 1e-12) for k in keys]
        chain_out = {"R": keys, "lhs": [lhs[k] for k in keys], "rhs": [rhs[k] for k in keys],
                     "holds": holds, "all_hold": bool(all(holds))}
    return GrowthDiagnostic(tuple(R.tolist()), tuple(Q.tolist()), math.exp(loga), p, q, fit_res,
                            _small_o(p, q), tuple(gamma.tolist()), chain_out)


def fiber_ball_volume(space, R: float) -> float:
    """Weighted volume of the fiber ball ``B_R^N`` about the center, read off the ``t = 0`` slice."""
    c = space.center_index[0]
    d2 = np.zeros(space.shape[1:])
    vol = np.ones(space.shape[1:])
    for i in range(1, space.n):
        shape = [1] * (space.n - 1)
        shape[i - 1] = -1
        dx = np.abs(space.coords[i] - space.center[i])
        if space.periodic[i]:
            L = space.period(i)
            dx = np.minimum(dx % L, L - dx % L)
        d2 = d2 + dx.reshape(shape) ** 2
        vol = vol * space.spacing[i]
    rho = np.exp(-space.f[c])
    inside = np.sqrt(d2) <= R + 1e-9 * max(space.spacing)
    return float(np.sum(np.where(inside, rho * vol, 0.0)))


def chain_samples(u: ScalarField, radii) -> dict:
    """Both sides of ``(int_{-R}^{R} |y'|^2 dt) Vol_f(B_R^N) <= int_{B_{R sqrt 2}} |grad u|^2`` on a product.

    ``y`` is the fiber average of ``u``.
    """
    s = u.space
    t = s.coords[0]
    y = u.values.reshape(s.shape[0], -1).mean(axis=1)
    yp = _derivative(t, y)
    w = np.full(t.size, s.spacing[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    lhs, rhs = {}, {}
    for R in radii:
        m = np.abs(t) <= R + 1e-9 * s.spacing[0]
        lhs[float(R)] = float(np.sum(np.where(m, yp**2 * w, 0.0)) * fiber_ball_volume(s, R))
        rhs[float(R)] = ball_dirichlet_energy(u, R * math.sqrt(2.0))
    return {"lhs": lhs, "rhs": rhs}
