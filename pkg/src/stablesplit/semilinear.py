"""Nonlinearities, the semilinear residual, energy and a damped Newton solver."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import polynomial as P

from .field_calculus import ScalarField, drift_laplacian, edge_weights, gradient, stiffness_matrix
from .model_space import ModelSpace, Region


class NumericalFailure(RuntimeError):
    """A numerical method could not produce a trustworthy answer."""


# consecutive non-improving iterations after which a solve is declared stagnated
STAGNATION_WINDOW = 100


class NLFamily(str, enum.Enum):
    ALLEN_CAHN = "allen-cahn"
    LINEAR = "linear"
    POLYNOMIAL = "poly"
    ZERO = "zero"


@dataclass(frozen=True)
class Nonlinearity:
    """``g`` stored as polynomial coefficients (low order first)."""

    family: NLFamily
    coefficients: tuple[float, ...]

    def __post_init__(self):
        self._self_check()

    @classmethod
    def allen_cahn(cls) -> "Nonlinearity":
        return cls(NLFamily.ALLEN_CAHN, (0.0, 1.0, 0.0, -1.0))

    @classmethod
    def linear(cls, mu: float) -> "Nonlinearity":
        return cls(NLFamily.LINEAR, (0.0, float(mu)))

    @classmethod
    def polynomial(cls, coefficients) -> "Nonlinearity":
        return cls(NLFamily.POLYNOMIAL, tuple(float(c) for c in coefficients))

    @classmethod
    def zero(cls) -> "Nonlinearity":
        return cls(NLFamily.ZERO, (0.0,))

    @classmethod
    def parse(cls, text: str) -> "Nonlinearity":
        """``allen-cahn | zero | linear:mu | poly:c0,c1,...``"""
        text = text.strip().lower()
        if text in ("allen-cahn", "allen_cahn", "allencahn"):
            return cls.allen_cahn()
        if text == "zero":
            return cls.zero()
        head, _, tail = text.partition(":")
        if head == "linear" and tail:
            return cls.linear(float(tail))
        if head in ("poly", "polynomial") and tail:
            return cls.polynomial([float(c) for c in tail.split(",")])
        raise ValueError(f"unrecognised nonlinearity {text!r}")

    def describe(self) -> str:
        if self.family is NLFamily.LINEAR:
            return f"linear:{self.coefficients[1]!r}"
        if self.family is NLFamily.POLYNOMIAL:
            return "poly:" + ",".join(repr(c) for c in self.coefficients)
        return self.family.value

    def g(self, t):
        return P.polyval(t, self.coefficients)

    def dg(self, t):
        return P.polyval(t, P.polyder(self.coefficients)) if len(self.coefficients) > 1 else 0.0 * np.asarray(t)

    def G(self, t):
        return P.polyval(t, P.polyint(self.coefficients))

    def _self_check(self) -> None:
        if not self.coefficients or not np.all(np.isfinite(self.coefficients)):
            raise ValueError("nonlinearity coefficients must be finite")
        probe = np.linspace(-2.0, 2.0, 41)
        d = 1e-4
        scale = 1.0 + np.abs(self.g(probe)).max() + np.abs(self.dg(probe)).max()
        if abs(self.G(0.0)) > 0:
            raise ValueError("G(0) must vanish")
        fd_g = (self.g(probe + d) - self.g(probe - d)) / (2 * d)
        fd_G = (self.G(probe + d) - self.G(probe - d)) / (2 * d)
        if np.abs(fd_g - self.dg(probe)).max() > 1e-5 * scale:
            raise ValueError("g' disagrees with finite differences of g")
        if np.abs(fd_G - self.g(probe)).max() > 1e-5 * scale:
            raise ValueError("G' disagrees with g")


@dataclass(frozen=True, eq=False)
class SolveOutcome:
    u: ScalarField
    residual_norm: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    pinned: bool = False
    initial_guess: str = ""

    def summary(self) -> dict:
        return {
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "history": list(self.history),
            "pinned": self.pinned,
            "initial_guess": self.initial_guess,
        }


def pde_residual(u: ScalarField, nl: Nonlinearity) -> ScalarField:
    return ScalarField(u.space, drift_laplacian(u).values + nl.g(u.values))


def energy(u: ScalarField, nl: Nonlinearity, region: Region | None = None) -> float:
    """``1/2 int |grad u|^2 - int G(u)`` over ``region``.

    The Dirichlet part gives each edge half its weight per endpoint inside
    the region, so the energy is additive over disjoint regions.
    """
    s = u.space
    mask = np.ones(s.shape, bool) if region is None else region.mask(s)
    grad = gradient(u)
    c = edge_weights(s)
    dir_part = 0.0
    for i in range(s.n):
        if s.periodic[i]:
            m_lo, m_hi = mask, np.roll(mask, -1, axis=i)
        else:
            m_lo = np.take(mask, np.arange(s.shape[i] - 1), axis=i)
            m_hi = np.take(mask, np.arange(1, s.shape[i]), axis=i)
        frac = 0.5 * (m_lo.astype(float) + m_hi.astype(float))
        dir_part += float(np.sum(frac * c[i] * grad.components[i] ** 2))
    pot = float(np.sum(np.where(mask, nl.G(u.values) * s.node_measure, 0.0)))
    return 0.5 * dir_part - pot


# -------------------------------------------------------------- initial guess
def initial_guess(space: ModelSpace, preset: str) -> ScalarField:
    """``tanh[:s]`` (profile ``tanh(t/s)`` along the axis), ``const:c``, ``random:seed,amp``."""
    head, _, tail = preset.strip().lower().partition(":")
    if head == "tanh":
        s = float(tail) if tail else np.sqrt(2.0)
        return ScalarField(space, np.tanh(space.mesh[0] / s))
    if head in ("const", "constant"):
        return ScalarField.constant(space, float(tail))
    if head == "random":
        parts = [p for p in tail.split(",") if p]
        seed = int(parts[0]) if parts else 0
        amp = float(parts[1]) if len(parts) > 1 else 1.0
        rng = np.random.default_rng(seed)
        return ScalarField(space, amp * rng.uniform(-1.0, 1.0, space.shape))
    raise ValueError(f"unrecognised initial guess {preset!r}")


# ---------------------------------------------------------------- newton
def _flat_center(space: ModelSpace) -> int:
    return int(np.ravel_multi_index(space.center_index, space.shape))


def newton_solve(
    space: ModelSpace,
    nl: Nonlinearity,
    u0: ScalarField,
    tol: float = 1e-10,
    max_iter: int = 50,
    pin: bool | None = None,
    initial_label: str = "",
    axis_dirichlet: tuple[float, float] | None = None,
) -> SolveOutcome:
    """Damped Newton on ``F(u) = Lap_f u + g(u)``.

    When the backtracking line search stalls (five steps each reducing the
    residual by under one percent) the iteration switches to pseudo-transient
    continuation: backward Euler steps of ``u_tau = F(u)`` whose step grows
    as the residual falls, ending in plain Newton.

    With ``pin`` (default: automatic when the space has a truncated axis and
    ``u0`` vanishes at the center node) the value at the center is held fixed
    by a bordered system with a Lagrange multiplier, removing the translation
    zero mode of heteroclinic profiles.

    ``axis_dirichlet=(a, b)`` replaces the natural truncation condition by
    fixed values on the two axis-end slices; the residual is then measured
    on the remaining nodes.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if u0.space is not space:
        raise ValueError("initial guess lives on a different space")
    S = stiffness_matrix(space)
    m = space.node_measure.ravel()
    N = m.size
    c = _flat_center(space)
    if pin is None:
        pin = (not space.periodic[0]) and abs(u0.values.ravel()[c]) <= 1e-12 * (1 + np.abs(u0.values).max())
    u = u0.values.ravel().copy()
    fixed = np.zeros(space.shape, bool)
    if axis_dirichlet is not None:
        if space.periodic[0]:
            raise ValueError("axis Dirichlet data needs a truncated axis")
        fixed[0], fixed[-1] = True, True
        ends = np.zeros(space.shape)
        ends[0], ends[-1] = axis_dirichlet
        u = np.where(fixed.ravel(), ends.ravel(), u)
        pin = False
    fixed = fixed.ravel()
    free = ~fixed
    u_pin = u[c]
    mu = 0.0

    def weak(u, mu):
        F = -(S @ u) + m * nl.g(u)
        if pin:
            F[c] += m[c] * mu
        F[fixed] = 0.0
        return F

    def sup_residual(u, mu):
        v = np.abs(weak(u, mu) / m).max()
        if pin:
            v = max(v, abs(u[c] - u_pin))
        return v

    def merit(u, mu):
        # mass-weighted Euclidean norm of the strong residual drives the line search
        r = weak(u, mu) / m
        v = float(np.sqrt(np.sum(m * r**2)))
        if pin:
            v = float(np.hypot(v, u[c] - u_pin))
        return v

    res = sup_residual(u, mu)
    history = [float(res)]
    it = 0
    stalled = 0
    dtau = None  # None: damped Newton; a float: pseudo-transient continuation

    def linear_step(u, mu, shift):
        K = -S + sp.diags(m * nl.dg(u) - (m / shift if shift else 0.0))
        if fixed.any():
            # identity rows on held nodes keep the step zero there
            K = sp.diags(free.astype(float)) @ K @ sp.diags(free.astype(float)) + sp.diags(fixed.astype(float))
        K = K.tocsc()
        F = weak(u, mu)
        if pin:
            e = sp.csc_matrix(([m[c]], ([c], [0])), shape=(N, 1))
            row = sp.csc_matrix(([1.0], ([0], [c])), shape=(1, N))
            A = sp.bmat([[K, e], [row, None]], format="csc")
            rhs = -np.concatenate([F, [u[c] - u_pin]])
        else:
            A, rhs = K, -F
        try:
            with np.errstate(all="raise"):
                lu = spla.splu(A)
                step = lu.solve(rhs)
        except (RuntimeError, FloatingPointError) as exc:
            raise NumericalFailure(f"degenerate linearization at iteration {it}: {exc}") from exc
        # a pivot at rounding level means the kernel survived factorization
        piv = np.abs(lu.U.diagonal())
        if piv.min() <= A.shape[0] * np.finfo(float).eps * piv.max():
            raise NumericalFailure(f"degenerate linearization at iteration {it}: pivot ratio {piv.min() / piv.max():.3g}")
        if not np.all(np.isfinite(step)):
            raise NumericalFailure(f"degenerate linearization at iteration {it}")
        return (step[:N], step[N]) if pin else (step, 0.0)

    best, since_best = res, 0
    while res > tol and it < (max_iter if dtau is None else 20 * max_iter) and since_best < STAGNATION_WINDOW:
        it += 1
        base = merit(u, mu)
        du, dmu = linear_step(u, mu, dtau)
        if dtau is None:
            alpha = 1.0
            for _ in range(31):
                if merit(u + alpha * du, mu + alpha * dmu) < base or alpha < 2.0**-30:
                    break
                alpha *= 0.5
        else:
            alpha = 1.0
        u = u + alpha * du
        mu = mu + alpha * dmu
        new = sup_residual(u, mu)
        history.append(float(new))
        if dtau is None:
            # a stalled line search hands over to pseudo-transient continuation
            stalled = stalled + 1 if new > 0.99 * res else 0
            if stalled >= 5:
                dtau = 1.0
                best, since_best = new, -1
        else:
            dtau = min(dtau * base / max(merit(u, mu), 1e-300), 1e12)
        res = new
        # a residual parked at the rounding floor ends the run instead of spinning
        if res < 0.99 * best:
            best, since_best = res, 0
        else:
            since_best += 1
    # report the strong residual of the unconstrained equation
    field_u = ScalarField(space, u.reshape(space.shape))
    final = float(np.abs(pde_residual(field_u, nl).values.ravel()[free]).max())
    return SolveOutcome(field_u, final, it, bool(final <= tol), history, bool(pin), initial_label)
