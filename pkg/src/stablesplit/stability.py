"""Stability operator ``J_f = -Lap_f - g'(u)``, its ground state and the Picone-type gaps.

Everything is assembled in weak form: the stiffness matrix ``S`` and the
diagonal mass ``M`` from :mod:`field_calculus`, so ``K_J = S - M diag(g'(u))``
and ``Q(h) = h^T K_J h`` exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field_calculus import (
    ScalarField,
    edge_weights,
    gradient,
    gradient_norm,
    hessian,
    node_gradient,
    ricci_f_form,
    stiffness_matrix,
)
from .model_space import ModelSpace
from .semilinear import Nonlinearity, NumericalFailure


class Positivity(str, enum.Enum):
    STRICTLY_POSITIVE = "StrictlyPositive"
    SIGN_CHANGING = "SignChanging"


@dataclass(frozen=True, eq=False)
class SpectralReport:
    lambda_min: float
    eigenfield: ScalarField
    positivity: Positivity
    stable: bool
    tol: float
    tol_stab: float
    residual: float
    iterations: int
    history: list = field(default_factory=list)

    def summary(self) -> dict:
        w = self.eigenfield.values
        return {
            "lambda_min": self.lambda_min,
            "positivity": self.positivity.value,
            "stable": self.stable,
            "tol": self.tol,
            "tol_stab": self.tol_stab,
            "residual": self.residual,
            "iterations": self.iterations,
            "eigenfield_min": float(w.min()),
            "eigenfield_max": float(w.max()),
        }


@dataclass(frozen=True)
class PiconeGapReport:
    lhs: float
    rhs: float
    gap: float
    supersolution_defect: float

    def summary(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "gap": self.gap, "supersolution_defect": self.supersolution_defect}


@dataclass(frozen=True, eq=False)
class RigidityGap:
    lhs: float
    rhs: float
    ratio_field: np.ma.MaskedArray

    def ratio_stats(self) -> dict:
        r = self.ratio_field.compressed()
        if r.size == 0:
            return {"count": 0, "mean": None, "std": None, "rel_std": None, "abs_c": None, "sign": None}
        mean = float(r.mean())
        std = float(r.std())
        return {
            "count": int(r.size),
            "mean": mean,
            "std": std,
            "rel_std": std / abs(mean) if mean else float("inf"),
            "abs_c": abs(mean),
            "sign": int(np.sign(mean)),
        }


# ------------------------------------------------------------------ assembly
def stability_matrix(u: ScalarField, nl: Nonlinearity) -> sp.csr_matrix:
    """Weak-form ``K_J = S - M diag(g'(u))`` (symmetric)."""
    m = u.space.node_measure.ravel()
    return (stiffness_matrix(u.space) - sp.diags(m * nl.dg(u.values.ravel()))).tocsr()


def apply_jf(u: ScalarField, nl: Nonlinearity, w: ScalarField) -> ScalarField:
    """Strong-form ``J_f w = -Lap_f w - g'(u) w``."""
    m = u.space.node_measure.ravel()
    return ScalarField(u.space, (stability_matrix(u, nl) @ w.values.ravel() / m).reshape(u.space.shape))


def _require_compact(h: ScalarField) -> None:
    s = h.space
    if all(s.periodic):
        return
    if np.any(h.values[s.boundary_mask()] != 0):
        raise ValueError("not compactly supported: test field is nonzero on the truncation boundary")


def stability_form(u: ScalarField, nl: Nonlinearity, h: ScalarField) -> float:
    """``Q(h) = int |grad h|^2 - int g'(u) h^2``."""
    _require_compact(h)
    v = h.values.ravel()
    return float(v @ (stability_matrix(u, nl) @ v))


# -------------------------------------------------------------- eigenproblem
def _inverse_iteration(K, m, max_iter, tol, shift_margin=None, start=None):
    """Smallest eigenpair of ``K x = lam diag(m) x`` by shifted inverse iteration."""
    N = m.size
    diag = K.diagonal() / m
    # Gershgorin lower bound of M^{-1/2} K M^{-1/2} keeps the shift below the spectrum
    off = np.asarray(abs(K - sp.diags(K.diagonal())).sum(axis=1)).ravel()
    lower = float(np.min(diag - off / m))
    delta = shift_margin if shift_margin is not None else 1e-2 * max(1.0, abs(lower))
    sigma = lower - delta
    A = (K - sigma * sp.diags(m)).tocsc()
    lu = spla.splu(A)
    x = np.ones(N) if start is None else np.asarray(start, float).ravel().copy()
    x /= np.sqrt(x @ (m * x))
    history = []
    lam = float(x @ (K @ x))
    best = np.inf
    since_best = 0
    for it in range(1, max_iter + 1):
        y = lu.solve(m * x)
        x = y / np.sqrt(y @ (m * y))
        Kx = K @ x
        lam = float(x @ Kx)
        r = Kx - lam * m * x
        res = float(np.sqrt(r @ (r / m)))
        history.append(res)
        if res <= tol * (abs(lam) + 1.0):
            return lam, x, res, it, history
        if res < 0.999 * best:
            best, since_best = res, 0
        else:
            since_best += 1
            if since_best >= 25:
                break
    raise NumericalFailure(
        f"inverse iteration stagnated after {len(history)} steps; residual history tail {history[-5:]}"
    )


def min_eigenpair(u: ScalarField, nl: Nonlinearity, tol: float = 1e-10, max_iter: int = 2000) -> SpectralReport:
    """Smallest eigenpair of ``J_f phi = lam phi`` in the weighted inner product."""
    s = u.space
    K = stability_matrix(u, nl)
    m = s.node_measure.ravel()
    lam, x, res, it, hist = _inverse_iteration(K, m, max_iter, tol)
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    dg = np.abs(nl.dg(u.values))
    # lambda is only known to the eigen tolerance, so the verdict margin never drops below it
    tol_stab = max(1e-6 * float(dg.max()) if dg.size else 0.0, tol)
    positivity = Positivity.STRICTLY_POSITIVE if x.min() > 0 else Positivity.SIGN_CHANGING
    return SpectralReport(
        lam, ScalarField(s, x.reshape(s.shape)), positivity, bool(lam >= -tol_stab), tol, tol_stab, res, it, hist
    )


def dirichlet_ground_state(u: ScalarField, nl: Nonlinearity, mask: np.ndarray, tol: float = 1e-10):
    """Ground state of ``J_f`` with zero values outside ``mask``; returns ``(lam, field)``."""
    s = u.space
    idx = np.flatnonzero(mask.ravel())
    K = stability_matrix(u, nl)[idx][:, idx]
    m = s.node_measure.ravel()[idx]
    lam, x, _, _, _ = _inverse_iteration(K.tocsr(), m, 2000, tol)
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    full = np.zeros(s.size)
    full[idx] = x
    return lam, ScalarField(s, full.reshape(s.shape))


def dirichlet_supersolution(u: ScalarField, nl: Nonlinearity, b: float, eta: float = 1e-3, w0: ScalarField | None = None):
    """Positive field that is a strict supersolution of ``J_f`` on ``|t| < b``.

    Built from the ground state on the slab ``|t| < b`` (which has a positive
    eigenvalue when the operator is stable) plus ``eta`` times a positive
    global field ``w0`` (the global ground state by default).
    """
    s = u.space
    if w0 is None:
        w0 = min_eigenpair(u, nl).eigenfield
    mask = np.abs(s.mesh[0]) < b
    _, wb = dirichlet_ground_state(u, nl, mask)
    scale = wb.values.max() / w0.values.max()
    return ScalarField(s, wb.values + eta * scale * w0.values)


def supersolution_defect(u: ScalarField, nl: Nonlinearity, w: ScalarField, where: np.ndarray | None = None) -> float:
    """``max (Lap_f w + g'(u) w)_+ / w``, optionally restricted to a node mask."""
    jw = apply_jf(u, nl, w).values
    d = np.maximum(-jw, 0.0) / w.values
    if where is not None:
        d = d[where]
    return float(d.max()) if d.size else 0.0


def _eps_w(w: ScalarField) -> float:
    return 1e-12 * float(np.abs(w.values).max())


def _require_positive(w: ScalarField) -> None:
    if w.values.min() <= _eps_w(w):
        raise ValueError("w not uniformly positive")


def _weighted_quotient_energy(w: np.ndarray, psi: np.ndarray, space: ModelSpace) -> float:
    """``sum_e c_e w_a w_b (D psi)^2``: the discrete ``int w^2 |grad psi|^2``."""
    c = edge_weights(space)
    gw = ScalarField(space, psi)
    dpsi = gradient(gw).components
    total = 0.0
    for i in range(space.n):
        if space.periodic[i]:
            ww = w * np.roll(w, -1, axis=i)
        else:
            ww = np.take(w, np.arange(space.shape[i] - 1), axis=i) * np.take(w, np.arange(1, space.shape[i]), axis=i)
        total += float(np.sum(c[i] * ww * dpsi[i] ** 2))
    return total


def _edge_avg(v: np.ndarray, space: ModelSpace, i: int) -> np.ndarray:
    if space.periodic[i]:
        return 0.5 * (v + np.roll(v, -1, axis=i))
    return 0.5 * (np.take(v, np.arange(space.shape[i] - 1), axis=i) + np.take(v, np.arange(1, space.shape[i]), axis=i))


def _weighted_gradient_energy(h: np.ndarray, weight: np.ndarray, space: ModelSpace) -> float:
    """``sum_e c_e (D h)^2 avg(weight)``: the discrete ``int |grad h|^2 weight``."""
    c = edge_weights(space)
    dh = gradient(ScalarField(space, h)).components
    return float(sum(np.sum(c[i] * dh[i] ** 2 * _edge_avg(weight, space, i)) for i in range(space.n)))


def picone_gap(u: ScalarField, nl: Nonlinearity, w: ScalarField, h: ScalarField) -> PiconeGapReport:
    """Both sides of ``int w^2 |grad(h/w)|^2 <= Q(h)`` and the supersolution defect on ``supp h``."""
    _require_positive(w)
    _require_compact(h)
    s = u.space
    lhs = _weighted_quotient_energy(w.values, h.values / w.values, s)
    rhs = stability_form(u, nl, h)
    support = h.values != 0
    return PiconeGapReport(lhs, rhs, rhs - lhs, supersolution_defect(u, nl, w, support))


def _second_order_density(u: ScalarField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``|Hess u|^2 + Ric_f(grad u, grad u) - |grad |grad u||^2`` with the Hessian mask."""
    s = u.space
    g = node_gradient(u)
    H = hessian(u)
    gn = gradient_norm(u)
    ggn = node_gradient(gn)
    dens = H.norm_sq() + ricci_f_form(s, g) - np.sum(ggn**2, axis=0)
    return dens, H.interior, gn.values


def _require_hessian_support(h: ScalarField, interior: np.ndarray) -> None:
    if np.any(h.values[~interior] != 0):
        raise ValueError("test field must vanish where the Hessian stencil is undefined")


def integral_inequality_gap(u: ScalarField, nl: Nonlinearity, w: ScalarField, h: ScalarField) -> float:
    """RHS minus LHS of the weighted Bochner-Picone inequality.

    ``LHS = int (|Hess u|^2 + Ric_f(grad u, grad u) - |grad|grad u||^2) h^2``,
    ``RHS = int |grad h|^2 |grad u|^2 - int w^2 |grad(h |grad u| / w)|^2``.
    """
    _require_positive(w)
    _require_compact(h)
    s = u.space
    dens, interior, gn = _second_order_density(u)
    _require_hessian_support(h, interior)
    hv = h.values
    lhs = float(np.sum(np.where(interior, dens, 0.0) * hv**2 * s.node_measure))
    rhs = _weighted_gradient_energy(hv, gn**2, s) - _weighted_quotient_energy(w.values, hv * gn / w.values, s)
    return rhs - lhs


def integral_gap_scale(u: ScalarField, h: ScalarField) -> float:
    """``int (|grad h|^2 + h^2) |grad u|^2``: the size against which second-order gaps are judged."""
    s = u.space
    gn2 = gradient_norm(u).values ** 2
    return _weighted_gradient_energy(h.values, gn2, s) + float(np.sum(h.values**2 * gn2 * s.node_measure))


def rigidity_gap(u: ScalarField, nl: Nonlinearity, h: ScalarField, spectral: SpectralReport | None = None) -> RigidityGap:
    """Both sides of ``int (|Hess u|^2 - |grad|grad u||^2 + Ric_f) h^2 <= 2 int |grad h|^2 |grad u|^2``.

    The ratio ``|grad u| / w`` uses the ground state of ``spectral`` and is
    masked outside regular nodes.
    """
    if spectral is None:
        spectral = min_eigenpair(u, nl)
    if spectral.positivity is not Positivity.STRICTLY_POSITIVE:
        raise ValueError("stability equivalence unavailable: no positive ground state")
    _require_compact(h)
    s = u.space
    dens, interior, gn = _second_order_density(u)
    _require_hessian_support(h, interior)
    hv = h.values
    lhs = float(np.sum(np.where(interior, dens, 0.0) * hv**2 * s.node_measure))
    rhs = 2.0 * _weighted_gradient_energy(hv, gn**2, s)
    w = spectral.eigenfield.values
    regular = (gn >= 1e-6 * gn.max()) if gn.max() > 0 else np.zeros(s.shape, bool)
    ratio = np.ma.masked_array(np.where(regular, gn / w, 0.0), mask=~regular)
    return RigidityGap(lhs, rhs, ratio)


# -------------------------------------------------------------- test fields
def random_test_field(space: ModelSpace, rng: np.random.Generator, support: np.ndarray, smooth: int = 2) -> ScalarField:
    """Random field vanishing outside ``support`` (a node mask), lightly smoothed."""
    v = rng.standard_normal(space.shape)
    for _ in range(smooth):
        acc = v.copy()
        for i in range(space.n):
            acc += np.roll(v, 1, axis=i) + np.roll(v, -1, axis=i)
        v = acc / (1 + 2 * space.n)
    return ScalarField(space, np.where(support, v, 0.0))


def plateau_cutoff(space: ModelSpace, inner: float, outer: float) -> ScalarField:
    """Piecewise-linear cutoff in ``|t|``: 1 on ``|t| <= inner``, 0 beyond ``outer``."""
    t = np.abs(space.mesh[0])
    return ScalarField(space, np.clip((outer - t) / (outer - inner), 0.0, 1.0))
