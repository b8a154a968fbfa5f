"""f-capacity of discrete capacitors and parabolicity verdicts."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .field_calculus import ScalarField, drift_laplacian, edge_weights, gradient, stiffness_matrix
from .model_space import Exhaustion, ModelSpace, Region, ball_volumes, boundary_area

DIVERGENT_RATIO = 0.75
GROWTH_MARGIN = 0.05


class Method(str, enum.Enum):
    CAPACITY_LIMIT = "CapacityLimit"
    GROWTH_CRITERION = "GrowthCriterion"


class Verdict(str, enum.Enum):
    PARABOLIC = "Parabolic"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True, eq=False)
class Capacitor:
    K: np.ndarray
    omega: np.ndarray
    phi: ScalarField
    energy: float
    harmonic_residual: float

    def summary(self) -> dict:
        return {
            "energy": self.energy,
            "harmonic_residual": self.harmonic_residual,
            "phi_min": float(self.phi.values.min()),
            "phi_max": float(self.phi.values.max()),
            "K_nodes": int(self.K.sum()),
            "omega_nodes": int(self.omega.sum()),
        }


@dataclass(frozen=True)
class ParabolicityVerdict:
    method: Method
    verdict: Verdict
    evidence: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"method": self.method.value, "verdict": self.verdict.value, "evidence": self.evidence}


def _as_mask(space: ModelSpace, region) -> np.ndarray:
    if isinstance(region, Region):
        return region.mask(space)
    m = np.asarray(region, dtype=bool)
    if m.shape != space.shape:
        raise ValueError("node set does not match the grid")
    return m


def solve_capacitor(space: ModelSpace, K, omega) -> Capacitor:
    """Discrete f-harmonic ``phi`` with ``phi = 1`` on ``K`` and ``phi = 0`` off ``omega``.

    Nodes of ``omega`` on the truncation boundary keep the natural (Neumann)
    condition of the weighted stiffness form.
    """
    k = _as_mask(space, K)
    o = _as_mask(space, omega)
    if not k.any():
        raise ValueError("invalid capacitor pair: K is empty")
    if np.any(k & ~o):
        raise ValueError("invalid capacitor pair: K is not inside omega")
    free = o & ~k
    S = stiffness_matrix(space)
    phi = k.astype(float).ravel()
    idx = np.flatnonzero(free.ravel())
    if idx.size:
        kid = np.flatnonzero(k.ravel())
        A = S[idx][:, idx].tocsc()
        rhs = -(S[idx][:, kid] @ np.ones(kid.size))
        phi[idx] = spla.splu(A).solve(rhs)
    phi_f = ScalarField(space, phi.reshape(space.shape))
    energy = float(phi @ (S @ phi))
    lap = drift_laplacian(phi_f).values
    resid = float(np.abs(lap[free]).max()) if free.any() else 0.0
    return Capacitor(k, o, phi_f, energy, resid)


def weighted_capacitor_energy(cap: Capacitor, weight: np.ndarray) -> float:
    """``int |grad phi|^2 weight``, with the weight averaged onto edges."""
    s = cap.phi.space
    c = edge_weights(s)
    d = gradient(cap.phi).components
    total = 0.0
    for i in range(s.n):
        if s.periodic[i]:
            wa = 0.5 * (weight + np.roll(weight, -1, axis=i))
        else:
            wa = 0.5 * (np.take(weight, np.arange(s.shape[i] - 1), axis=i)
                        + np.take(weight, np.arange(1, s.shape[i]), axis=i))
        total += float(np.sum(c[i] * d[i] ** 2 * wa))
    return total


def _limit_from_sequence(energies: np.ndarray) -> dict:
    """Aitken extrapolation of the resistance ``1/cap``.

    Resistance increments shrinking geometrically with ratio ``q`` give a
    finite limit; ``q >= 0.75`` (or fewer than three terms decreasing to
    nothing) is treated as divergent resistance, i.e. zero capacity.
    """
    rho = 1.0 / energies
    out = {"resistance": rho.tolist()}
    if rho.size < 3:
        out.update(ratio=None, limit=float(energies[-1]), divergent=False)
        return out
    d = np.diff(rho)
    if d[-2] <= 0:
        out.update(ratio=None, limit=float(energies[-1]), divergent=False)
        return out
    q = float(d[-1] / d[-2])
    out["ratio"] = q
    if q >= DIVERGENT_RATIO:
        out.update(limit=0.0, divergent=True)
    else:
        rho_inf = rho[-1] + d[-1] * q / (1.0 - q)
        out.update(limit=float(1.0 / rho_inf), divergent=False)
    return out


def capacity_limit(space: ModelSpace, K, exhaustion: Exhaustion, tol_cap: float | None = None) -> dict:
    """Capacitor energies along an exhaustion and an extrapolated limit."""
    masks = exhaustion.masks(space)
    k = _as_mask(space, K)
    if np.any(k & ~masks[0]):
        raise ValueError("K must lie inside the first exhaustion element")
    energies = np.array([solve_capacitor(space, k, m).energy for m in masks])
    lim = _limit_from_sequence(energies)
    tol = float(1e-3 * energies[0] if tol_cap is None else tol_cap)
    return {
        "sequence": energies.tolist(),
        "nonincreasing": bool(np.all(np.diff(energies) <= 1e-12 * energies[0])),
        "limit_estimate": lim["limit"],
        "resistance_ratio": lim["ratio"],
        "divergent_resistance": lim["divergent"],
        "tol_cap": tol,
        "zero_capacity": bool(lim["limit"] <= tol),
    }


def parabolicity_by_capacity(space: ModelSpace, K, exhaustion: Exhaustion, tol_cap: float | None = None) -> ParabolicityVerdict:
    res = capacity_limit(space, K, exhaustion, tol_cap)
    v = Verdict.PARABOLIC if res["zero_capacity"] else Verdict.INCONCLUSIVE
    return ParabolicityVerdict(Method.CAPACITY_LIMIT, v, res)


def _loglog_slope(r: np.ndarray, y: np.ndarray) -> float:
    ok = y > 0
    if ok.sum() < 2:
        return float("-inf")
    return float(np.polyfit(np.log(r[ok]), np.log(y[ok]), 1)[0])


def parabolicity_by_growth(space: ModelSpace, r_max: float, r0: float = 1.0, samples: int = 48) -> ParabolicityVerdict:
    """Volume/area growth test: ``int dr/L = inf`` or ``int r dr/V = inf`` implies parabolic.

    Divergence is read off a log-log fit over the last decade of radii:
    ``L`` growing at most like ``r^(1+margin)`` or ``V`` at most like
    ``r^(2+margin)``.  Never reports non-parabolicity.
    """
    if r_max < 2:
        raise ValueError("insufficient range: r_max must be at least 2")
    trunc = [t for t in space.truncation if t is not None]
    if trunc and r_max > min(trunc) + 1e-12:
        raise ValueError("r_max exceeds the truncated domain")
    h = max(space.spacing)
    r_top = r_max - h if trunc and r_max > min(trunc) - h else r_max
    r = np.geomspace(r0, r_top, samples)
    V = ball_volumes(space, r)
    L = np.array([boundary_area(space, float(x)) for x in r])
    inv_L = np.where(L > 0, 1.0 / np.where(L > 0, L, 1.0), np.inf)
    int_L = float(np.trapezoid(inv_L, r))
    int_V = float(np.trapezoid(r / V, r))
    lo = max(r0, r_top / 10.0) if r_top >= 10 * r0 else r0
    tail = r >= lo - 1e-12
    pL = _loglog_slope(r[tail], L[tail])
    pV = _loglog_slope(r[tail], V[tail])
    divergent_L = pL <= 1.0 + GROWTH_MARGIN
    divergent_V = pV <= 2.0 + GROWTH_MARGIN
    evidence = {
        "r": r.tolist(),
        "V": V.tolist(),
        "L": L.tolist(),
        "integral_dr_over_L": int_L,
        "integral_r_dr_over_V": int_V,
        "fit_window": [float(lo), float(r_top)],
        "L_exponent": pL,
        "V_exponent": pV,
        "L_criterion_divergent": bool(divergent_L),
        "V_criterion_divergent": bool(divergent_V),
        "lower_limit": r0,
    }
    v = Verdict.PARABOLIC if (divergent_L or divergent_V) else Verdict.INCONCLUSIVE
    return ParabolicityVerdict(Method.GROWTH_CRITERION, v, evidence)
