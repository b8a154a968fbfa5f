"""Level-set geometry, the unit normal flow and the splitting audit.

Node-level data (gradient, Hessian, gradient of ``|grad u|``) come from the
field calculus.  Level sets are sampled by linear interpolation along grid
edges, and every per-point quantity is computed from interpolated node data
in a tangent frame built by Gram-Schmidt against the unit normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .field_calculus import (
    HESSIAN_DEPTH,
    ScalarField,
    covariant_derivative,
    divergence_nodes,
    gradient_norm,
    hessian,
    node_gradient,
    ricci_f_form,
)
from .model_space import ModelSpace

EPS_REG = 1e-6


# ------------------------------------------------------------- node data
@dataclass(frozen=True, eq=False)
class _NodeData:
    grad: np.ndarray  # (n,)+S orthonormal components
    hess: np.ndarray  # (n,n)+S
    gnorm: np.ndarray
    grad_gnorm: np.ndarray  # (n,)+S
    valid: np.ndarray  # regular and Hessian-interior


def _node_data(u: ScalarField, region: np.ndarray | None = None) -> _NodeData:
    g = node_gradient(u)
    H = hessian(u)
    gn = gradient_norm(u)
    ggn = node_gradient(gn)
    gmax = float(gn.values.max())
    valid = H.interior & (gn.values >= EPS_REG * gmax) & (gmax > 0)
    if region is not None:
        valid &= region
    return _NodeData(g, H.full(), gn.values, ggn, valid)


def regular_mask(u: ScalarField) -> np.ndarray:
    gn = gradient_norm(u).values
    return gn >= EPS_REG * gn.max() if gn.max() > 0 else np.zeros(u.space.shape, bool)


def tangent_frame(nu: np.ndarray, rotation: np.ndarray | None = None) -> np.ndarray:
    """Orthonormal tangent frames, shape ``(P, n, n-1)``, for unit normals ``nu`` of shape ``(P, n)``.

    Gram-Schmidt on the columns of ``rotation`` (identity by default),
    skipping for each point the column most aligned with ``nu``.
    """
    P, n = nu.shape
    R = np.eye(n) if rotation is None else np.asarray(rotation, float)
    align = np.abs(nu @ R)
    drop = np.argmax(align, axis=1)
    frame = np.zeros((P, n, n - 1))
    k_out = np.zeros(P, dtype=int)
    for k in range(n):
        use = drop != k
        v = np.broadcast_to(R[:, k], (P, n)).copy()
        v -= np.sum(v * nu, axis=1, keepdims=True) * nu
        for j in range(n - 1):
            prev = frame[:, :, j]
            filled = (k_out > j)[:, None]
            v -= np.where(filled, np.sum(v * prev, axis=1, keepdims=True) * prev, 0.0)
        rows = np.flatnonzero(use)
        v[rows] /= np.linalg.norm(v[rows], axis=1, keepdims=True)
        frame[rows, :, k_out[rows]] = v[rows]
        k_out[rows] += 1
    return frame


def _level_geometry(grad, hess, ggn, rotation=None):
    """Per-point ``nu, A, H_t, |grad^T |grad u||`` and the Kato terms from point data.

    ``grad`` is ``(P, n)``, ``hess`` is ``(P, n, n)``, ``ggn`` is ``(P, n)``.
    """
    gn = np.linalg.norm(grad, axis=1)
    nu = grad / gn[:, None]
    n = grad.shape[1]
    if n == 1:
        E = np.zeros((grad.shape[0], 1, 0))
    else:
        E = tangent_frame(nu, rotation)
    HTT = np.einsum("pia,pij,pjb->pab", E, hess, E)
    A = -HTT / gn[:, None, None]
    Ht = np.trace(A, axis1=1, axis2=2)
    tang = np.einsum("pia,pi->pa", E, ggn)
    return nu, A, Ht, np.linalg.norm(tang, axis=1), HTT, gn


# --------------------------------------------------------------- Kato
def kato_fields(u: ScalarField, rotation: np.ndarray | None = None, region: np.ndarray | None = None):
    """Both Kato sides at every regular interior node, as masked arrays.

    ``lhs = |Hess u|^2 - |grad|grad u||^2`` and
    ``rhs = |grad u|^2 |A|^2 + |grad^T |grad u||^2`` where ``A`` and the
    tangential projection use the level-set frame.
    """
    s = u.space
    d = _node_data(u, region)
    idx = np.nonzero(d.valid)
    g = np.moveaxis(d.grad[(slice(None),) + idx], 0, -1)
    H = np.moveaxis(d.hess[(slice(None), slice(None)) + idx], (0, 1), (-2, -1))
    gg = np.moveaxis(d.grad_gnorm[(slice(None),) + idx], 0, -1)
    _, A, _, tang, HTT, gn = _level_geometry(g, H, gg, rotation)
    lhs_v = np.sum(H**2, axis=(1, 2)) - np.sum(gg**2, axis=1)
    rhs_v = gn**2 * np.sum(A**2, axis=(1, 2)) + tang**2
    lhs = np.ma.masked_all(s.shape)
    rhs = np.ma.masked_all(s.shape)
    lhs[idx] = lhs_v
    rhs[idx] = rhs_v
    return lhs, rhs


def kato_decomposition(u: ScalarField, node, rotation: np.ndarray | None = None) -> dict:
    """Kato identity terms at one node."""
    node = tuple(int(i) for i in node)
    s = u.space
    if not s.interior_mask(HESSIAN_DEPTH)[node]:
        raise ValueError("interior only: the Hessian stencil is undefined at this node")
    if not regular_mask(u)[node]:
        raise ValueError("critical point: decomposition undefined")
    d = _node_data(u)
    sel = (slice(None),) + node
    g = d.grad[sel][None]
    H = d.hess[(slice(None), slice(None)) + node][None]
    gg = d.grad_gnorm[sel][None]
    _, A, _, tang, _, gn = _level_geometry(g, H, gg, rotation)
    lhs = float(np.sum(H**2) - np.sum(gg**2))
    rhs = float(gn[0] ** 2 * np.sum(A**2) + tang[0] ** 2)
    return {"lhs": lhs, "rhs": rhs, "error": abs(lhs - rhs)}


def random_rotation(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


# --------------------------------------------------------------- level sets
@dataclass(frozen=True, eq=False)
class LevelSetSample:
    level: float
    positions: np.ndarray  # (P, n) coordinates
    weights: np.ndarray  # interpolation fraction along the crossing edge
    nu: np.ndarray  # (P, n)
    A: np.ndarray  # (P, n-1, n-1)
    H: np.ndarray  # (P,)
    tangential: np.ndarray  # (P,)
    gnorm: np.ndarray  # (P,)
    ricci_f: np.ndarray  # (P,) Ric_f(grad u, grad u)

    @property
    def size(self) -> int:
        return int(self.H.size)

    def gradient_constancy(self) -> float:
        if self.size == 0:
            raise ValueError("no regular points at level")
        m = float(self.gnorm.mean())
        return float(self.gnorm.std() / m)


def level_set_sample(u: ScalarField, level: float, region: np.ndarray | None = None,
                     rotation: np.ndarray | None = None, _data: _NodeData | None = None) -> LevelSetSample:
    """Crossings of ``{u = level}`` along grid edges whose two ends are regular interior nodes."""
    s = u.space
    d = _data if _data is not None else _node_data(u, region)
    v = u.values - level
    ric_nodes = ricci_f_form(s, d.grad)
    chunks = {k: [] for k in ("pos", "w", "g", "H", "gg", "ric")}
    for i in range(s.n):
        if s.periodic[i]:
            a_idx = np.arange(s.shape[i])
            b_idx = np.roll(a_idx, -1)
        else:
            a_idx = np.arange(s.shape[i] - 1)
            b_idx = a_idx + 1
        va, vb = np.take(v, a_idx, axis=i), np.take(v, b_idx, axis=i)
        ok = np.take(d.valid, a_idx, axis=i) & np.take(d.valid, b_idx, axis=i)
        cross = ok & (((va <= 0) & (vb > 0)) | ((vb <= 0) & (va > 0)))
        where = np.nonzero(cross)
        if where[0].size == 0:
            continue
        theta = va[where] / (va[where] - vb[where])
        B_nodes = tuple(b_idx[w] if k == i else w for k, w in enumerate(where))
        A_nodes = tuple(a_idx[w] if k == i else w for k, w in enumerate(where))

        def lerp(arr, lead):
            sa = arr[(slice(None),) * lead + A_nodes]
            sb = arr[(slice(None),) * lead + B_nodes]
            return (1 - theta) * sa + theta * sb

        pos = np.stack([s.coords[k][A_nodes[k]] for k in range(s.n)], axis=1)
        pos[:, i] += theta * s.spacing[i]
        chunks["pos"].append(pos)
        chunks["w"].append(theta)
        chunks["g"].append(np.moveaxis(lerp(d.grad, 1), 0, -1))
        chunks["H"].append(np.moveaxis(lerp(d.hess, 2), (0, 1), (-2, -1)))
        chunks["gg"].append(np.moveaxis(lerp(d.grad_gnorm, 1), 0, -1))
        chunks["ric"].append(lerp(ric_nodes, 0))
    n = s.n
    if not chunks["pos"]:
        empty = np.zeros((0,))
        return LevelSetSample(level, np.zeros((0, n)), empty, np.zeros((0, n)), np.zeros((0, n - 1, n - 1)),
                              empty, empty, empty, empty)
    g = np.concatenate(chunks["g"])
    H = np.concatenate(chunks["H"])
    gg = np.concatenate(chunks["gg"])
    nu, A, Ht, tang, _, gn = _level_geometry(g, H, gg, rotation)
    return LevelSetSample(level, np.concatenate(chunks["pos"]), np.concatenate(chunks["w"]), nu, A, Ht,
                          tang, gn, np.concatenate(chunks["ric"]))


def sample_levels(u: ScalarField, count: int, region: np.ndarray | None = None,
                  rotation: np.ndarray | None = None) -> list[LevelSetSample]:
    """``count`` levels equally spaced strictly inside the range of ``u`` on regular interior nodes."""
    d = _node_data(u, region)
    if not d.valid.any():
        raise ValueError("no regular points to sample")
    vals = u.values[d.valid]
    lo, hi = float(vals.min()), float(vals.max())
    levels = lo + (hi - lo) * (np.arange(count) + 0.5) / count
    return [level_set_sample(u, float(t), region, rotation, _data=d) for t in levels]


def umbilicity_defect(sample: LevelSetSample) -> float:
    """``max |A|^2 - H^2/(n-1)`` over the sample."""
    if sample.size == 0:
        raise ValueError("no regular points at level")
    k = sample.A.shape[1]
    if k == 0:
        return 0.0
    return float(np.max(np.sum(sample.A**2, axis=(1, 2)) - sample.H**2 / k))


def curvature_condition(u: ScalarField, sample: LevelSetSample, tol: float = 1e-8) -> dict:
    """Margin of ``Ric_f(grad u, grad u) >= -H^2/(n-1) |grad u|^2`` on the sample."""
    if sample.size == 0:
        return {"margin_min": None, "holds": True, "points": 0}
    k = max(sample.A.shape[1], 1)
    margin = sample.ricci_f + sample.H**2 / k * sample.gnorm**2
    mm = float(margin.min())
    return {"margin_min": mm, "holds": bool(mm >= -tol), "points": sample.size}


# ------------------------------------------------------------ lambda / Lie
def unit_normal(u: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """``nu = grad u / |grad u|`` at nodes (zero where not regular) and the regular mask."""
    g = node_gradient(u)
    gn = np.sqrt(np.sum(g**2, axis=0))
    reg = gn >= EPS_REG * gn.max() if gn.max() > 0 else np.zeros(u.space.shape, bool)
    nu = np.where(reg, g / np.where(reg, gn, 1.0), 0.0)
    return nu, reg


def _audit_mask(u: ScalarField, region: np.ndarray | None) -> np.ndarray:
    nu, reg = unit_normal(u)
    s = u.space
    m = reg & s.interior_mask(HESSIAN_DEPTH)
    # divergence stencils read neighbours, which must be regular too
    for i in range(s.n):
        m &= np.roll(reg, 1, axis=i) & np.roll(reg, -1, axis=i)
    if region is not None:
        m &= region
    return m


def lambda_field(u: ScalarField, region: np.ndarray | None = None) -> np.ma.MaskedArray:
    """``lambda = -div(nu)/(n-1)`` at regular interior nodes; masked elsewhere."""
    s = u.space
    if s.n < 2:
        raise ValueError("lambda field needs n >= 2")
    nu, _ = unit_normal(u)
    lam = -divergence_nodes(nu, s) / (s.n - 1)
    return np.ma.masked_array(lam, mask=~_audit_mask(u, region))


def lie_derivative_residual(u: ScalarField, region: np.ndarray | None = None) -> float:
    """``max |L_nu g - (-2 lambda (g - nu nu))|`` over frame pairs at regular interior nodes."""
    s = u.space
    nu, _ = unit_normal(u)
    D = covariant_derivative(nu, s)
    lie = D + np.swapaxes(D, 0, 1)
    lam = -np.trace(D, axis1=0, axis2=1) / (s.n - 1)
    eye = np.eye(s.n).reshape((s.n, s.n) + (1,) * s.n)
    target = -2.0 * lam * (eye - np.einsum("i...,j...->ij...", nu, nu))
    mask = _audit_mask(u, region)
    if not mask.any():
        return 0.0
    return float(np.abs(lie - target)[:, :, mask].max())


# -------------------------------------------------------------------- flow
class _Interpolator:
    """Multilinear interpolation of node arrays with periodic wrap."""

    def __init__(self, space: ModelSpace):
        self.s = space

    def locate(self, x):
        s = self.s
        base, frac = [], []
        for i in range(s.n):
            q = (x[i] - s.lower[i]) / s.spacing[i]
            if s.periodic[i]:
                k = int(np.floor(q))
                base.append(k % s.shape[i])
            else:
                if q < 0 or q > s.shape[i] - 1:
                    raise ValueError("outside the truncated domain")
                k = min(int(np.floor(q)), s.shape[i] - 2)
                base.append(k)
            frac.append(q - np.floor(q) if s.periodic[i] else q - k)
        return base, frac

    def corners(self, base):
        s = self.s
        out = []
        for bits in range(2**s.n):
            idx, wsel = [], []
            for i in range(s.n):
                b = (bits >> i) & 1
                idx.append((base[i] + b) % s.shape[i] if s.periodic[i] else base[i] + b)
                wsel.append(b)
            out.append((tuple(idx), wsel))
        return out

    def __call__(self, arr, x, ok=None):
        base, frac = self.locate(x)
        val = 0.0
        for idx, bits in self.corners(base):
            if ok is not None and not ok[idx]:
                raise ValueError("entered the non-regular zone")
            wgt = np.prod([f if b else 1 - f for f, b in zip(frac, bits)])
            val = val + wgt * arr[(Ellipsis,) + idx]
        return val


def fit_beta(u: ScalarField, bins: int = 2000, region: np.ndarray | None = None) -> dict:
    """Piecewise-linear ``beta`` with ``|grad u| ~ beta(u)`` from equal-count bins.

    Knots are the bin means of ``(u, |grad u|)``; ``scatter`` is the largest
    within-bin standard deviation of the relative residual about the fit.
    """
    d = _node_data(u, region)
    vals = u.values[d.valid]
    gn = d.gnorm[d.valid]
    order = np.argsort(vals, kind="stable")
    groups = [g for g in np.array_split(order, min(bins, max(2, vals.size // 2))) if g.size]
    knots_u = np.array([vals[g].mean() for g in groups])
    knots_b = np.array([gn[g].mean() for g in groups])
    rel = (gn - np.interp(vals, knots_u, knots_b)) / gn
    scatter = np.array([rel[g].std() for g in groups])
    monotone_knots = bool(np.all(np.diff(knots_u) > 0))
    return {"u": knots_u, "beta": knots_b, "scatter": scatter, "scatter_max": float(scatter.max()),
            "knots_increasing": monotone_knots}


def _inverse_beta_integral(beta: dict, a: float, b: float, pts: int = 20001) -> float:
    xi = np.linspace(a, b, pts)
    vals = 1.0 / np.interp(xi, beta["u"], beta["beta"])
    return float(np.trapezoid(vals, xi))


def flow_audit(u: ScalarField, seeds, t_span: float, steps: int = 200, beta: dict | None = None,
               region: np.ndarray | None = None) -> dict:
    """Integrate ``x' = nu(x)`` from each seed with classical RK4.

    Reports the geodesic residual ``|nabla_nu nu|`` along trajectories, the
    transport error ``|t - int du/beta(u)|`` and the spread of final values
    among seeds that start on a common level.
    """
    s = u.space
    nu, reg = unit_normal(u)
    ok = reg.copy()
    em = np.exp(-s._axis(s.phi))
    vel = nu.copy()
    vel[1:] = vel[1:] * em
    D = covariant_derivative(nu, s)
    acc = np.sqrt(np.sum(np.einsum("kj...,j...->k...", D, nu) ** 2, axis=0))
    interp = _Interpolator(s)
    if beta is None:
        beta = fit_beta(u, region=region)
    dt = t_span / steps
    geo_max, transport_max = 0.0, 0.0
    starts, finals, logs = [], [], []
    for sidx, seed in enumerate(seeds):
        x = np.asarray(seed, float).copy()
        try:
            u0 = float(interp(u.values, x, ok))
            log = [(0.0, *x, u0)]
            geo = float(interp(acc, x, ok))
            for step in range(steps):
                k1 = interp(vel, x, ok)
                k2 = interp(vel, x + 0.5 * dt * k1, ok)
                k3 = interp(vel, x + 0.5 * dt * k2, ok)
                k4 = interp(vel, x + dt * k3, ok)
                x = x + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
                geo = max(geo, float(interp(acc, x, ok)))
                log.append(((step + 1) * dt, *x, float(interp(u.values, x, ok))))
            u1 = float(interp(u.values, x, ok))
        except ValueError as exc:
            raise ValueError(f"seed {sidx} at {list(map(float, seed))}: {exc}") from exc
        transport = abs(t_span - _inverse_beta_integral(beta, u0, u1))
        geo_max = max(geo_max, geo)
        transport_max = max(transport_max, transport)
        starts.append(u0)
        finals.append(u1)
        logs.append(np.array(log))
    starts, finals = np.array(starts), np.array(finals)
    spread = 0.0
    scale = max(1.0, float(np.abs(u.values).max()))
    keys = np.round(starts / scale, 8)
    for k in np.unique(keys):
        grp = finals[keys == k]
        spread = max(spread, float(grp.max() - grp.min()))
    return {
        "geodesic_residual_max": geo_max,
        "transport_error_max": transport_max,
        "level_spread_max": spread,
        "beta_scatter_max": beta["scatter_max"],
        "trajectories": logs,
    }


# ------------------------------------------------------------- audit
DEFAULT_TOLS = {
    "min_gradient_rel": 1e-6,
    "levelset_constancy": 1e-4,
    "umbilicity": 1e-4,
    "lambda": 1e-4,
    "ratio_constancy": 1e-3,
    "fiber_dependence": 1e-8,
    "k_std": 1e-4,
    "warp": 1e-4,
    "ode_residual": 1e-3,
    "geodesic": 1e-4,
    "lie": 1e-4,
    "transport": 1e-3,
    "curvature_margin": 1e-8,
}


@dataclass(frozen=True, eq=False)
class SplittingReport:
    stats: dict
    verdicts: list
    tables: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts)

    def failed(self) -> list[str]:
        return [v["name"] for v in self.verdicts if not v["passed"]]

    def summary(self) -> dict:
        return {"stats": self.stats, "verdicts": self.verdicts, "passed": self.passed}


def fiber_average(u: ScalarField) -> np.ndarray:
    s = u.space
    return u.values.reshape(s.shape[0], -1).mean(axis=1) if s.n > 1 else u.values.copy()


def profile_ode_residual(t: np.ndarray, y: np.ndarray, k: float, g) -> np.ndarray:
    h = t[1] - t[0]
    ypp = (y[2:] - 2 * y[1:-1] + y[:-2]) / h**2
    yp = (y[2:] - y[:-2]) / (2 * h)
    return -ypp + k * yp - g(y[1:-1])


def default_region(space: ModelSpace, fraction: float = 0.5) -> np.ndarray:
    """Nodes with ``|t| <= fraction * T``: statistics stay clear of the truncation layer."""
    if space.T is None:
        return np.ones(space.shape, bool)
    return np.abs(space.mesh[0]) <= fraction * space.T + 1e-9 * space.spacing[0]


def front_region(u: ScalarField, half_width: float, end_margin: float | None = None) -> np.ndarray:
    """Axis slab of ``half_width`` around the steepest point of the fiber-averaged profile.

    The slab is clipped ``end_margin`` (default: the Hessian depth plus two
    cells) short of the truncation ends.
    """
    s = u.space
    if s.T is None:
        return np.ones(s.shape, bool)
    t = s.coords[0]
    y = fiber_average(u)
    t_star = float(t[np.argmax(np.abs(np.gradient(y, t)))])
    margin = (HESSIAN_DEPTH + 2) * s.spacing[0] if end_margin is None else end_margin
    lo = max(t_star - half_width, -s.T + margin)
    hi = min(t_star + half_width, s.T - margin)
    eps = 1e-9 * s.spacing[0]
    return (s.mesh[0] >= lo - eps) & (s.mesh[0] <= hi + eps)


def _verdict(name, statistic, value, threshold, passed):
    return {"name": name, "statistic": statistic, "value": value, "threshold": threshold, "passed": bool(passed)}


def splitting_audit(u: ScalarField, nl, spectral, levels: int = 8, seeds: int = 8,
                    tols: dict | None = None, region: np.ndarray | None = None,
                    rotation_seed: int | None = None) -> SplittingReport:
    """Aggregate the level-set, flow and profile statistics into named verdicts."""
    from .stability import Positivity

    s = u.space
    if s.n < 2:
        raise ValueError("the splitting audit needs n >= 2")
    tol = dict(DEFAULT_TOLS)
    tol.update(tols or {})
    region = default_region(s) if region is None else region
    rotation = None if rotation_seed is None else random_rotation(s.n, rotation_seed)
    d = _node_data(u, region)
    gn = d.gnorm
    gmax = float(gn.max())
    stats: dict = {}
    tables: dict = {}

    in_region = region & s.interior_mask(HESSIAN_DEPTH)
    stats["min_gradient"] = float(gn[in_region].min())
    stats["max_gradient"] = gmax

    samples = sample_levels(u, levels, region, rotation)
    per_level = []
    for smp in samples:
        if smp.size == 0:
            continue
        cc = curvature_condition(u, smp, tol["curvature_margin"])
        per_level.append({
            "level": smp.level,
            "points": smp.size,
            "gradient_constancy": smp.gradient_constancy(),
            "umbilicity_defect": umbilicity_defect(smp),
            "mean_curvature_max": float(np.abs(smp.H).max()),
            "margin_min": cc["margin_min"],
        })
    tables["levels"] = per_level
    stats["levelset_constancy"] = max(r["gradient_constancy"] for r in per_level)
    stats["umbilicity_defect_max"] = max(r["umbilicity_defect"] for r in per_level)
    stats["curvature_margin_min"] = min(r["margin_min"] for r in per_level)

    lam = lambda_field(u, region)
    lam0 = s._axis(-s.dphi)  # declared fiber-scaling rate
    lam_err = np.abs(lam - lam0)
    stats["lambda_mean"] = float(lam.mean())
    stats["lambda_max_abs"] = float(np.abs(lam).max())
    stats["lambda_error_max"] = float(lam_err.max())

    # warp reconstruction from the fiber-averaged lambda, trapezoid from t = 0
    t = s.coords[0]
    rows = lam.mask.reshape(s.shape[0], -1).all(axis=1)
    lam_bar = np.ma.masked_array(lam.reshape(s.shape[0], -1).mean(axis=1), mask=rows)
    # anchor at the audited row nearest the center
    live = np.flatnonzero(~np.ma.getmaskarray(lam_bar))
    c0 = int(live[np.argmin(np.abs(live - s.center_index[0]))]) if live.size else s.center_index[0]
    lo = c0
    while lo > 0 and not lam_bar.mask[lo - 1]:
        lo -= 1
    hi = c0
    while hi < s.shape[0] - 1 and not lam_bar.mask[hi + 1]:
        hi += 1
    if lam_bar.mask[c0]:
        stats["warp_error_max"] = float("inf")
    else:
        lb = lam_bar.data[lo:hi + 1]
        tt = t[lo:hi + 1]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (lb[1:] + lb[:-1]) * np.diff(tt))])
        cum -= cum[c0 - lo]
        declared = np.exp(2.0 * (s.phi[lo:hi + 1] - s.phi[c0]))
        warp = np.exp(-2.0 * cum)
        stats["warp_error_max"] = float(np.abs(warp - declared).max() / declared.max())
        tables["warp"] = {"t": tt.tolist(), "reconstructed": warp.tolist(), "declared": declared.tolist()}

    # |grad u| / w
    w = spectral.eigenfield.values
    if spectral.positivity is Positivity.STRICTLY_POSITIVE:
        ratio = (gn / w)[d.valid]
        mean = float(ratio.mean())
        stats["ratio_abs_c"] = abs(mean)
        stats["ratio_sign"] = int(np.sign(mean))
        stats["ratio_constancy"] = float(ratio.std() / abs(mean))
    else:
        stats["ratio_abs_c"] = None
        stats["ratio_sign"] = None
        stats["ratio_constancy"] = float("inf")

    # fiber dependence over audited t-slices
    slab = region.reshape(s.shape[0], -1).all(axis=1)
    fiber_std = u.values.reshape(s.shape[0], -1).std(axis=1)
    stats["fiber_dependence"] = float(fiber_std[slab].max())

    nu, _ = unit_normal(u)
    k_field = np.sum(s.grad_f * nu, axis=0)[d.valid]
    k_hat = float(k_field.mean())
    stats["k_mean"] = k_hat
    stats["k_std"] = float(k_field.std())

    y = fiber_average(u)
    res = profile_ode_residual(t, y, k_hat, nl.g)
    inner = slab[1:-1]
    stats["ode_residual"] = float(np.abs(res[inner]).max())
    tables["profile"] = {"t": t.tolist(), "y": y.tolist()}

    stats["lie_residual_max"] = lie_derivative_residual(u, region)

    # flow seeds: a common level set a quarter into the audited slab, spread along the first fiber
    t_in = t[slab]
    base_t = float(t_in.min() + 0.25 * (t_in.max() - t_in.min()))
    span = float(0.5 * (t_in.max() - t_in.min()))
    seeds_list = []
    for j in range(seeds):
        x = [base_t] + [s.coords[i][0] + (j + 0.5) / seeds * s.period(i) if i == 1 else s.center[i]
                        for i in range(1, s.n)]
        seeds_list.append(x)
    flow = flow_audit(u, seeds_list, span, region=region)
    stats["geodesic_residual_max"] = flow["geodesic_residual_max"]
    stats["transport_error_max"] = flow["transport_error_max"]
    stats["level_spread_max"] = flow["level_spread_max"]
    stats["beta_scatter_max"] = flow["beta_scatter_max"]
    tables["trajectories"] = [tr.tolist() for tr in flow["trajectories"]]

    V = [
        _verdict("no_critical_points", "min_gradient / max_gradient", stats["min_gradient"] / gmax,
                 tol["min_gradient_rel"], stats["min_gradient"] >= tol["min_gradient_rel"] * gmax),
        _verdict("levelsets_constant_gradient", "levelset_constancy", stats["levelset_constancy"],
                 tol["levelset_constancy"], stats["levelset_constancy"] <= tol["levelset_constancy"]),
        _verdict("totally_umbilical", "umbilicity_defect_max", stats["umbilicity_defect_max"],
                 tol["umbilicity"], stats["umbilicity_defect_max"] <= tol["umbilicity"]),
        _verdict("curvature_condition", "curvature_margin_min", stats["curvature_margin_min"],
                 -tol["curvature_margin"], stats["curvature_margin_min"] >= -tol["curvature_margin"]),
        _verdict("lambda_matches_warp", "lambda_error_max", stats["lambda_error_max"], tol["lambda"],
                 stats["lambda_error_max"] <= tol["lambda"]),
        _verdict("warp_reconstruction", "warp_error_max", stats["warp_error_max"], tol["warp"],
                 stats["warp_error_max"] <= tol["warp"]),
        _verdict("gradient_proportional_to_ground_state", "ratio_constancy", stats["ratio_constancy"],
                 tol["ratio_constancy"], stats["ratio_constancy"] <= tol["ratio_constancy"]),
        _verdict("depends_only_on_t", "fiber_dependence", stats["fiber_dependence"], tol["fiber_dependence"],
                 stats["fiber_dependence"] <= tol["fiber_dependence"]),
        _verdict("drift_constant_along_normal", "k_std", stats["k_std"], tol["k_std"],
                 stats["k_std"] <= tol["k_std"]),
        _verdict("profile_solves_ode", "ode_residual", stats["ode_residual"], tol["ode_residual"],
                 stats["ode_residual"] <= tol["ode_residual"]),
        _verdict("normal_flow_geodesic", "geodesic_residual_max", stats["geodesic_residual_max"],
                 tol["geodesic"], stats["geodesic_residual_max"] <= tol["geodesic"]),
        _verdict("lie_derivative_identity", "lie_residual_max", stats["lie_residual_max"], tol["lie"],
                 stats["lie_residual_max"] <= tol["lie"]),
        _verdict("flow_transports_levels", "transport_error_max", stats["transport_error_max"],
                 tol["transport"], stats["transport_error_max"] <= tol["transport"]),
    ]
    return SplittingReport(stats, V, tables)
