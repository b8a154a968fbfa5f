"""Discretized weighted model manifolds.

A :class:`ModelSpace` is a uniform tensor grid carrying a Riemannian metric of
the form ``dt^2 + exp(2 phi(t)) |dtheta|^2`` (``phi = 0`` for the flat
families) and a density ``exp(-f)``.  Direction 0 is the axis ``t``; for the
weighted line, cylinder and warped product it is truncated to ``[-T, T]``,
while the fiber directions are periodic.  Flat boxes may mix periodic and
truncated directions freely.

Everything downstream (field calculus, solvers, audits) reads geometry from
the node arrays sampled here, so the closed-form data is evaluated exactly
once, at construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P


class Family(str, enum.Enum):
    WEIGHTED_LINE = "weighted_line"
    FLAT_BOX = "flat_box"
    CYLINDER = "cylinder"
    WARPED_PRODUCT = "warped_product"


@dataclass(frozen=True)
class DensitySpec:
    """Closed-form density ``f`` with its gradient and Hessian.

    ``kind`` is one of ``zero``, ``gaussian``, ``linear_slope``,
    ``polynomial`` or ``custom``.  Presets depend on the axis coordinate
    (``gaussian`` uses every truncated coordinate).  Custom densities supply
    three callables taking a tuple of coordinate arrays and returning
    ``f``, the list of partials and the nested list of second partials.
    """

    kind: str = "zero"
    params: tuple[float, ...] = ()
    f: Callable | None = field(default=None, compare=False, repr=False)
    grad_f: Callable | None = field(default=None, compare=False, repr=False)
    hess_f: Callable | None = field(default=None, compare=False, repr=False)

    @classmethod
    def zero(cls) -> "DensitySpec":
        return cls("zero")

    @classmethod
    def gaussian(cls) -> "DensitySpec":
        return cls("gaussian")

    @classmethod
    def linear_slope(cls, k: float) -> "DensitySpec":
        return cls("linear_slope", (float(k),))

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "DensitySpec":
        return cls("polynomial", tuple(float(c) for c in coefficients))

    @classmethod
    def custom(cls, f, grad_f, hess_f) -> "DensitySpec":
        return cls("custom", (), f, grad_f, hess_f)

    @classmethod
    def parse(cls, text: str) -> "DensitySpec":
        """Parse ``zero | gaussian | linear_slope k | polynomial c0,c1,...``."""
        parts = text.replace(",", " ").split()
        if not parts:
            raise ValueError("empty density specification")
        kind, args = parts[0].lower(), [float(a) for a in parts[1:]]
        if kind == "zero" and not args:
            return cls.zero()
        if kind == "gaussian" and not args:
            return cls.gaussian()
        if kind == "linear_slope" and len(args) == 1:
            return cls.linear_slope(args[0])
        if kind in ("polynomial", "custom") and args:
            return cls.polynomial(args)
        raise ValueError(f"unrecognised density specification {text!r}")

    def describe(self) -> str:
        if self.kind in ("zero", "gaussian"):
            return self.kind
        if self.kind == "linear_slope":
            return f"linear_slope {self.params[0]!r}"
        if self.kind == "polynomial":
            return "polynomial " + ",".join(repr(c) for c in self.params)
        return "custom"

    def evaluate(self, x: tuple[np.ndarray, ...], periodic: Sequence[bool]):
        """Return ``(f, grad, hess)`` with shapes ``S``, ``(n,)+S``, ``(n,n)+S``."""
        n = len(x)
        shape = np.broadcast(*x).shape if n > 1 else x[0].shape
        zeros = np.zeros(shape)
        grad = np.zeros((n,) + shape)
        hess = np.zeros((n, n) + shape)
        if self.kind == "zero":
            return zeros, grad, hess
        if self.kind == "gaussian":
            f = zeros.copy()
            for i in range(n):
                if not periodic[i]:
                    f = f + 0.5 * x[i] ** 2
                    grad[i] = x[i]
                    hess[i, i] = 1.0
            return f, grad, hess
        if self.kind in ("linear_slope", "polynomial"):
            c = (0.0, self.params[0]) if self.kind == "linear_slope" else self.params
            t = x[0]
            f = P.polyval(t, c) + zeros
            grad[0] = P.polyval(t, P.polyder(c)) + zeros
            hess[0, 0] = P.polyval(t, P.polyder(c, 2)) + zeros
            return f, grad, hess
        if self.kind == "custom":
            f = np.asarray(self.f(x), dtype=float) + zeros
            g = self.grad_f(x)
            h = self.hess_f(x)
            for i in range(n):
                grad[i] = g[i]
                for j in range(n):
                    hess[i, j] = h[i][j]
            return f, grad, hess
        raise ValueError(f"unknown density kind {self.kind!r}")


def _spacings(h, n: int) -> list[float]:
    """One spacing per direction; a scalar or a single entry is broadcast."""
    hs = [float(h)] if np.isscalar(h) else list(map(float, h))
    if len(hs) == 1:
        hs = hs * n
    if len(hs) != n:
        raise ValueError(f"expected 1 or {n} grid spacings, got {len(hs)}")
    return hs


@dataclass(frozen=True)
class Region:
    """A node subset: geodesic ball, coordinate box, the full grid or a mask."""

    kind: str
    center: tuple[float, ...] | None = None
    radius: float | None = None
    closed: bool = True
    bounds: tuple[tuple[float | None, float | None], ...] | None = None
    node_mask: np.ndarray | None = field(default=None, compare=False, repr=False)

    @classmethod
    def ball(cls, radius: float, center=None, closed: bool = True) -> "Region":
        return cls("ball", None if center is None else tuple(map(float, center)), float(radius), closed)

    @classmethod
    def box(cls, bounds) -> "Region":
        return cls("box", bounds=tuple(tuple(b) if b is not None else (None, None) for b in bounds))

    @classmethod
    def full(cls) -> "Region":
        return cls("full")

    @classmethod
    def nodes(cls, mask: np.ndarray) -> "Region":
        return cls("nodes", node_mask=np.asarray(mask, dtype=bool))

    def mask(self, space: "ModelSpace") -> np.ndarray:
        space.check_region(self)
        if self.kind == "full":
            return np.ones(space.shape, dtype=bool)
        if self.kind == "nodes":
            return self.node_mask.copy()
        if self.kind == "ball":
            d = space.distance_from(self.center)
            # tolerance keeps node-aligned radii deterministic
            eps = 1e-9 * max(space.spacing)
            return d <= self.radius + eps if self.closed else d < self.radius - eps
        m = np.ones(space.shape, dtype=bool)
        eps = 1e-9 * max(space.spacing)
        for i, (lo, hi) in enumerate(self.bounds):
            xi = space.mesh[i]
            if lo is not None:
                m &= xi >= lo - eps
            if hi is not None:
                m &= xi <= hi + eps
        return m


class ModelSpace:
    """Uniform grid on a weighted model manifold.

    Use the family constructors (:meth:`weighted_line`, :meth:`flat_box`,
    :meth:`cylinder`, :meth:`warped_product`) or :meth:`from_config`.
    Instances are treated as immutable; derived arrays are cached.
    """

    def __init__(
        self,
        family: Family,
        counts: Sequence[int],
        spacing: Sequence[float],
        periodic: Sequence[bool],
        lower: Sequence[float],
        density: DensitySpec | None = None,
        warp_lambda: Sequence[float] = (),
        config: dict | None = None,
    ):
        self.family = Family(family)
        self.shape = tuple(int(c) for c in counts)
        self.spacing = tuple(float(h) for h in spacing)
        self.periodic = tuple(bool(p) for p in periodic)
        self.lower = tuple(float(a) for a in lower)
        self.density = density or DensitySpec.zero()
        self.warp_lambda = tuple(float(c) for c in warp_lambda)
        self.config = dict(config or {})
        self.n = len(self.shape)
        if not (len(self.spacing) == len(self.periodic) == len(self.lower) == self.n):
            raise ValueError("per-direction data must have one entry per dimension")
        if any(h <= 0 for h in self.spacing):
            raise ValueError("grid spacings must be strictly positive")
        if any(c < 2 for c in self.shape):
            raise ValueError("every direction needs at least two nodes")
        if self.warp_lambda and self.family is not Family.WARPED_PRODUCT:
            raise ValueError("warp_lambda is only meaningful for warped products")
        self._sample_geometry()

    # ---------------------------------------------------------------- builders
    @staticmethod
    def _axis_counts(T: float, h: float) -> int:
        cells = 2.0 * T / h
        if abs(cells - round(cells)) > 1e-8 * max(1.0, cells) or round(cells) % 2:
            raise ValueError(f"axis extent T={T} must be an integer number of cells h={h}")
        return int(round(cells)) + 1

    @staticmethod
    def _fiber_counts(L: float, h: float) -> int:
        cells = L / h
        if abs(cells - round(cells)) > 1e-8 * max(1.0, cells):
            raise ValueError(f"periodic length {L} is not an integer number of cells h={h}")
        return int(round(cells))

    @classmethod
    def weighted_line(cls, T: float, h: float, density: DensitySpec | None = None) -> "ModelSpace":
        cfg = {"family": "weighted_line", "n": 1, "T": T, "h": [h]}
        return cls(Family.WEIGHTED_LINE, [cls._axis_counts(T, h)], [h], [False], [-T], density, (), cfg)

    @classmethod
    def flat_box(cls, extents, h, periodic=None, density: DensitySpec | None = None) -> "ModelSpace":
        """Flat box; a truncated direction with extent ``a`` spans ``[-a, a]``,
        a periodic one with extent ``L`` spans ``[0, L)``."""
        extents = list(map(float, extents))
        n = len(extents)
        hs = _spacings(h, n)
        periodic = [False] * n if periodic is None else list(periodic)
        counts, lower = [], []
        for a, hi, p in zip(extents, hs, periodic):
            if p:
                counts.append(cls._fiber_counts(a, hi))
                lower.append(0.0)
            else:
                counts.append(cls._axis_counts(a, hi))
                lower.append(-a)
        cfg = {"family": "flat_box", "n": n, "extents": extents, "h": hs, "periodic": periodic}
        return cls(Family.FLAT_BOX, counts, hs, periodic, lower, density, (), cfg)

    @classmethod
    def cylinder(cls, T, h, fiber_lengths, density: DensitySpec | None = None) -> "ModelSpace":
        fibers = [float(L) for L in np.atleast_1d(fiber_lengths)]
        n = 1 + len(fibers)
        hs = _spacings(h, n)
        counts = [cls._axis_counts(T, hs[0])] + [cls._fiber_counts(L, hi) for L, hi in zip(fibers, hs[1:])]
        cfg = {"family": "cylinder", "n": n, "T": T, "h": hs, "fiber_lengths": fibers}
        return cls(Family.CYLINDER, counts, hs, [False] + [True] * len(fibers), [-T] + [0.0] * len(fibers), density, (), cfg)

    @classmethod
    def warped_product(cls, T, h, fiber_lengths, warp_lambda, density: DensitySpec | None = None) -> "ModelSpace":
        """Metric ``dt^2 + exp(-2 int_0^t lam) g_fiber`` with ``lam`` a polynomial in t."""
        fibers = [float(L) for L in np.atleast_1d(fiber_lengths)]
        n = 1 + len(fibers)
        hs = _spacings(h, n)
        counts = [cls._axis_counts(T, hs[0])] + [cls._fiber_counts(L, hi) for L, hi in zip(fibers, hs[1:])]
        cfg = {"family": "warped_product", "n": n, "T": T, "h": hs, "fiber_lengths": fibers,
               "warp_lambda": list(map(float, warp_lambda))}
        return cls(Family.WARPED_PRODUCT, counts, hs, [False] + [True] * len(fibers),
                   [-T] + [0.0] * len(fibers), density, warp_lambda, cfg)

    @classmethod
    def from_config(cls, cfg: dict) -> "ModelSpace":
        """Build from a resolved config mapping (see :mod:`stablesplit.config`)."""
        family = Family(cfg["family"])
        density = cfg.get("density")
        if isinstance(density, str):
            density = DensitySpec.parse(density)
        h = cfg["h"]
        if family is Family.WEIGHTED_LINE:
            space = cls.weighted_line(cfg["T"], h[0] if not np.isscalar(h) else h, density)
        elif family is Family.FLAT_BOX:
            space = cls.flat_box(cfg["extents"], h, cfg.get("periodic"), density)
        elif family is Family.CYLINDER:
            space = cls.cylinder(cfg["T"], h, cfg["fiber_lengths"], density)
        else:
            space = cls.warped_product(cfg["T"], h, cfg["fiber_lengths"], cfg.get("warp_lambda", ()), density)
        if "n" in cfg and int(cfg["n"]) != space.n:
            raise ValueError(f"n={cfg['n']} disagrees with the family layout (n={space.n})")
        return space

    def to_config(self) -> dict:
        cfg = dict(self.config)
        cfg["density"] = self.density.describe()
        return cfg

    # ---------------------------------------------------------------- geometry
    def _sample_geometry(self) -> None:
        n, shape = self.n, self.shape
        self.coords = tuple(self.lower[i] + self.spacing[i] * np.arange(shape[i]) for i in range(n))
        self.mesh = tuple(np.meshgrid(*self.coords, indexing="ij"))
        t = self.coords[0]
        if self.family is Family.WARPED_PRODUCT:
            lam = np.asarray(self.warp_lambda or (0.0,))
            phi_c = -P.polyint(lam)
            self.phi = P.polyval(t, phi_c)
            self.dphi = -P.polyval(t, lam)
            self.ddphi = -P.polyval(t, P.polyder(lam)) if len(lam) > 1 else np.zeros_like(t)
        else:
            self.phi = np.zeros_like(t)
            self.dphi = np.zeros_like(t)
            self.ddphi = np.zeros_like(t)

        f, grad_c, hess_c = self.density.evaluate(self.mesh, self.periodic)
        if not np.all(np.isfinite(f)):
            raise ValueError("density is not finite on the grid")
        self.f = f
        m = n - 1
        phi = self._axis(self.phi)
        dphi = self._axis(self.dphi)
        ddphi = self._axis(self.ddphi)
        # orthonormal frame E_0 = d/dt, E_a = exp(-phi) d/dtheta_a
        grad = grad_c.copy()
        hess = hess_c.copy()
        if self.family is Family.WARPED_PRODUCT:
            if np.any(np.abs(grad_c[1:]) > 0):
                raise ValueError("densities on warped products must depend on t only")
            for a in range(1, n):
                grad[a] = 0.0
                hess[0, a] = hess[a, 0] = 0.0
                for b in range(1, n):
                    hess[a, b] = 0.0
                hess[a, a] = dphi * grad_c[0]
        self.grad_f = grad
        self.hess_f = hess
        ric = np.zeros((n, n) + shape)
        if self.family is Family.WARPED_PRODUCT and m > 0:
            ric[0, 0] = -m * (ddphi + dphi**2)
            for a in range(1, n):
                ric[a, a] = -(ddphi + m * dphi**2)
        self.ricci = ric
        self.ricci_f = ric + hess
        self._check_density(grad_c, hess_c)

        self.rho = np.exp(-f + m * phi)
        vol = np.ones(shape)
        for i in range(n):
            w = np.full(shape[i], self.spacing[i])
            if not self.periodic[i]:
                w[0] *= 0.5
                w[-1] *= 0.5
            vol = vol * w.reshape([-1 if j == i else 1 for j in range(n)])
        self.cell_volume = vol
        self.node_measure = self.rho * vol
        if not np.all(self.node_measure > 0):
            raise ValueError("weighted cell volumes must be strictly positive (density underflow?)")

    def _axis(self, arr1d: np.ndarray) -> np.ndarray:
        return np.asarray(arr1d).reshape([-1] + [1] * (self.n - 1)) * np.ones(self.shape)

    def _check_density(self, grad_c, hess_c) -> None:
        # centered differences of the samples must match the closed forms up to
        # their own truncation error, estimated by comparing h and 2h stencils
        inner = self.interior_mask(2)
        if not inner.any():
            return
        pairs = [("grad_f", self.f, grad_c[i], i) for i in range(self.n)]
        pairs += [("hess_f", grad_c[j], hess_c[j, i], i) for i in range(self.n) for j in range(self.n)]
        for name, base, ref, i in pairs:
            h = self.spacing[i]
            fd1 = (np.roll(base, -1, axis=i) - np.roll(base, 1, axis=i)) / (2 * h)
            fd2 = (np.roll(base, -2, axis=i) - np.roll(base, 2, axis=i)) / (4 * h)
            err = np.abs(fd1 - ref)[inner]
            trunc = np.abs(fd2 - fd1)[inner] / 3.0
            scale = 1.0 + np.abs(ref[inner]).max() + np.abs(base[inner]).max()
            if np.any(err > 4.0 * trunc + 1e-8 * scale):
                raise ValueError(f"density {name} disagrees with finite differences of f (err={err.max():.3e})")

    # ------------------------------------------------------------- utilities
    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def truncation(self) -> tuple[float | None, ...]:
        return tuple(None if p else -lo for p, lo in zip(self.periodic, self.lower))

    @property
    def T(self) -> float | None:
        return self.truncation[0]

    @cached_property
    def center(self) -> tuple[float, ...]:
        """Grid center, used as the origin ``p0``."""
        return tuple(0.0 if not p else float(c[len(c) // 2]) for p, c in zip(self.periodic, self.coords))

    @cached_property
    def center_index(self) -> tuple[int, ...]:
        return tuple(int(np.argmin(np.abs(c - c0))) for c, c0 in zip(self.coords, self.center))

    def period(self, i: int) -> float:
        return self.shape[i] * self.spacing[i]

    def interior_mask(self, depth: int = 1) -> np.ndarray:
        """Nodes at least ``depth`` cells away from every truncation boundary."""
        m = np.ones(self.shape, dtype=bool)
        for i in range(self.n):
            if self.periodic[i] or depth <= 0:
                continue
            idx = np.arange(self.shape[i])
            ok = (idx >= depth) & (idx <= self.shape[i] - 1 - depth)
            m &= ok.reshape([-1 if j == i else 1 for j in range(self.n)])
        return m

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask(1)

    def distance_from(self, center=None) -> np.ndarray:
        """Exact geodesic distance on product families (axis plus flat torus)."""
        if self.family is Family.WARPED_PRODUCT and any(c != 0 for c in self.warp_lambda):
            raise ValueError("geodesic balls are only available on product families")
        c = self.center if center is None else center
        d2 = np.zeros(self.shape)
        for i in range(self.n):
            dx = self.mesh[i] - c[i]
            if self.periodic[i]:
                L = self.period(i)
                dx = np.abs(dx) % L
                dx = np.minimum(dx, L - dx)
            d2 = d2 + dx**2
        return np.sqrt(d2)

    def check_region(self, region: Region) -> None:
        tol = 1e-9 * max(self.spacing)
        if region.kind == "nodes":
            if region.node_mask is None or region.node_mask.shape != self.shape:
                raise ValueError("node set does not match the grid")
            return
        if region.kind == "ball":
            c = self.center if region.center is None else region.center
            for i, Ti in enumerate(self.truncation):
                if Ti is not None and abs(c[i]) + region.radius > Ti + tol:
                    raise ValueError("region outside truncated domain")
        elif region.kind == "box":
            if len(region.bounds) != self.n:
                raise ValueError("box bounds need one interval per direction")
            for (lo, hi), Ti in zip(region.bounds, self.truncation):
                if Ti is None:
                    continue
                if (lo is not None and lo < -Ti - tol) or (hi is not None and hi > Ti + tol):
                    raise ValueError("region outside truncated domain")

    def describe(self) -> dict:
        """Resolved, JSON-friendly description echoed in every report."""
        return {
            "family": self.family.value,
            "n": self.n,
            "shape": list(self.shape),
            "spacing": list(self.spacing),
            "periodic": list(self.periodic),
            "lower": list(self.lower),
            "T": self.T,
            "density": self.density.describe(),
            "warp_lambda": list(self.warp_lambda),
        }

    def __repr__(self) -> str:
        return f"ModelSpace({self.family.value}, shape={self.shape}, spacing={self.spacing}, density={self.density.describe()!r})"


@dataclass(frozen=True)
class Exhaustion:
    """Strictly nested regions, each away from the truncation boundary."""

    regions: tuple[Region, ...]

    def masks(self, space: ModelSpace) -> list[np.ndarray]:
        masks = [r.mask(space) for r in self.regions]
        boundary = space.boundary_mask()
        for j, m in enumerate(masks):
            if (m & boundary).any():
                raise ValueError(f"exhaustion element {j} touches the truncation boundary")
            if j and (not np.all(masks[j - 1] <= m) or np.array_equal(masks[j - 1], m)):
                raise ValueError("exhaustion is not strictly nested")
        return masks

    @classmethod
    def balls(cls, radii, center=None, closed: bool = False) -> "Exhaustion":
        return cls(tuple(Region.ball(r, center, closed) for r in radii))


def weighted_volume(space: ModelSpace, region: Region) -> float:
    """``sum over region nodes of exp(-f) * cell volume``, in fixed C order."""
    mask = region.mask(space)
    return float(np.sum(np.where(mask, space.node_measure, 0.0)))


def boundary_area(space: ModelSpace, r: float, shell_width: float | None = None) -> float:
    """Weighted area of the geodesic sphere of radius ``r`` about the center.

    Difference quotient ``(V(r+d) - V(r-d)) / 2d`` of ball volumes.  The
    default half-width ``d`` is a whole number of axis cells, which makes the
    one-dimensional count exact.
    """
    bounded = [t for t in space.truncation if t is not None]
    T = min(bounded) if bounded else None
    if r <= 0:
        raise ValueError("radius must be positive")
    if T is not None and r >= T:
        raise ValueError("sphere outside truncated domain")
    h = max(space.spacing)
    d = shell_width if shell_width is not None else h * max(1, round(0.05 * r / h))
    if T is not None and r + d > T:
        d = h * max(1, math.floor((T - r) / h))
        if r + d > T + 1e-12:
            raise ValueError("sphere outside truncated domain")
    dist = space.distance_from()
    eps = 1e-9 * h
    shell = (dist > r - d + eps) & (dist <= r + d + eps)
    return float(np.sum(np.where(shell, space.node_measure, 0.0)) / (2.0 * d))


def ball_volumes(space: ModelSpace, radii) -> np.ndarray:
    """Weighted volumes ``V(r)`` for many radii at once (closed balls)."""
    dist = space.distance_from().ravel()
    order = np.argsort(dist, kind="stable")
    cum = np.cumsum(space.node_measure.ravel()[order])
    k = np.searchsorted(dist[order], np.asarray(radii, dtype=float) + 1e-9 * max(space.spacing), side="right")
    return np.where(k > 0, cum[np.maximum(k - 1, 0)], 0.0)
