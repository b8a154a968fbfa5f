"""Discrete weighted calculus on a :class:`ModelSpace`.

Gradients live on grid edges (staggered forward differences); the weighted
divergence is *defined* as the negative adjoint of that gradient under

    <a, b>_f = sum_nodes a b m_node,   <X, Y>_f = sum_edges X Y c_edge,

so summation by parts holds to rounding for every pair of fields.  The drift
Laplacian is the composition ``Div_w o Grad``.

Pointwise geometric quantities (node gradients, Hessians, curvature terms)
are expressed in the orthonormal frame ``E_0 = d/dt, E_a = exp(-phi) d/dtheta_a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .model_space import ModelSpace

HESSIAN_DEPTH = 2


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float)


@dataclass(frozen=True, eq=False)
class ScalarField:
    space: ModelSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.space.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.space.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar fields must be finite at every node")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, space: ModelSpace, fn) -> "ScalarField":
        return cls(space, np.asarray(fn(*space.mesh), dtype=float) * np.ones(space.shape))

    @classmethod
    def constant(cls, space: ModelSpace, c: float) -> "ScalarField":
        return cls(space, np.full(space.shape, float(c)))

    def _other(self, other):
        if isinstance(other, ScalarField):
            _same_space(self, other)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.space, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.space, self.values - self._other(other))

    def __mul__(self, other):
        return ScalarField(self.space, self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.space, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Per-direction components on staggered edges (coordinate derivatives)."""

    space: ModelSpace
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        for i, c in enumerate(self.components):
            if c.shape != edge_shape(self.space, i):
                raise ValueError(f"component {i} has shape {c.shape}, expected {edge_shape(self.space, i)}")


@dataclass(frozen=True, eq=False)
class SymmetricTensorField:
    """Node-indexed symmetric tensors, upper triangle stored once.

    Only nodes where ``interior`` is true carry values.
    """

    space: ModelSpace
    upper: np.ndarray  # (n(n+1)/2,) + grid
    interior: np.ndarray

    def component(self, i: int, j: int) -> np.ndarray:
        if i > j:
            i, j = j, i
        n = self.space.n
        k = i * n - i * (i - 1) // 2 + (j - i)
        return self.upper[k]

    def full(self) -> np.ndarray:
        n = self.space.n
        out = np.empty((n, n) + self.space.shape)
        for i in range(n):
            for j in range(n):
                out[i, j] = self.component(i, j)
        return out

    def at(self, index) -> np.ndarray:
        index = tuple(index)
        if not self.interior[index]:
            raise ValueError("interior only: the Hessian stencil is undefined at this node")
        return self.full()[(slice(None), slice(None)) + index]

    def norm_sq(self) -> np.ndarray:
        n = self.space.n
        out = np.zeros(self.space.shape)
        for i in range(n):
            for j in range(n):
                out += self.component(i, j) ** 2
        return out

    @classmethod
    def from_full(cls, space, full, interior) -> "SymmetricTensorField":
        n = space.n
        rows = [0.5 * (full[i, j] + full[j, i]) for i in range(n) for j in range(i, n)]
        return cls(space, np.array(rows), interior)


def _same_space(a, b) -> None:
    if a.space is not b.space:
        raise ValueError("fields live on different spaces")


def edge_shape(space: ModelSpace, i: int) -> tuple[int, ...]:
    s = list(space.shape)
    if not space.periodic[i]:
        s[i] -= 1
    return tuple(s)


# ----------------------------------------------------------------- stencils
def _forward(u: np.ndarray, i: int, h: float, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(u, -1, axis=i) - u) / h
    return np.diff(u, axis=i) / h


def _forward_adjoint(e: np.ndarray, i: int, h: float, periodic: bool) -> np.ndarray:
    """Transpose of :func:`_forward` (unweighted)."""
    if periodic:
        return (np.roll(e, 1, axis=i) - e) / h
    pad = [(0, 0)] * e.ndim
    pad[i] = (1, 1)
    ep = np.pad(e, pad)
    lo = [slice(None)] * e.ndim
    hi = [slice(None)] * e.ndim
    lo[i] = slice(0, -1)
    hi[i] = slice(1, None)
    return (ep[tuple(lo)] - ep[tuple(hi)]) / h


def _d1(u: np.ndarray, i: int, h: float, periodic: bool) -> np.ndarray:
    """Node-centered first difference; one-sided at truncation ends."""
    if periodic:
        return (np.roll(u, -1, axis=i) - np.roll(u, 1, axis=i)) / (2 * h)
    out = np.empty_like(u, dtype=float)
    n = u.shape[i]

    def s(a, b):
        idx = [slice(None)] * u.ndim
        idx[i] = slice(a, b)
        return tuple(idx)

    out[s(1, n - 1)] = (u[s(2, n)] - u[s(0, n - 2)]) / (2 * h)
    out[s(0, 1)] = (u[s(1, 2)] - u[s(0, 1)]) / h
    out[s(n - 1, n)] = (u[s(n - 1, n)] - u[s(n - 2, n - 1)]) / h
    return out


# ------------------------------------------------------------ edge weights
@lru_cache(maxsize=32)
def _edge_weights_cached(space: ModelSpace) -> tuple[np.ndarray, ...]:
    n = space.n
    out = []
    phi = space._axis(space.phi)
    for i in range(n):
        rho = space.rho
        if space.periodic[i]:
            rho_e = 0.5 * (rho + np.roll(rho, -1, axis=i))
        else:
            rho_e = 0.5 * (rho[_sl(n, i, 0, -1)] + rho[_sl(n, i, 1, None)])
        w = np.ones(edge_shape(space, i)) * space.spacing[i]
        for j in range(n):
            if j == i:
                continue
            wj = np.full(space.shape[j], space.spacing[j])
            if not space.periodic[j]:
                wj[0] *= 0.5
                wj[-1] *= 0.5
            w = w * wj.reshape([-1 if k == j else 1 for k in range(n)])
        ginv = 1.0
        if i > 0:
            p = phi if space.periodic[i] else phi[_sl(n, i, 0, -1)]
            ginv = np.exp(-2.0 * p)
        out.append(rho_e * w * ginv)
    return tuple(out)


def _sl(n, i, a, b):
    idx = [slice(None)] * n
    idx[i] = slice(a, b)
    return tuple(idx)


def edge_weights(space: ModelSpace) -> tuple[np.ndarray, ...]:
    """Weights ``c_e`` of the edge inner product, one array per direction."""
    return _edge_weights_cached(space)


# ------------------------------------------------------------- operators
def gradient(u: ScalarField) -> VectorField:
    s = u.space
    return VectorField(s, tuple(_forward(u.values, i, s.spacing[i], s.periodic[i]) for i in range(s.n)))


def divergence_w(X: VectorField) -> ScalarField:
    """Negative adjoint of :func:`gradient` under the weighted inner products."""
    s = X.space
    c = edge_weights(s)
    acc = np.zeros(s.shape)
    for i in range(s.n):
        acc += _forward_adjoint(c[i] * X.components[i], i, s.spacing[i], s.periodic[i])
    return ScalarField(s, -acc / s.node_measure)


def drift_laplacian(u: ScalarField) -> ScalarField:
    return divergence_w(gradient(u))


def _drift_laplacian_array(space: ModelSpace, u: np.ndarray) -> np.ndarray:
    return drift_laplacian(ScalarField(space, u)).values


def weighted_inner(u: ScalarField, v: ScalarField) -> float:
    _same_space(u, v)
    return float(np.sum(u.values * v.values * u.space.node_measure))


def vector_inner(X: VectorField, Y: VectorField) -> float:
    _same_space(X, Y)
    c = edge_weights(X.space)
    return float(sum(np.sum(a * b * w) for a, b, w in zip(X.components, Y.components, c)))


def weighted_dirichlet(u: ScalarField, v: ScalarField) -> float:
    _same_space(u, v)
    return vector_inner(gradient(u), gradient(v))


@lru_cache(maxsize=32)
def gradient_matrix(space: ModelSpace) -> sp.csr_matrix:
    """Sparse forward-difference operator, edges stacked direction by direction."""
    blocks = []
    for i in range(space.n):
        N, h = space.shape[i], space.spacing[i]
        if space.periodic[i]:
            D = sp.diags([-np.ones(N), np.ones(N - 1), [1.0]], [0, 1, -(N - 1)], shape=(N, N))
        else:
            D = sp.diags([-np.ones(N - 1), np.ones(N - 1)], [0, 1], shape=(N - 1, N))
        D = D / h
        op = sp.identity(1, format="csr")
        for j in range(space.n):
            op = sp.kron(op, D if j == i else sp.identity(space.shape[j]), format="csr")
        blocks.append(op)
    return sp.vstack(blocks, format="csr")


@lru_cache(maxsize=32)
def stiffness_matrix(space: ModelSpace) -> sp.csr_matrix:
    """``S = G^T C G``: the weighted Dirichlet form as a symmetric matrix."""
    G = gradient_matrix(space)
    c = np.concatenate([w.ravel() for w in edge_weights(space)])
    S = (G.T @ sp.diags(c) @ G).tocsr()
    return (0.5 * (S + S.T)).tocsr()


def mass_vector(space: ModelSpace) -> np.ndarray:
    return space.node_measure.ravel()


# ---------------------------------------------------- pointwise geometry
def node_gradient(u) -> np.ndarray:
    """Gradient at nodes, orthonormal components, from edge-averaged differences."""
    s = u.space
    v = u.values
    out = np.empty((s.n,) + s.shape)
    scale = np.exp(-s._axis(s.phi))
    for i in range(s.n):
        d = _d1(v, i, s.spacing[i], s.periodic[i])
        out[i] = d if i == 0 else scale * d
    return out


def gradient_norm(u: ScalarField) -> ScalarField:
    g = node_gradient(u)
    return ScalarField(u.space, np.sqrt(np.sum(g**2, axis=0)))


def hessian(u: ScalarField) -> SymmetricTensorField:
    """Covariant Hessian in the orthonormal frame.

    Second derivatives are compositions of node-centered differences, so the
    Hessian is exactly the node gradient of the node gradient (plus connection
    terms on warped products).  Defined at nodes two cells from any truncation
    boundary.
    """
    s = u.space
    n = s.n
    v = u.values
    d = [_d1(v, i, s.spacing[i], s.periodic[i]) for i in range(n)]
    phi = s._axis(s.phi)
    dphi = s._axis(s.dphi)
    em = np.exp(-phi)
    full = np.empty((n, n) + s.shape)
    for i in range(n):
        for j in range(i, n):
            dij = _d1(d[j], i, s.spacing[i], s.periodic[i])
            if i == 0 and j == 0:
                hij = dij
            elif i == 0:
                hij = em * (dij - dphi * d[j])
            else:
                hij = em**2 * dij + (dphi * d[0] if i == j else 0.0)
            full[i, j] = full[j, i] = hij
    interior = s.interior_mask(HESSIAN_DEPTH)
    full[:, :, ~interior] = np.nan
    return SymmetricTensorField.from_full(s, full, interior)


def covariant_derivative(X: np.ndarray, space: ModelSpace) -> np.ndarray:
    """``D[k, j] = <nabla_{E_j} X, E_k>`` for a node vector field in the orthonormal frame."""
    s = space
    n = s.n
    em = np.exp(-s._axis(s.phi))
    dphi = s._axis(s.dphi)
    D = np.empty((n, n) + s.shape)
    for j in range(n):
        for k in range(n):
            dk = _d1(X[k], j, s.spacing[j], s.periodic[j])
            D[k, j] = dk if j == 0 else em * dk
    for a in range(1, n):
        D[a, a] += dphi * X[0]
        D[0, a] -= dphi * X[a]
    return D


def divergence_nodes(X: np.ndarray, space: ModelSpace) -> np.ndarray:
    """Riemannian divergence of a node vector field (orthonormal components)."""
    s = space
    m = s.n - 1
    phi = s._axis(s.phi)
    out = np.exp(-m * phi) * _d1(np.exp(m * phi) * X[0], 0, s.spacing[0], s.periodic[0])
    em = np.exp(-phi)
    for a in range(1, s.n):
        out = out + em * _d1(X[a], a, s.spacing[a], s.periodic[a])
    return out


def ricci_f_form(space: ModelSpace, v: np.ndarray) -> np.ndarray:
    """``Ric_f(v, v)`` at every node from the closed-form tensor."""
    return np.einsum("ij...,i...,j...->...", space.ricci_f, v, v)


def bochner_residual(u: ScalarField) -> np.ma.MaskedArray:
    """Pointwise ``1/2 Lf|grad u|^2 - |Hess u|^2 - <grad u, grad Lf u> - Ric_f(grad u, grad u)``.

    Masked outside the nodes where every stencil is interior.
    """
    s = u.space
    g = node_gradient(u)
    g2 = ScalarField(s, np.sum(g**2, axis=0))
    lap = drift_laplacian(u)
    glap = node_gradient(lap)
    H = hessian(u)
    interior = H.interior
    res = np.full(s.shape, np.nan)
    val = 0.5 * drift_laplacian(g2).values - H.norm_sq() - np.sum(g * glap, axis=0) - ricci_f_form(s, g)
    res[interior] = val[interior]
    return np.ma.masked_invalid(res)


def drift_laplacian_pointwise(u: ScalarField) -> np.ma.MaskedArray:
    """Cross-check ``Lap u - <grad f, grad u>`` from the Hessian trace (interior only)."""
    s = u.space
    H = hessian(u)
    tr = sum(H.component(i, i) for i in range(s.n))
    val = tr - np.sum(s.grad_f * node_gradient(u), axis=0)
    return np.ma.masked_invalid(np.where(H.interior, val, np.nan))
