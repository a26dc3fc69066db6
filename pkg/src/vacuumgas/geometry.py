"""Lagrangian geometry: deformation tensor, Jacobian, cofactor, surface normal.

Index conventions for stored tensors: for a flow map eta, ``D_eta[..., i, k]``
holds the derivative of component i along axis k.  The cofactor ``a`` and the
inverse ``A`` are stored so that ``a[..., i, k]`` and ``A[..., i, k]`` carry
the pair (momentum component i, derivative axis k); with this layout the
defining identity reads ``a @ D_eta^T = J * I`` nodewise.

The cofactor is assembled from explicit minors of D_eta (never by inverting
and rescaling), so affine maps have exactly constant cofactors and the
discrete divergence-free property of its columns is exact for them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import DiscreteDomain, diff, gradient

__all__ = [
    "FlowState",
    "GeometrySnapshot",
    "snapshot",
    "flow_map_gradient",
    "piola_residual",
    "lagrangian_div",
    "lagrangian_curl",
    "cofactor_rate",
    "curlcurl_identity_residual",
    "eulerian_curl",
]

BOTTOM, TOP = "bottom", "top"


@dataclass
class FlowState:
    """Flow map and velocity on the grid at one time level.

    ``w_prev`` lags the divided-form pressure acceleration from the previous
    step (used by the kappa time stencil); ``dt_prev`` is the step that
    produced it (0 marks the initial state, where the analytic t=0 rate is
    available instead).
    """

    domain: DiscreteDomain
    eta: np.ndarray
    v: np.ndarray
    time: float = 0.0
    w_prev: np.ndarray | None = None
    dt_prev: float = 0.0

    def __post_init__(self) -> None:
        expect = self.domain.shape + (self.domain.dim,)
        if self.eta.shape != expect or self.v.shape != expect:
            raise ValueError(
                f"eta/v must have shape {expect}, got {self.eta.shape}/{self.v.shape}"
            )


def _det(F: np.ndarray, dim: int) -> np.ndarray:
    if dim == 1:
        return F[..., 0, 0].copy()
    if dim == 2:
        return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return (
        F[..., 0, 0] * (F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1])
        - F[..., 0, 1] * (F[..., 1, 0] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 0])
        + F[..., 0, 2] * (F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0])
    )


def _cofactor(F: np.ndarray, dim: int) -> np.ndarray:
    """Cofactor matrix C with C[i,k] = dJ/dF[i,k] (explicit minors)."""
    C = np.empty_like(F)
    if dim == 1:
        C[..., 0, 0] = 1.0
        return C
    if dim == 2:
        C[..., 0, 0] = F[..., 1, 1]
        C[..., 0, 1] = -F[..., 1, 0]
        C[..., 1, 0] = -F[..., 0, 1]
        C[..., 1, 1] = F[..., 0, 0]
        return C
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for k in range(3):
            k1, k2 = (k + 1) % 3, (k + 2) % 3
            C[..., i, k] = F[..., i1, k1] * F[..., i2, k2] - F[..., i1, k2] * F[..., i2, k1]
    return C


@dataclass
class GeometrySnapshot:
    """Derived geometric fields of one flow state.

    ``sqrt_g`` and ``normal`` are per-face boundary fields keyed by "bottom"
    ("top"); normals are outward unit normals on the deformed boundary.
    ``valid`` is False when J <= 0 somewhere, in which case A is zeroed at the
    offending nodes rather than divided.
    """

    domain: DiscreteDomain
    D_eta: np.ndarray
    J: np.ndarray
    A: np.ndarray
    a: np.ndarray
    sqrt_g: dict = field(default_factory=dict)
    normal: dict = field(default_factory=dict)
    valid: bool = True

    def require_valid(self) -> "GeometrySnapshot":
        if not self.valid:
            raise ValueError(f"snapshot invalid: min J = {self.J.min():.3e} <= 0")
        return self


def _face_slice(domain: DiscreteDomain, face: str) -> tuple:
    idx = 0 if face == BOTTOM else -1
    sl: list = [slice(None)] * domain.dim
    sl[domain.vertical_axis] = idx
    return tuple(sl)


def flow_map_gradient(domain: DiscreteDomain, eta: np.ndarray) -> np.ndarray:
    """D_eta computed through the periodic displacement eta - e.

    The flow map itself is not periodic across horizontal seams (its linear
    part jumps); the displacement is, so D_eta = I + D(eta - e) wraps cleanly.
    """
    disp = eta - domain.identity_map()
    D = gradient(domain, disp)
    for i in range(domain.dim):
        D[..., i, i] += 1.0
    return D


def snapshot(state: FlowState) -> GeometrySnapshot:
    """Compute D_eta, J, a, A and the boundary metric/normal of a state."""
    dom = state.domain
    dim = dom.dim
    D_eta = flow_map_gradient(dom, state.eta)  # [..., i, k]
    J = _det(D_eta, dim)
    a = _cofactor(D_eta, dim)
    valid = bool(np.all(J > 0.0))
    A = np.zeros_like(a)
    np.divide(a, J[..., None, None], out=A, where=J[..., None, None] > 0.0)

    sqrt_g: dict = {}
    normal: dict = {}
    last = dim - 1
    for face, orient in ((BOTTOM, -1.0), (TOP, 1.0)):
        raw = a[_face_slice(dom, face)][..., :, last]  # a^last_i on the face
        g = np.sqrt(np.sum(raw * raw, axis=-1))
        sqrt_g[face] = g
        n = np.zeros_like(raw)
        np.divide(raw, g[..., None], out=n, where=g[..., None] > 0.0)
        normal[face] = orient * n
    return GeometrySnapshot(
        domain=dom, D_eta=D_eta, J=J, A=A, a=a, sqrt_g=sqrt_g, normal=normal, valid=valid
    )


def piola_residual(snap: GeometrySnapshot) -> np.ndarray:
    """Discrete divergence of the cofactor columns, a^k_i,_k per component i."""
    dom = snap.domain
    out = dom.zeros(dom.dim)
    for k in range(dom.dim):
        out += diff(dom, snap.a[..., :, k], k, 1)
    return out


def lagrangian_div(
    snap: GeometrySnapshot, w: np.ndarray, w_grad: np.ndarray | None = None
) -> np.ndarray:
    """div_eta w = A^j_i w^i,_j.

    Pass ``w_grad`` (e.g. from :func:`flow_map_gradient`) when w carries a
    non-periodic linear part, like the identity field.
    """
    Dw = gradient(snap.domain, w) if w_grad is None else w_grad
    return np.einsum("...ij,...ij->...", snap.A, Dw)


def eulerian_curl(domain: DiscreteDomain, w: np.ndarray) -> np.ndarray:
    """Flat-space curl; in dim < 3 the scalar curl sits in the last component."""
    Dw = gradient(domain, w)
    out = domain.zeros(domain.dim)
    if domain.dim == 3:
        out[..., 0] = Dw[..., 2, 1] - Dw[..., 1, 2]
        out[..., 1] = Dw[..., 0, 2] - Dw[..., 2, 0]
        out[..., 2] = Dw[..., 1, 0] - Dw[..., 0, 1]
    elif domain.dim == 2:
        out[..., 1] = Dw[..., 1, 0] - Dw[..., 0, 1]
    return out


def lagrangian_curl(
    snap: GeometrySnapshot, w: np.ndarray, w_grad: np.ndarray | None = None
) -> np.ndarray:
    """curl_eta w = eps_{.jk} A^r_j w^k,_r; scalar curl in the last slot for dim < 3."""
    dom = snap.domain
    Dw = gradient(dom, w) if w_grad is None else w_grad
    out = dom.zeros(dom.dim)
    A = snap.A
    if dom.dim == 3:
        # eps_{ijk} A[j, r] Dw[k, r]
        pairs = {0: [(1, 2, 1.0), (2, 1, -1.0)], 1: [(2, 0, 1.0), (0, 2, -1.0)], 2: [(0, 1, 1.0), (1, 0, -1.0)]}
        for i, terms in pairs.items():
            acc = 0.0
            for j, k, sgn in terms:
                acc = acc + sgn * np.einsum("...r,...r->...", A[..., j, :], Dw[..., k, :])
            out[..., i] = acc
    elif dom.dim == 2:
        out[..., 1] = np.einsum("...r,...r->...", A[..., 0, :], Dw[..., 1, :]) - np.einsum(
            "...r,...r->...", A[..., 1, :], Dw[..., 0, :]
        )
    return out


def cofactor_rate(snap: GeometrySnapshot, v: np.ndarray) -> np.ndarray:
    """Time derivative of the cofactor: v^r,_s J^-1 [a^s_r a^k_i - a^s_i a^k_r]."""
    dom = snap.domain
    Dv = gradient(dom, v)
    a = snap.a
    Jinv = 1.0 / snap.J
    trace = np.einsum("...rs,...rs->...", Dv, a)  # v^r,_s a^s_r
    mixed = np.einsum("...rs,...rk,...is->...ik", Dv, a, a)  # v^r,_s a^s_i a^k_r
    return Jinv[..., None, None] * (trace[..., None, None] * a - mixed)


def _second_derivatives(domain: DiscreteDomain, v: np.ndarray) -> np.ndarray:
    """D2v[..., r, s, j] = v^r,_{sj} using the direct stencil on the diagonal."""
    dim = domain.dim
    Dv = gradient(domain, v)  # [..., r, s]
    D2 = np.empty(domain.shape + (dim, dim, dim))
    for s in range(dim):
        for j in range(s, dim):
            if s == j:
                block = diff(domain, v, s, 2)
            else:
                block = diff(domain, Dv[..., :, s], j, 1)
            D2[..., :, s, j] = block
            D2[..., :, j, s] = block
    return D2


def curlcurl_identity_residual(snap: GeometrySnapshot, v: np.ndarray) -> np.ndarray:
    """Residual of the curl-curl decomposition of (d/dt a^k_i),_j a^j_i.

    The left side differentiates the cofactor rate; the right side groups the
    flat curl-curl term, the geometric deviation term (vanishing at a = I),
    and the lower-order term carrying derivatives of the coefficients.
    """
    dom = snap.domain
    dim = dom.dim
    a = snap.a
    Jinv = 1.0 / snap.J

    rate = cofactor_rate(snap, v)  # [..., i, k]
    lhs = dom.zeros(dim)
    for k in range(dim):
        grad_rate_k = gradient(dom, rate[..., :, k])  # [..., i, j]
        lhs[..., k] = np.einsum("...ij,...ij->...", grad_rate_k, a)

    D2 = _second_derivatives(dom, v)  # [..., r, s, j]
    # curl curl v realized as D(div v) - Lap v, valid in every dim
    grad_div = np.einsum("...rrk->...k", D2)
    laplacian = np.einsum("...kjj->...k", D2)
    curlcurl = grad_div - laplacian
    Dv = gradient(dom, v)
    eye = np.eye(dim)
    # middle term: v^r,_{sj} ( J^-1 [a^s_r a^k_i - a^s_i a^k_r] a^j_i - [d^s_r d^k_i - d^s_i d^k_r] d^j_i )
    coef = Jinv[..., None, None, None, None] * (
        np.einsum("...rs,...ik,...ij->...rskj", a, a, a)
        - np.einsum("...is,...rk,...ij->...rskj", a, a, a)
    )
    flat = np.einsum("sr,ik,ij->rskj", eye, eye, eye) - np.einsum("is,rk,ij->rskj", eye, eye, eye)
    middle = np.einsum("...rsj,...rskj->...k", D2, coef - flat)

    # lower-order term: v^r,_s ( J^-1 [a^s_r a^k_i - a^s_i a^k_r] ),_j a^j_i
    lower = dom.zeros(dim)
    B = Jinv[..., None, None, None, None] * (
        np.einsum("...rs,...ik->...rsik", a, a) - np.einsum("...is,...rk->...rsik", a, a)
    )
    for j in range(dim):
        dB = diff(dom, B, j, 1)
        lower += np.einsum("...rs,...rsik,...i->...k", Dv, dB, a[..., :, j])

    return lhs - (curlcurl + middle + lower)
