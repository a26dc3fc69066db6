"""Tensor grids on the slab T^(dim-1) x (0,1), stencils, quadrature, weighted norms.

The reference domain is periodic in the horizontal axes (no duplicated seam
node) and carries endpoint nodes on the vertical axis.  All differentiation is
second order: centered stencils in the interior, one-sided at the two vertical
faces, periodic wrap horizontally.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DiscreteDomain",
    "build_domain",
    "diff",
    "gradient",
    "weighted_norm",
    "sobolev_norm",
    "derivative_multi_indices",
    "apply_multi_index",
    "require_finite",
]

_MIN_NODES = 4  # stencil width for one-sided second-order differences


@dataclass(frozen=True)
class DiscreteDomain:
    """Uniform tensor grid on T^(dim-1) x (0,1).

    Axes 0..dim-2 are periodic with ``n_horizontal`` nodes each; the last axis
    carries ``n_vertical`` nodes including both endpoints x=0 and x=1.
    """

    dim: int
    n_horizontal: int
    n_vertical: int
    spacing: tuple[float, ...]
    shape: tuple[int, ...]
    coords: tuple[np.ndarray, ...] = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)

    @property
    def vertical_axis(self) -> int:
        return self.dim - 1

    def is_periodic(self, axis: int) -> bool:
        return axis < self.dim - 1

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays broadcast to the full grid shape."""
        return list(np.meshgrid(*self.coords, indexing="ij"))

    def vertical_coord(self) -> np.ndarray:
        """x3 broadcast to the grid shape."""
        return self.mesh()[self.vertical_axis]

    def distance_field(self) -> np.ndarray:
        """Distance to the vacuum boundary: d = min(x3, 1 - x3)."""
        x3 = self.vertical_coord()
        return np.minimum(x3, 1.0 - x3)

    def zeros(self, *component_shape: int) -> np.ndarray:
        return np.zeros(self.shape + tuple(component_shape))

    def identity_map(self) -> np.ndarray:
        """The identity flow map e(x) = x as a vector field."""
        eta = np.empty(self.shape + (self.dim,))
        for ax, x in enumerate(self.mesh()):
            eta[..., ax] = x
        return eta

    def integrate(self, values: np.ndarray) -> float:
        """Quadrature sum of a nodal scalar array (deterministic order)."""
        return float(np.sum(values * self.quad_weights))


def build_domain(dim: int, n_horizontal: int | None, n_vertical: int) -> DiscreteDomain:
    """Build a uniform grid on T^(dim-1) x (0,1).

    ``n_horizontal`` is ignored for dim=1.  Quadrature is the rectangle rule on
    periodic axes and the trapezoid rule vertically, so the weights sum to the
    unit domain volume.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    if n_vertical < _MIN_NODES:
        raise ValueError(f"n_vertical must be >= {_MIN_NODES}, got {n_vertical}")
    if dim > 1:
        if n_horizontal is None or n_horizontal < _MIN_NODES:
            raise ValueError(f"n_horizontal must be >= {_MIN_NODES} for dim > 1")
    else:
        n_horizontal = 0

    spacing: list[float] = []
    coords: list[np.ndarray] = []
    axis_weights: list[np.ndarray] = []
    for _ in range(dim - 1):
        h = 1.0 / n_horizontal
        spacing.append(h)
        coords.append(np.arange(n_horizontal) * h)
        axis_weights.append(np.full(n_horizontal, h))
    hv = 1.0 / (n_vertical - 1)
    spacing.append(hv)
    coords.append(np.linspace(0.0, 1.0, n_vertical))
    wv = np.full(n_vertical, hv)
    wv[0] = wv[-1] = 0.5 * hv
    axis_weights.append(wv)

    quad = axis_weights[0]
    for w in axis_weights[1:]:
        quad = np.multiply.outer(quad, w)

    return DiscreteDomain(
        dim=dim,
        n_horizontal=int(n_horizontal),
        n_vertical=int(n_vertical),
        spacing=tuple(spacing),
        shape=tuple(len(c) for c in coords),
        coords=tuple(coords),
        quad_weights=quad,
    )


def require_finite(values: np.ndarray, what: str = "field") -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")
    return values


def _diff1_periodic(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)


def _diff2_periodic(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(f, -1, axis=axis) - 2.0 * f + np.roll(f, 1, axis=axis)) / (h * h)


def _slicer(ndim: int, axis: int, idx) -> tuple:
    sl: list = [slice(None)] * ndim
    sl[axis] = idx
    return tuple(sl)


def _diff1_bounded(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.empty_like(f)
    s = lambda idx: _slicer(f.ndim, axis, idx)
    out[s(slice(1, -1))] = (f[s(slice(2, None))] - f[s(slice(0, -2))]) / (2.0 * h)
    out[s(0)] = (-3.0 * f[s(0)] + 4.0 * f[s(1)] - f[s(2)]) / (2.0 * h)
    out[s(-1)] = (3.0 * f[s(-1)] - 4.0 * f[s(-2)] + f[s(-3)]) / (2.0 * h)
    return out


def _diff2_bounded(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.empty_like(f)
    s = lambda idx: _slicer(f.ndim, axis, idx)
    h2 = h * h
    out[s(slice(1, -1))] = (
        f[s(slice(2, None))] - 2.0 * f[s(slice(1, -1))] + f[s(slice(0, -2))]
    ) / h2
    out[s(0)] = (2.0 * f[s(0)] - 5.0 * f[s(1)] + 4.0 * f[s(2)] - f[s(3)]) / h2
    out[s(-1)] = (2.0 * f[s(-1)] - 5.0 * f[s(-2)] + 4.0 * f[s(-3)] - f[s(-4)]) / h2
    return out


def diff(domain: DiscreteDomain, values: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    """Second-order partial derivative along a grid axis.

    ``values`` may carry trailing component axes (vector/tensor fields); the
    derivative acts on the leading ``domain.dim`` spatial axes only.
    """
    if not 0 <= axis < domain.dim:
        raise ValueError(f"axis {axis} invalid for dim {domain.dim}")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    h = domain.spacing[axis]
    if domain.is_periodic(axis):
        return _diff1_periodic(values, axis, h) if order == 1 else _diff2_periodic(values, axis, h)
    return _diff1_bounded(values, axis, h) if order == 1 else _diff2_bounded(values, axis, h)


def gradient(domain: DiscreteDomain, values: np.ndarray) -> np.ndarray:
    """Stack of first derivatives along every axis (last index = axis)."""
    parts = [diff(domain, values, ax, 1) for ax in range(domain.dim)]
    return np.stack(parts, axis=-1)


def derivative_multi_indices(dim: int, order: int):
    """Unordered spatial multi-indices of exactly the given total order."""
    return list(itertools.combinations_with_replacement(range(dim), order))


def apply_multi_index(domain: DiscreteDomain, values: np.ndarray, alpha) -> np.ndarray:
    """Apply D^alpha, using the direct second-derivative stencil for repeated axes."""
    out = values
    for ax in sorted(set(alpha)):
        m = sum(1 for a in alpha if a == ax)
        for _ in range(m // 2):
            out = diff(domain, out, ax, 2)
        if m % 2:
            out = diff(domain, out, ax, 1)
    return out


def _component_square(values: np.ndarray, dim: int) -> np.ndarray:
    """|values|^2 summed over any trailing component axes."""
    sq = values * values
    while sq.ndim > dim:
        sq = sq.sum(axis=-1)
    return sq


def weighted_norm(
    domain: DiscreteDomain,
    values: np.ndarray,
    weight: np.ndarray | float = 1.0,
    weight_power: int = 0,
    derivative_order: int = 0,
) -> float:
    """Discrete weighted Sobolev norm.

    Returns ``(sum_nodes sum_{|alpha|<=order} weight^power |D^alpha f|^2 quad)^(1/2)``.
    ``derivative_order`` is capped at 2; higher orders are composed by the
    caller (see :func:`sobolev_norm`).
    """
    if derivative_order < 0 or derivative_order > 2:
        raise ValueError("derivative_order must be 0, 1 or 2")
    if weight_power < 0:
        raise ValueError("weight_power must be >= 0")
    w = np.asarray(weight, dtype=float)
    if np.any(w < 0):
        raise ValueError("weight entries must be nonnegative")
    wp = w**weight_power if weight_power else np.asarray(1.0)

    total = domain.integrate(wp * _component_square(values, domain.dim))
    for order in range(1, derivative_order + 1):
        for alpha in derivative_multi_indices(domain.dim, order):
            d = apply_multi_index(domain, values, alpha)
            total += domain.integrate(wp * _component_square(d, domain.dim))
    return float(np.sqrt(total))


def sobolev_norm(domain: DiscreteDomain, values: np.ndarray, order: int) -> float:
    """Discrete H^order norm of a (possibly vector/tensor) field.

    Composes the order-2 stencil budget for derivative orders above 2;
    accuracy degrades accordingly beyond second derivatives.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    total = domain.integrate(_component_square(values, domain.dim))
    for m in range(1, order + 1):
        for alpha in derivative_multi_indices(domain.dim, m):
            d = apply_multi_index(domain, values, alpha)
            total += domain.integrate(_component_square(d, domain.dim))
    return float(np.sqrt(total))
