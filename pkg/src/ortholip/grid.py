"""
Structured-grid geometry and discrete differential calculus.

This module provides the spatial substrate for the variational solver and the
inequality checkers: uniform tensor grids in 2D/3D, nodal scalar fields,
staggered gradient fields (forward differences living on cell edges), ball
restricted L^p / L^inf norms, radial cut-off functions and discrete
mollification.

Quadrature conventions
----------------------
Three families of sample points are used, and every integral is a plain
weighted sum over samples whose location lies strictly inside the
integration ball (indicator evaluated at the sample point, which is the
center of its quadrature cell):

* nodes            - scalar fields; each node owns a cell of volume
                     ``prod(spacing)``,
* staggered points - per-axis gradient components (edge midpoints),
* cell centers     - full gradient vectors, obtained by averaging the two
                     staggered values adjacent to each cell.

The ball clipping rule is first-order accurate at ball boundaries and is
reported in the metadata of every inequality report produced downstream.

All operations here are pure reads over immutable inputs and are safe to call
concurrently; field construction is single-writer.
"""

from __future__ import annotations

import csv
import functools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage

__all__ = [
    "Grid",
    "Ball",
    "ScalarField",
    "GradientField",
    "CutoffProfile",
    "gradient",
    "cell_gradient",
    "lp_norm",
    "linf_norm",
    "cutoff_eta",
    "mollify",
    "node_mask",
    "stag_mask",
    "cell_mask",
    "region_measure",
    "save_field",
    "load_field",
]

#: Peak slope constant of the C^1 cubic cut-off ramp: the profile
#: eta(rho) = 1 - (3 theta^2 - 2 theta^3), theta = (rho - t)/(s - t),
#: has max |eta'| = (3/2)/(s - t).
CUTOFF_GRAD_CONST = 1.5


@dataclass(frozen=True)
class Grid:
    """Uniform structured grid.

    Attributes:
        shape: nodes per axis, at least 3 per axis, dim in {2, 3}.
        spacing: positive grid step per axis (uniform along each axis).
        origin: physical coordinates of node (0, ..., 0).
    """

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        if len(self.shape) not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {len(self.shape)}")
        if len(self.spacing) != len(self.shape) or len(self.origin) != len(self.shape):
            raise ValueError("shape, spacing and origin must have equal length")
        if any(int(n) != n or n < 3 for n in self.shape):
            raise ValueError(f"need at least 3 nodes per axis, got {self.shape}")
        if any(h <= 0 for h in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @classmethod
    def from_box(cls, lo, hi, nodes_per_axis) -> "Grid":
        """Grid covering the box [lo, hi] with the given node counts."""
        lo = tuple(float(x) for x in lo)
        hi = tuple(float(x) for x in hi)
        n = tuple(int(k) for k in nodes_per_axis)
        spacing = tuple((b - a) / (k - 1) for a, b, k in zip(lo, hi, n))
        return cls(shape=n, spacing=spacing, origin=lo)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def extent(self) -> tuple[float, ...]:
        """Physical side length per axis, (nodes - 1) * spacing."""
        return tuple((n - 1) * h for n, h in zip(self.shape, self.spacing))

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return tuple(n - 1 for n in self.shape)

    def axis_coords(self, axis: int) -> np.ndarray:
        """Nodal coordinates along one axis."""
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def node_points(self) -> np.ndarray:
        """Node positions, shape ``(*shape, dim)``."""
        return _node_points(self)

    def stag_points(self, axis: int) -> np.ndarray:
        """Staggered points of one axis (edge midpoints), shape ``(*stag_shape, dim)``."""
        return _stag_points(self, axis)

    def cell_points(self) -> np.ndarray:
        """Cell centers, shape ``(*cell_shape, dim)``."""
        return _cell_points(self)

    def contains_ball(self, ball: "Ball", scale: float = 1.0, tol: float = 1e-12) -> bool:
        """Whether ``scale * ball`` lies inside the physical extent."""
        r = scale * ball.radius
        for a in range(self.dim):
            lo = self.origin[a]
            hi = self.origin[a] + self.extent[a]
            if ball.center[a] - r < lo - tol or ball.center[a] + r > hi + tol:
                return False
        return True


@dataclass(frozen=True)
class Ball:
    """Open ball used as an integration region; membership is strict."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Strict membership of points (last axis indexes coordinates)."""
        c = np.asarray(self.center)
        d2 = np.sum((points - c) ** 2, axis=-1)
        return d2 < self.radius**2

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, factor * self.radius)


class ScalarField:
    """One real value per grid node."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("scalar field contains non-finite values")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        """Sample ``fn(points)`` at the nodes; fn maps (..., dim) -> (...)."""
        return cls(grid, np.asarray(fn(grid.node_points()), dtype=float))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


class GradientField:
    """Per-axis forward differences on the staggered dual grid.

    Component ``i`` lives at the midpoints of the axis-``i`` edges, so its
    array drops one node along axis ``i``.
    """

    __slots__ = ("grid", "components")

    def __init__(self, grid: Grid, components):
        components = tuple(np.asarray(c, dtype=float) for c in components)
        if len(components) != grid.dim:
            raise ValueError(f"need {grid.dim} components, got {len(components)}")
        for i, c in enumerate(components):
            want = tuple(n - 1 if a == i else n for a, n in enumerate(grid.shape))
            if c.shape != want:
                raise ValueError(f"component {i} has shape {c.shape}, expected {want}")
            if not np.all(np.isfinite(c)):
                raise ValueError(f"gradient component {i} contains non-finite values")
        self.grid = grid
        self.components = components


def gradient(u: ScalarField) -> GradientField:
    """Forward-difference gradient on the staggered layout.

    Component ``i`` at the edge between two axis-``i`` neighbours equals
    ``(u_next - u_here) / spacing_i``; exact for affine inputs up to
    rounding at the field's scale.
    """
    g = u.grid
    if any(n < 2 for n in g.shape):
        raise ValueError("gradient needs at least 2 nodes per axis")
    comps = [np.diff(u.values, axis=i) / g.spacing[i] for i in range(g.dim)]
    return GradientField(g, comps)


def cell_gradient(g: GradientField) -> np.ndarray:
    """Gradient vector at cell centers, shape ``(*cell_shape, dim)``.

    Each staggered component is midpoint-averaged along the other axes so
    that all components are co-located; second-order accurate at the cell
    center for smooth fields.
    """
    grid = g.grid
    out = np.empty(grid.cell_shape + (grid.dim,))
    for i in range(grid.dim):
        c = g.components[i]
        for a in range(grid.dim):
            if a == i:
                continue
            lo = [slice(None)] * c.ndim
            hi = [slice(None)] * c.ndim
            lo[a] = slice(None, -1)
            hi[a] = slice(1, None)
            c = 0.5 * (c[tuple(lo)] + c[tuple(hi)])
        out[..., i] = c
    return out


# Membership masks are cached: grids and balls are small frozen dataclasses,
# and the checkers re-request the same regions many times.


@functools.lru_cache(maxsize=256)
def _node_points(grid: Grid) -> np.ndarray:
    axes = [grid.axis_coords(a) for a in range(grid.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts.setflags(write=False)
    return pts


@functools.lru_cache(maxsize=256)
def _stag_points(grid: Grid, axis: int) -> np.ndarray:
    axes = []
    for a in range(grid.dim):
        x = grid.axis_coords(a)
        if a == axis:
            x = 0.5 * (x[:-1] + x[1:])
        axes.append(x)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts.setflags(write=False)
    return pts


@functools.lru_cache(maxsize=256)
def _cell_points(grid: Grid) -> np.ndarray:
    axes = [0.5 * (grid.axis_coords(a)[:-1] + grid.axis_coords(a)[1:]) for a in range(grid.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts.setflags(write=False)
    return pts


@functools.lru_cache(maxsize=1024)
def node_mask(grid: Grid, ball: Ball) -> np.ndarray:
    m = ball.contains(_node_points(grid))
    m.setflags(write=False)
    return m


@functools.lru_cache(maxsize=1024)
def stag_mask(grid: Grid, axis: int, ball: Ball) -> np.ndarray:
    m = ball.contains(_stag_points(grid, axis))
    m.setflags(write=False)
    return m


@functools.lru_cache(maxsize=1024)
def cell_mask(grid: Grid, ball: Ball) -> np.ndarray:
    m = ball.contains(_cell_points(grid))
    m.setflags(write=False)
    return m


def region_measure(grid: Grid, ball: Ball, kind: str = "node", axis: int | None = None) -> float:
    """Discrete measure of the ball: cell volume times in-ball sample count."""
    if kind == "node":
        m = node_mask(grid, ball)
    elif kind == "cell":
        m = cell_mask(grid, ball)
    elif kind == "stag":
        m = stag_mask(grid, axis, ball)
    else:
        raise ValueError(f"unknown sample kind {kind!r}")
    return float(np.count_nonzero(m)) * grid.cell_volume


def _check_region(grid: Grid, region: Ball):
    if len(region.center) != grid.dim:
        raise ValueError("region center dimension does not match grid")
    if not grid.contains_ball(region):
        raise ValueError(
            f"region (center {region.center}, radius {region.radius}) escapes the grid extent"
        )


def lp_norm(g, p: float, region: Ball) -> float:
    """Ball-restricted L^p norm.

    Scalar fields are sampled at nodes; gradient fields are sampled as
    Euclidean magnitudes of the cell-centered gradient vector.  Cells are
    clipped to the ball by the indicator-at-cell-center rule.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if isinstance(g, ScalarField):
        _check_region(g.grid, region)
        m = node_mask(g.grid, region)
        vals = np.abs(g.values[m])
    elif isinstance(g, GradientField):
        _check_region(g.grid, region)
        m = cell_mask(g.grid, region)
        vec = cell_gradient(g)
        vals = np.sqrt(np.sum(vec**2, axis=-1))[m]
    else:
        raise TypeError(f"expected ScalarField or GradientField, got {type(g)}")
    if vals.size == 0:
        return 0.0
    return float(np.sum(vals**p) * g.grid.cell_volume) ** (1.0 / p)


def linf_norm(g, region: Ball) -> float:
    """Max of |value| over the sample points inside the region."""
    if isinstance(g, ScalarField):
        _check_region(g.grid, region)
        m = node_mask(g.grid, region)
        vals = np.abs(g.values[m])
    elif isinstance(g, GradientField):
        _check_region(g.grid, region)
        m = cell_mask(g.grid, region)
        vec = cell_gradient(g)
        vals = np.sqrt(np.sum(vec**2, axis=-1))[m]
    else:
        raise TypeError(f"expected ScalarField or GradientField, got {type(g)}")
    if vals.size == 0:
        raise ValueError("region contains no sample points")
    return float(np.max(vals))


@dataclass(frozen=True)
class CutoffProfile:
    """Radial C^1 cut-off: 1 on the inner ball, 0 outside the outer ball.

    The transition is the cubic ramp ``eta = (1 - theta)^2 (1 + 2 theta)``
    in ``theta = (rho - t)/(s - t)``, whose gradient is bounded by
    ``CUTOFF_GRAD_CONST / (s - t)``.
    """

    inner: Ball
    outer: Ball

    def __post_init__(self):
        if self.inner.center != self.outer.center:
            raise ValueError("cut-off balls must be concentric")
        if not self.inner.radius < self.outer.radius:
            raise ValueError(
                f"inner radius {self.inner.radius} must be < outer radius {self.outer.radius}"
            )

    def values(self, points: np.ndarray) -> np.ndarray:
        c = np.asarray(self.outer.center)
        rho = np.sqrt(np.sum((points - c) ** 2, axis=-1))
        t, s = self.inner.radius, self.outer.radius
        theta = np.clip((rho - t) / (s - t), 0.0, 1.0)
        return (1.0 - theta) ** 2 * (1.0 + 2.0 * theta)

    def grad(self, points: np.ndarray) -> np.ndarray:
        """Analytic gradient, shape ``points.shape``; zero on both plateaus."""
        c = np.asarray(self.outer.center)
        rel = points - c
        rho = np.sqrt(np.sum(rel**2, axis=-1))
        t, s = self.inner.radius, self.outer.radius
        theta = np.clip((rho - t) / (s - t), 0.0, 1.0)
        deta = -6.0 * theta * (1.0 - theta) / (s - t)
        safe_rho = np.where(rho > 0, rho, 1.0)
        return deta[..., None] * rel / safe_rho[..., None]


def cutoff_eta(grid: Grid, inner: Ball, outer: Ball) -> ScalarField:
    """Nodal samples of the radial cut-off profile.

    eta is exactly 1 at nodes inside the inner ball and exactly 0 at nodes
    outside the outer ball; any discrete difference quotient of the samples
    is bounded by ``CUTOFF_GRAD_CONST / (s - t)`` up to O(h).
    """
    prof = CutoffProfile(inner, outer)
    return ScalarField(grid, prof.values(grid.node_points()))


def _mollifier_kernel(grid: Grid, eps: float) -> np.ndarray:
    radii = [int(np.floor(eps / h)) for h in grid.spacing]
    offsets = np.meshgrid(*[np.arange(-r, r + 1) for r in radii], indexing="ij")
    rho2 = sum((o * h) ** 2 for o, h in zip(offsets, grid.spacing)) / eps**2
    w = np.zeros(rho2.shape)
    inside = rho2 < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - rho2[inside]))
    # Renormalize until the total weight is <= 1 so the convolution can
    # never push values outside the input range.
    for _ in range(4):
        s = w.sum()
        w /= s
        if w.sum() <= 1.0:
            break
    return w


def mollify(field: ScalarField, eps: float) -> ScalarField:
    """Discrete convolution with a normalized compactly supported bump.

    The kernel is the classical radial bump ``exp(-1/(1 - (rho/eps)^2))``
    sampled at node offsets with ``rho < eps``.  Width below one cell
    collapses the kernel to a single node (identity).  Constants are
    preserved exactly and the output range is contained in the input range;
    nodes within ``eps`` of the grid boundary use edge replication.
    """
    if eps <= 0:
        raise ValueError(f"mollification width must be positive, got {eps}")
    grid = field.grid
    radii = [int(np.floor(eps / h)) for h in grid.spacing]
    if all(r == 0 for r in radii):
        return field.copy()
    if any(2 * r + 1 > n for r, n in zip(radii, grid.shape)):
        raise ValueError(
            f"mollifier support (node radii {radii}) exceeds the grid margin {grid.shape}"
        )
    w = _mollifier_kernel(grid, eps)
    # Convolving (u - u0) keeps constants bitwise exact regardless of the
    # rounding of the kernel normalization.
    u0 = float(field.values.flat[0])
    out = scipy.ndimage.convolve(field.values - u0, w, mode="nearest") + u0
    return ScalarField(grid, out)


# ---------------------------------------------------------------------------
# Field import/export: CSV of (index tuple, value) plus a JSON grid header.
# Values are written with repr(), i.e. the shortest decimal representation
# that round-trips, so save -> load is bit-exact.

_FIELD_FORMAT = "grid-field"
_FIELD_VERSION = 1


def _field_paths(base) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix == ".csv":
        return base, base.with_suffix(".json")
    return base.with_suffix(".csv"), base.with_suffix(".json")


def save_field(field: ScalarField, base) -> tuple[Path, Path]:
    """Write ``<base>.csv`` (one row per node) and ``<base>.json`` (grid header)."""
    csv_path, json_path = _field_paths(base)
    g = field.grid
    header = {
        "format": _FIELD_FORMAT,
        "version": _FIELD_VERSION,
        "dim": g.dim,
        "shape": list(g.shape),
        "spacing": [repr(h) for h in g.spacing],
        "origin": [repr(o) for o in g.origin],
    }
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"i{a}" for a in range(g.dim)] + ["value"])
        for idx in np.ndindex(*g.shape):
            writer.writerow([*idx, repr(float(field.values[idx]))])
    return csv_path, json_path


def load_field(base) -> ScalarField:
    """Inverse of :func:`save_field`; bit-exact round trip."""
    csv_path, json_path = _field_paths(base)
    header = json.loads(json_path.read_text())
    if header.get("format") != _FIELD_FORMAT:
        raise ValueError(f"{json_path} is not a grid-field header")
    grid = Grid(
        shape=tuple(header["shape"]),
        spacing=tuple(float(h) for h in header["spacing"]),
        origin=tuple(float(o) for o in header["origin"]),
    )
    values = np.empty(grid.shape)
    seen = 0
    with csv_path.open() as fh:
        reader = csv.reader(fh)
        next(reader)  # header row
        for row in reader:
            idx = tuple(int(x) for x in row[: grid.dim])
            values[idx] = float(row[grid.dim])
            seen += 1
    if seen != int(np.prod(grid.shape)):
        raise ValueError(f"{csv_path} holds {seen} rows, expected {np.prod(grid.shape)}")
    return ScalarField(grid, values)
