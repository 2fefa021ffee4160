import numpy as np
import pytest

from ortholip import (
    Ball,
    DegeneracyVector,
    Grid,
    LinearLowerOrder,
    NonlinearLowerOrder,
    ProblemSpec,
    ScalarField,
)

BOX_LO = (-1.2, -1.2)
BOX_HI = (1.2, 1.2)


def make_grid(n: int = 17) -> Grid:
    return Grid.from_box(BOX_LO, BOX_HI, (n, n))


def affine_field(grid: Grid, coeffs, offset: float = 0.0) -> ScalarField:
    coeffs = np.asarray(coeffs, dtype=float)
    return ScalarField.from_function(grid, lambda x: x @ coeffs + offset)


def saddle_field(grid: Grid, amp: float = 1.0, tilt=(0.3, 0.2)) -> ScalarField:
    return ScalarField.from_function(
        grid,
        lambda x: amp * (x[..., 0] ** 2 - x[..., 1] ** 2) + tilt[0] * x[..., 0] + tilt[1] * x[..., 1],
    )


def make_spec(
    n: int = 17,
    p: float = 2.0,
    deltas=(0.0, 0.0),
    eps: float = 1e-2,
    boundary: ScalarField | None = None,
    lower=None,
    radius: float = 0.5,
) -> ProblemSpec:
    grid = make_grid(n)
    if boundary is None:
        boundary = affine_field(grid, (1.0, 0.0))
    kwargs = {}
    if lower is not None:
        kwargs["lower"] = lower
    return ProblemSpec(
        grid=grid,
        ball=Ball((0.0, 0.0), radius),
        p=p,
        deltas=DegeneracyVector(deltas),
        eps=eps,
        boundary=boundary,
        **kwargs,
    )


def sine_load(grid: Grid, amp: float = 1.0) -> LinearLowerOrder:
    return LinearLowerOrder(
        ScalarField.from_function(grid, lambda x: amp * np.sin(1.3 * x[..., 0]) * np.cos(0.7 * x[..., 1]))
    )


def smooth_abs_lower(grid: Grid, scale: float = 0.8) -> NonlinearLowerOrder:
    def G(points, xi):
        return scale * np.sqrt(1.0 + np.asarray(xi) ** 2)

    def G_xi(points, xi):
        xi = np.asarray(xi)
        return scale * xi / np.sqrt(1.0 + xi**2)

    return NonlinearLowerOrder(
        G,
        G_xi,
        a=ScalarField.constant(grid, 2.0 * scale),
        b=ScalarField.constant(grid, scale),
        gamma=2.0,
    )


@pytest.fixture
def grid17():
    return make_grid(17)


@pytest.fixture
def ball05():
    return Ball((0.0, 0.0), 0.5)
