"""
Numerical instantiation of the energy inequalities.

Each checker evaluates both sides of one estimate on a concrete discrete
solution and returns an :class:`InequalityReport` whose ``implied_constant``
(LHS over the unit-constant RHS) stands in for the generic constants that
the estimates leave untracked.  All field quantities are evaluated at cell
centers: gradients by midpoint-averaging the staggered components, second
derivatives by nested differences of those cell fields (first-order
consistent), cut-offs analytically from their radial profile.  Integrals
are cell sums clipped to balls by the indicator-at-cell-center rule, which
every report records in its metadata.

The checkers are pure functions of immutable inputs and can run in parallel
across instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.optimize

from ..energy import NoLowerOrder, ProblemSpec, g_eps_second
from ..grid import (
    Ball,
    CutoffProfile,
    GradientField,
    ScalarField,
    cell_gradient,
    cell_mask,
    gradient,
    linf_norm,
    lp_norm,
    region_measure,
)
from .ladder import staircase_indices, two_star
from .report import InequalityReport

__all__ = [
    "ScalarMap",
    "check_caccioppoli",
    "check_weird_caccioppoli",
    "check_staircase",
    "staircase_chain",
    "check_power_caccioppoli",
    "check_reverse_holder",
    "check_lipschitz_estimate",
    "check_uniform_estimate",
    "uniform_estimate_record",
    "fit_sigma_exponents",
    "check_propagation",
]


@dataclass(frozen=True)
class ScalarMap:
    """A scalar map together with its derivative, for weight functions."""

    value: Callable
    deriv: Callable
    name: str = ""

    @classmethod
    def identity(cls) -> "ScalarMap":
        return cls(lambda t: np.asarray(t, float).copy(), lambda t: np.ones_like(np.asarray(t, float)), "t")

    @classmethod
    def constant(cls, c: float = 1.0) -> "ScalarMap":
        return cls(
            lambda t, c=c: np.full_like(np.asarray(t, float), c),
            lambda t: np.zeros_like(np.asarray(t, float)),
            f"{c}",
        )

    @classmethod
    def power(cls, e: float) -> "ScalarMap":
        """t^e on t >= 0 (exponent 0 gives the constant map 1)."""
        if e == 0:
            return cls.constant(1.0)
        return cls(
            lambda t, e=e: np.asarray(t, float) ** e,
            lambda t, e=e: e * np.asarray(t, float) ** (e - 1.0),
            f"t^{e}",
        )

    @classmethod
    def abs_power(cls, e: float) -> "ScalarMap":
        """|t|^{e+1}/(e+1), a convex even C^1 map for e >= 1."""
        return cls(
            lambda t, e=e: np.abs(t) ** (e + 1.0) / (e + 1.0),
            lambda t, e=e: np.sign(t) * np.abs(t) ** e,
            f"|t|^{e + 1}/{e + 1}",
        )


def _sample_xs(arr: np.ndarray, n: int = 65) -> np.ndarray:
    lo, hi = float(np.min(arr)), float(np.max(arr))
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def _require_convex(m: ScalarMap, arr: np.ndarray, what: str, tol: float = 1e-9):
    xs = _sample_xs(arr)
    v = np.asarray(m.value(xs), float)
    second = v[2:] - 2 * v[1:-1] + v[:-2]
    if np.min(second) < -tol * max(1.0, float(np.max(np.abs(v)))):
        raise ValueError(f"{what} is not convex on the sampled range")


def _require_nondecreasing(m: ScalarMap, arr: np.ndarray, what: str, tol: float = 1e-9):
    xs = _sample_xs(arr)
    v = np.asarray(m.value(xs), float)
    if np.min(np.diff(v)) < -tol * max(1.0, float(np.max(np.abs(v)))):
        raise ValueError(f"{what} is not non-decreasing on the sampled range")


class _CellContext:
    """Cell-centered fields shared by the Caccioppoli-family checkers."""

    def __init__(self, u: ScalarField, spec: ProblemSpec, inner: Ball, outer: Ball):
        if inner.center != outer.center or inner.radius >= outer.radius:
            raise ValueError("need concentric balls with inner radius < outer radius")
        grid = spec.grid
        if not grid.contains_ball(outer):
            raise ValueError("outer ball escapes the grid")
        self.grid = grid
        self.spec = spec
        self.vol = grid.cell_volume
        self.w = cell_gradient(gradient(u))  # (cells..., dim)
        self.g2 = [
            g_eps_second(self.w[..., i], spec.p, spec.deltas[i], spec.eps, spec.smooth_p2)
            for i in range(grid.dim)
        ]
        pts = grid.cell_points()
        prof = CutoffProfile(inner, outer)
        self.eta = prof.values(pts)
        self.geta = prof.grad(pts)
        self.geta2 = np.sum(self.geta**2, axis=-1)
        self.mask = cell_mask(grid, outer)
        self.df = spec.data_gradient_cells(u)  # composed load gradient
        self.homogeneous = spec.deltas.is_zero and isinstance(spec.lower, NoLowerOrder)
        # nested differences of the cell gradient: hess[a][b] ~ d_b u_{x_a}
        self.hess = [
            [np.gradient(self.w[..., a], grid.spacing[b], axis=b) for b in range(grid.dim)]
            for a in range(grid.dim)
        ]

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values[self.mask]) * self.vol)

    def base_metadata(self, inner: Ball, outer: Ball, **exponents) -> dict:
        return {
            "spacing": list(self.grid.spacing),
            "radii": [inner.radius, outer.radius],
            "eps": self.spec.eps,
            "exponents": {"p": self.spec.p, **exponents},
            "regime": "homogeneous" if self.homogeneous else "nonhomogeneous",
        }


def check_caccioppoli(
    u: ScalarField,
    spec: ProblemSpec,
    Phi: ScalarMap,
    j: int,
    inner: Ball,
    outer: Ball,
    budget: Optional[float] = None,
) -> InequalityReport:
    """Base Caccioppoli bound for a convex image of one gradient component.

    LHS: sum_i int g''_i(u_{x_i}) |(Phi(u_{x_j}))_{x_i}|^2 eta^2.
    RHS: the same weights against Phi(u_{x_j})^2 eta_{x_i}^2, plus the load
    term int |d_j f| |Phi'| |Phi| eta^2.
    """
    ctx = _CellContext(u, spec, inner, outer)
    wj = ctx.w[..., j]
    _require_convex(Phi, wj, "Phi")
    phi_vals = np.asarray(Phi.value(wj), float)
    lhs = 0.0
    grad_term = 0.0
    for i in range(ctx.grid.dim):
        dphi = np.gradient(phi_vals, ctx.grid.spacing[i], axis=i)
        lhs += ctx.integrate(ctx.g2[i] * dphi**2 * ctx.eta**2)
        grad_term += ctx.integrate(ctx.g2[i] * phi_vals**2 * ctx.geta[..., i] ** 2)
    data_term = ctx.integrate(
        np.abs(ctx.df[..., j]) * np.abs(Phi.deriv(wj)) * np.abs(phi_vals) * ctx.eta**2
    )
    return InequalityReport(
        name="caccioppoli",
        lhs=lhs,
        rhs_terms={"gradient_term": grad_term, "data_term": data_term},
        budget=budget,
        metadata={**ctx.base_metadata(inner, outer), "axis_j": j, "Phi": Phi.name},
    )


def check_weird_caccioppoli(
    u: ScalarField,
    spec: ProblemSpec,
    Phi: ScalarMap,
    Psi: ScalarMap,
    theta: float,
    j: int,
    k: int,
    inner: Ball,
    outer: Ball,
    budget: Optional[float] = None,
) -> InequalityReport:
    """Mixed-direction Caccioppoli bound with weight split exponent theta.

    Couples the second differences of u_{x_j} with weights in u_{x_k}
    through a product of square roots; the two data integrals E1 (from the
    inner absorption) and E2 (from the direct load pairing) are reported
    individually in the metadata.
    """
    if not (0 <= theta <= 2):
        raise ValueError(f"theta must lie in [0, 2], got {theta}")
    ctx = _CellContext(u, spec, inner, outer)
    wj, wk = ctx.w[..., j], ctx.w[..., k]
    _require_nondecreasing(Phi, wj**2, "Phi")
    _require_nondecreasing(Psi, wk**2, "Psi")
    _require_convex(Psi, wk**2, "Psi")
    pj = np.asarray(Phi.value(wj**2), float)
    pk = np.asarray(Psi.value(wk**2), float)
    dpk = np.asarray(Psi.deriv(wk**2), float)

    lhs = 0.0
    t1 = 0.0
    s2 = 0.0
    s3 = 0.0
    for i in range(ctx.grid.dim):
        hji = ctx.hess[j][i]
        lhs += ctx.integrate(ctx.g2[i] * hji**2 * pj * pk * ctx.eta**2)
        t1 += ctx.integrate(ctx.g2[i] * wj**2 * pj * pk * ctx.geta2)
        s2 += ctx.integrate(ctx.g2[i] * hji**2 * wj**2 * pj**2 * dpk**theta * ctx.eta**2)
        s3 += ctx.integrate(ctx.g2[i] * np.abs(wk) ** (2 * theta) * pk ** (2 - theta) * ctx.geta2)
    e1 = ctx.integrate(
        np.abs(ctx.df[..., k])
        * np.abs(wk) ** (theta + 1)
        * np.abs(pk * dpk) ** (1 - theta / 2)
        * ctx.eta**2
    )
    e2 = ctx.integrate(np.abs(ctx.df[..., j]) * np.abs(wj) * pj * pk * ctx.eta**2)
    cross = np.sqrt(s2) * (np.sqrt(s3) + np.sqrt(e1))
    return InequalityReport(
        name="weird_caccioppoli",
        lhs=lhs,
        rhs_terms={"gradient_term": t1, "cross_term": float(cross), "data_term": e2},
        budget=budget,
        metadata={
            **ctx.base_metadata(inner, outer, theta=theta),
            "axis_j": j,
            "axis_k": k,
            "Phi": Phi.name,
            "Psi": Psi.name,
            "factors": {"S2": s2, "S3": s3, "E1": e1, "E2": e2},
        },
    )


def check_staircase(
    u: ScalarField,
    spec: ProblemSpec,
    s: int,
    m: int,
    j: int,
    k: int,
    inner: Ball,
    outer: Ball,
    budget: Optional[float] = None,
) -> InequalityReport:
    """One rung of the power-splitting recursion.

    LHS: sum_i int g''_i u_{x_i x_j}^2 |u_{x_j}|^{2s-2} |u_{x_k}|^{2m} eta^2.
    RHS: the two gradient integrals |u|^{2s+2m} |grad eta|^2 (the k-term
    weighted by m+1; in the non-homogeneous regime both are), the recursive
    term with doubled s and reduced m (unit constant), and, when a load or
    degeneracy is active, the |grad f| integral with its m^2 weight.  The
    recursive term equals the LHS of the next rung (s, m) -> (2s, m - s).
    """
    if not (1 <= s <= m):
        raise ValueError(f"need 1 <= s <= m, got s={s}, m={m}")
    ctx = _CellContext(u, spec, inner, outer)
    wj, wk = ctx.w[..., j], ctx.w[..., k]
    lhs = 0.0
    rec = 0.0
    int_gj = 0.0
    int_gk = 0.0
    for i in range(ctx.grid.dim):
        hji = ctx.hess[j][i]
        lhs += ctx.integrate(
            ctx.g2[i] * hji**2 * np.abs(wj) ** (2 * s - 2) * np.abs(wk) ** (2 * m) * ctx.eta**2
        )
        rec += ctx.integrate(
            ctx.g2[i] * hji**2 * np.abs(wj) ** (4 * s - 2) * np.abs(wk) ** (2 * m - 2 * s) * ctx.eta**2
        )
        int_gj += ctx.integrate(ctx.g2[i] * np.abs(wj) ** (2 * s + 2 * m) * ctx.geta2)
        int_gk += ctx.integrate(ctx.g2[i] * np.abs(wk) ** (2 * s + 2 * m) * ctx.geta2)
    if ctx.homogeneous:
        rhs = {"grad_j": int_gj, "grad_k": (m + 1) * int_gk, "recursive": rec}
    else:
        data = ctx.integrate(
            np.sqrt(np.sum(ctx.df**2, axis=-1))
            * (np.abs(wk) ** (2 * s + 2 * m - 1) + np.abs(wj) ** (2 * s + 2 * m - 1))
            * ctx.eta**2
        )
        rhs = {
            "grad_j": (m + 1) * int_gj,
            "grad_k": (m + 1) * int_gk,
            "recursive": rec,
            "data": m**2 * data,
        }
    return InequalityReport(
        name="staircase",
        lhs=lhs,
        rhs_terms=rhs,
        budget=budget,
        metadata={
            **ctx.base_metadata(inner, outer, s=s, m=m),
            "axis_j": j,
            "axis_k": k,
            "weights": {"grad_k": m + 1, "data": m**2},
        },
    )


def staircase_chain(
    u: ScalarField,
    spec: ProblemSpec,
    ell0: int,
    j: int,
    k: int,
    inner: Ball,
    outer: Ball,
    budget: Optional[float] = None,
) -> list[InequalityReport]:
    """Reports for the whole index family (s_l, m_l), l = 0..ell0 - 1."""
    return [
        check_staircase(u, spec, s, m, j, k, inner, outer, budget=budget)
        for s, m in staircase_indices(ell0)[:-1]
    ]


def check_power_caccioppoli(
    u: ScalarField,
    spec: ProblemSpec,
    ell0: int,
    k: int,
    inner: Ball,
    outer: Ball,
    budget: Optional[float] = None,
) -> InequalityReport:
    """Gradient bound for the power q + p/2 of one component, q = 2^ell0 - 1.

    LHS: int |grad( |u_{x_k}|^{q + (p-2)/2} u_{x_k} )|^2 eta^2 in the
    homogeneous regime, or the degeneracy-clipped power
    (|u_{x_k}| - delta_k)_+^{p/2} |u_{x_k}|^q otherwise.  The RHS integrals
    carry the explicit q^5 weights of the chained recursion.
    """
    if int(ell0) != ell0 or ell0 < 1:
        raise ValueError(f"ell0 must be a positive integer (q = 2^ell0 - 1), got {ell0}")
    q = 2**ell0 - 1
    ctx = _CellContext(u, spec, inner, outer)
    wk = ctx.w[..., k]
    if ctx.homogeneous:
        power_field = np.abs(wk) ** (q + (spec.p - 2.0) / 2.0) * wk
    else:
        clipped = np.maximum(np.abs(wk) - spec.deltas[k], 0.0)
        power_field = clipped ** (spec.p / 2.0) * np.abs(wk) ** q
    lhs = 0.0
    for a in range(ctx.grid.dim):
        dpa = np.gradient(power_field, ctx.grid.spacing[a], axis=a)
        lhs += ctx.integrate(dpa**2 * ctx.eta**2)
    grad_all = 0.0
    grad_k = 0.0
    for i in range(ctx.grid.dim):
        for jj in range(ctx.grid.dim):
            grad_all += ctx.integrate(ctx.g2[i] * np.abs(ctx.w[..., jj]) ** (2 * q + 2) * ctx.geta2)
        grad_k += ctx.integrate(ctx.g2[i] * np.abs(wk) ** (2 * q + 2) * ctx.geta2)
    rhs = {"grad_all_pairs": q**5 * grad_all, "grad_k": q**5 * grad_k}
    if not ctx.homogeneous:
        data = ctx.integrate(
            np.sqrt(np.sum(ctx.df**2, axis=-1))
            * (
                np.abs(wk) ** (2 * q + 1)
                + np.sum(np.abs(ctx.w) ** (2 * q + 1), axis=-1)
            )
            * ctx.eta**2
        )
        rhs["data"] = q**5 * data
    return InequalityReport(
        name="power_caccioppoli",
        lhs=lhs,
        rhs_terms=rhs,
        budget=budget,
        metadata={
            **ctx.base_metadata(inner, outer, q=q, ell0=ell0),
            "axis_k": k,
            "weights": {"q5": q**5},
        },
    )


def _max_component_cells(u: ScalarField) -> np.ndarray:
    return np.max(np.abs(cell_gradient(gradient(u))), axis=-1)


def check_reverse_holder(
    u: ScalarField,
    spec: ProblemSpec,
    q: int,
    t: float,
    s_r: float,
    R: float,
    h: Optional[float] = None,
    budget: Optional[float] = None,
) -> InequalityReport:
    """One rung of the reverse Hoelder scheme on shrinking balls.

    Radii follow the normalized-chart convention t < s_r <= R <= 1.  The
    driving function is the componentwise gradient maximum, normalized by
    1/(2 delta_agg) in the non-homogeneous regime where the estimate is
    measured against d mu = (U - 1/2)_+^{(2*/2) p} dx and carries the
    (1 + |grad f| norm) factor.
    """
    if not (0 < t < s_r <= R <= 1):
        raise ValueError(f"need 0 < t < s < R <= 1, got t={t}, s={s_r}, R={R}")
    if q < 1 or int(q) != q:
        raise ValueError(f"q must be a positive integer, got {q}")
    grid = spec.grid
    center = spec.ball.center
    bt, bs, bR = Ball(center, t), Ball(center, s_r), Ball(center, R)
    for b in (bt, bs, bR):
        if not grid.contains_ball(b):
            raise ValueError("reverse Hoelder ball escapes the grid")
    ts = float(two_star(grid.dim))
    p = spec.p
    vol = grid.cell_volume
    mt, ms = cell_mask(grid, bt), cell_mask(grid, bs)
    homogeneous = spec.deltas.is_zero and isinstance(spec.lower, NoLowerOrder)
    if homogeneous:
        U = _max_component_cells(u)
        lhs = (float(np.sum(U[mt] ** (ts / 2 * (2 * q + p)))) * vol) ** (2.0 / ts)
        lead = q**5 / (s_r - t) ** 2 * float(np.sum(U[ms] ** (2 * q + p) + 1.0)) * vol
        rhs = {"leading": lead}
        exps = {"lhs_power": ts / 2 * (2 * q + p), "rhs_power": 2 * q + p}
    else:
        dagg = spec.deltas.delta_agg
        U = _max_component_cells(u) / (2.0 * dagg)
        mu_w = np.maximum(U - 0.5, 0.0) ** (ts / 2 * p)
        hh = float(h) if h is not None else float(grid.dim)
        if hh * 2 <= grid.dim:
            raise ValueError(f"need h > N/2, got h={hh}")
        hp = hh / (hh - 1.0)
        lhs = (float(np.sum(U[mt] ** (ts * q) * mu_w[mt])) * vol) ** (2.0 / ts)
        fnorm = _data_grad_norm(spec, u, hh, bR)
        base = float(np.sum(U[ms] ** ((2 * q + 2) * hp))) * vol + 1.0
        lead = (
            q**5 / (s_r - t) ** 2 * (1.0 + fnorm) * base ** ((2 * q + p) / ((2 * q + 2) * hp))
        )
        rhs = {"leading": lead}
        exps = {
            "lhs_power": ts * q,
            "mu_power": ts / 2 * p,
            "rhs_power": (2 * q + 2) * hp,
            "h": hh,
            "h_conj": hp,
        }
    return InequalityReport(
        name="reverse_holder",
        lhs=lhs,
        rhs_terms=rhs,
        budget=budget,
        metadata={
            "spacing": list(grid.spacing),
            "radii": [t, s_r, R],
            "eps": spec.eps,
            "exponents": {"p": p, "q": q, "two_star": ts, **exps},
            "regime": "homogeneous" if homogeneous else "nonhomogeneous",
            "sobolev_convention": "surrogate 2*=4 in 2D" if grid.dim == 2 else "2*=2N/(N-2)",
            "weights": {"q5": q**5},
        },
    )


def _data_grad_norm(spec: ProblemSpec, u: ScalarField, h: float, ball: Ball) -> float:
    """L^h norm over a ball of the composed load gradient (cell samples)."""
    if isinstance(spec.lower, NoLowerOrder):
        return 0.0
    df = spec.data_gradient_cells(u)
    mag = np.sqrt(np.sum(df**2, axis=-1))
    m = cell_mask(spec.grid, ball)
    return float(np.sum(mag[m] ** h) * spec.grid.cell_volume) ** (1.0 / h)


def check_lipschitz_estimate(
    u: ScalarField,
    f: Optional[ScalarField],
    grad_f: Optional[GradientField],
    p: float,
    R0: float,
    h: float,
    center: Optional[tuple] = None,
    budget: Optional[float] = None,
) -> InequalityReport:
    """Scaling-invariant gradient bound (zero-degeneracy regime).

    LHS: sup of |grad u| on the half ball.  RHS: the measure-normalized
    L^p average of |grad u| on the full ball, plus
    [R0^2 (avg |grad f|^h)^{1/h}]^{1/(p-1)}.  Both sides are positively
    1-homogeneous under (u, f) -> (lam u, lam^{p-1} f), so the implied
    constant is invariant under that replay and under the spatial rescaling
    that maps the ball radius to 1.
    """
    grid = u.grid
    if center is None:
        center = tuple(o + 0.5 * e for o, e in zip(grid.origin, grid.extent))
    ball = Ball(center, R0)
    if not grid.contains_ball(ball, scale=2.0):
        raise ValueError("Lipschitz estimate needs the doubled ball inside the grid")
    half = Ball(center, R0 / 2.0)
    gu = gradient(u)
    lhs = linf_norm(gu, half)
    measure = region_measure(grid, ball, kind="cell")
    grad_avg = (lp_norm(gu, p, ball) ** p / measure) ** (1.0 / p)
    if f is None:
        data_term = 0.0
    else:
        gf = grad_f if grad_f is not None else gradient(f)
        f_avg = (lp_norm(gf, h, ball) ** h / measure) ** (1.0 / h)
        data_term = (R0**2 * f_avg) ** (1.0 / (p - 1.0))
    return InequalityReport(
        name="lipschitz_estimate",
        lhs=lhs,
        rhs_terms={"gradient_lp_average": grad_avg, "data_term": data_term},
        budget=budget,
        metadata={
            "spacing": list(grid.spacing),
            "radii": [R0 / 2.0, R0],
            "exponents": {"p": p, "h": h},
            "center": list(center),
        },
    )


def uniform_estimate_record(result, spec: ProblemSpec, r0: float, R0: float, h: float) -> dict:
    """Raw norms of one instance, input to the exponent fit."""
    center = spec.ball.center
    gu = gradient(result.u)
    return {
        "lhs": linf_norm(gu, Ball(center, r0)),
        "grad_norm": lp_norm(gu, spec.p, Ball(center, R0)),
        "data_norm": _data_grad_norm(spec, result.u, h, Ball(center, R0)),
        "gap": R0 - r0,
        "eps": result.eps,
    }


def fit_sigma_exponents(records, bounds=(0.0, 10.0)) -> tuple[float, float, float]:
    """Least-squares fit of (sigma1, sigma2, C) in log space.

    Model: log lhs ~ log C + log((1 + F^sigma2)/gap^sigma2) +
    log(A^sigma1 + 1), over the sweep records.  The exponents exist only
    abstractly; the fitted values are empirical descriptors of the sweep.
    """
    lhs = np.array([r["lhs"] for r in records])
    A = np.array([r["grad_norm"] for r in records])
    F = np.array([r["data_norm"] for r in records])
    gap = np.array([r["gap"] for r in records])
    if np.any(lhs <= 0):
        raise ValueError("exponent fit needs strictly positive LHS values")

    def residuals(x):
        logc, s1, s2 = x
        model = logc + np.log((1.0 + F**s2) / gap**s2) + np.log(A**s1 + 1.0)
        return model - np.log(lhs)

    fit = scipy.optimize.least_squares(
        residuals,
        x0=np.array([0.0, 1.0, 1.0]),
        bounds=([-np.inf, bounds[0], bounds[0]], [np.inf, bounds[1], bounds[1]]),
    )
    logc, s1, s2 = fit.x
    return float(s1), float(s2), float(np.exp(logc))


def check_uniform_estimate(
    result,
    spec: ProblemSpec,
    r0: float,
    R0: float,
    sigma1: float,
    sigma2: float,
    h: Optional[float] = None,
    budget: Optional[float] = None,
) -> InequalityReport:
    """Gradient sup bound at fitted exponents, tracked across eps.

    LHS: sup |grad u_eps| on the inner ball.  RHS:
    (1 + |grad f|_h^sigma2)/(R0 - r0)^sigma2 * (|grad u|_p^sigma1 + 1).
    Instantiated per solve; eps-uniformity is asserted by replaying the
    continuation schedule and watching the implied constant.
    """
    if not (0 < r0 < R0 <= 1):
        raise ValueError(f"need 0 < r0 < R0 <= 1, got r0={r0}, R0={R0}")
    hh = float(h) if h is not None else float(spec.grid.dim)
    rec = uniform_estimate_record(result, spec, r0, R0, hh)
    rhs = (
        (1.0 + rec["data_norm"] ** sigma2)
        / (R0 - r0) ** sigma2
        * (rec["grad_norm"] ** sigma1 + 1.0)
    )
    return InequalityReport(
        name="uniform_estimate",
        lhs=rec["lhs"],
        rhs_terms={"fitted_bound": rhs},
        budget=budget,
        metadata={
            "spacing": list(spec.grid.spacing),
            "radii": [r0, R0],
            "eps": result.eps,
            "exponents": {"p": spec.p, "h": hh, "sigma1": sigma1, "sigma2": sigma2},
            "norms": rec,
        },
    )


def check_propagation(
    u_limit: ScalarField,
    U: ScalarField,
    deltas,
    slack: Optional[float] = None,
    region: Optional[Ball] = None,
    budget: float = 1.0,
) -> InequalityReport:
    """Per-axis gradient transfer bound |u_{x_i} - U_{x_i}| <= 2 delta_i.

    Compares the staggered components directly (same locations on both
    fields).  ``slack`` (default twice the largest spacing) absorbs the
    discretization of the almost-everywhere statement.  The report LHS is
    the worst per-axis ratio against its bound, so the unit budget means
    every axis obeys its threshold.
    """
    if u_limit.grid != U.grid:
        raise ValueError("fields live on different grids")
    grid = u_limit.grid
    if slack is None:
        slack = 2.0 * max(grid.spacing)
    gu, gU = gradient(u_limit), gradient(U)
    ratios = {}
    maxima = {}
    from ..grid import stag_mask

    for i in range(grid.dim):
        diff = np.abs(gu.components[i] - gU.components[i])
        if region is not None:
            m = stag_mask(grid, i, region)
            diff = diff[m]
        d = float(np.max(diff)) if diff.size else 0.0
        bound = 2.0 * float(deltas[i]) + slack
        maxima[f"axis{i}_max_diff"] = d
        ratios[f"axis{i}"] = d / bound
    lhs = max(ratios.values())
    return InequalityReport(
        name="propagation",
        lhs=lhs,
        rhs_terms={"unit": 1.0},
        budget=budget,
        metadata={
            "spacing": list(grid.spacing),
            "radii": [] if region is None else [region.radius],
            "slack": slack,
            "per_axis": {**maxima, **{f"{k}_ratio": v for k, v in ratios.items()}},
            "exponents": {"deltas": [float(deltas[i]) for i in range(grid.dim)]},
        },
    )
