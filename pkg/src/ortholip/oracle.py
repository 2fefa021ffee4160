"""
Independent brute-force references for tiny instances.

Everything here deliberately avoids the solver's descent machinery: the
coordinate-descent minimizer walks the nodes with scalar arithmetic and a
safeguarded root bracket, and the Laplace reference assembles its dense
stencil matrix directly.  Shared code is limited to the grid containers and
the integrand formulas.  Single-threaded on purpose: the sweep order is part
of the contract.
"""

from __future__ import annotations

import math

import numpy as np

from .energy import ProblemSpec, el_residual_norm, energy_total, NoLowerOrder
from .grid import Ball, ScalarField, node_mask

__all__ = [
    "coordinate_descent_minimize",
    "degenerate_minimizer_check",
    "poisson_reference",
]

MAX_ORACLE_UNKNOWNS = 64


def _gprime_scalar(t: float, p: float, delta: float, eps: float, smooth_p2: bool) -> float:
    """Scalar g_{i,eps}' duplicated in plain python for the oracle path."""
    a = abs(t)
    s = a - delta
    if smooth_p2 and p == 2.0 and delta > 0.0:
        w = 1e-3 * max(1.0, delta)
        if s <= 0.0:
            base = 0.0
        elif s <= w:
            base = s**3 / (3.0 * w * w)
        else:
            base = w / 3.0 + (s - w)
    else:
        base = s ** (p - 1.0) if s > 0.0 else 0.0
    return math.copysign(base, t) + eps * t


class _NodeStencil:
    """Incident in-ball edges and load callback of one free node."""

    __slots__ = ("flat", "pos", "edges", "f_const", "g_xi")

    def __init__(self, flat, pos):
        self.flat = flat
        self.pos = pos
        self.edges = []  # (neighbor_flat, h, delta, sign); sign = +1 if node is right end
        self.f_const = 0.0
        self.g_xi = None

    def derivative(self, v: float, u_flat, p, eps, vol, smooth_p2) -> float:
        acc = self.f_const
        if self.g_xi is not None:
            acc += float(self.g_xi(self.pos[None, :], np.array([v]))[0])
        d = acc * vol
        for nbr, h, delta, sign in self.edges:
            slope = sign * (v - u_flat[nbr]) / h
            d += sign * vol * _gprime_scalar(slope, p, delta, eps, smooth_p2) / h
        return d


def _build_stencils(spec: ProblemSpec):
    grid = spec.grid
    free = spec.free_mask
    flat_idx = np.arange(free.size).reshape(grid.shape)
    pts = grid.node_points()
    stencils = {}
    for idx in np.argwhere(free):
        fi = int(flat_idx[tuple(idx)])
        stencils[fi] = _NodeStencil(fi, pts[tuple(idx)])

    from .energy import LinearLowerOrder, NonlinearLowerOrder

    if isinstance(spec.lower, LinearLowerOrder):
        f_eff = spec._effective_linear_f()
        for st in stencils.values():
            st.f_const = float(f_eff.flat[st.flat])
    elif isinstance(spec.lower, NonlinearLowerOrder):
        for st in stencils.values():
            st.g_xi = spec.lower.G_xi

    # Every edge incident to a free node is part of the energy (free nodes
    # are strictly interior since 2B fits in the grid, so both axis
    # neighbours always exist).
    for idx in np.argwhere(free):
        fi = int(flat_idx[tuple(idx)])
        for i in range(grid.dim):
            h = grid.spacing[i]
            delta = spec.deltas[i]
            right = list(idx)
            right[i] += 1
            left = list(idx)
            left[i] -= 1
            # right edge: slope D = (u_right - v)/h, dE/dv = -g'(D)/h
            stencils[fi].edges.append((int(flat_idx[tuple(right)]), h, delta, -1.0))
            stencils[fi].edges.append((int(flat_idx[tuple(left)]), h, delta, +1.0))
    return stencils


def _minimize_node(st: _NodeStencil, u_flat, p, eps, vol, smooth_p2, tol=1e-14, max_iter=200) -> float:
    """Root of the monotone nodal derivative by safeguarded bisection.

    A secant proposal is accepted whenever it stays inside the bracket and
    shrinks it; otherwise the step falls back to plain bisection.
    """
    v = float(u_flat[st.flat])
    phi = st.derivative(v, u_flat, p, eps, vol, smooth_p2)
    if phi == 0.0:
        return v
    # expand a sign-changing bracket around the current value
    step = 1.0
    if phi > 0.0:
        hi, fhi = v, phi
        lo = v - step
        flo = st.derivative(lo, u_flat, p, eps, vol, smooth_p2)
        while flo > 0.0:
            step *= 2.0
            lo -= step
            flo = st.derivative(lo, u_flat, p, eps, vol, smooth_p2)
    else:
        lo, flo = v, phi
        hi = v + step
        fhi = st.derivative(hi, u_flat, p, eps, vol, smooth_p2)
        while fhi < 0.0:
            step *= 2.0
            hi += step
            fhi = st.derivative(hi, u_flat, p, eps, vol, smooth_p2)
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if fhi != flo:
            sec = lo - flo * (hi - lo) / (fhi - flo)
            if lo + 0.01 * (hi - lo) < sec < hi - 0.01 * (hi - lo):
                mid = sec
        fmid = st.derivative(mid, u_flat, p, eps, vol, smooth_p2)
        if fmid == 0.0:
            return mid
        if fmid > 0.0:
            hi, fhi = mid, fmid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


def coordinate_descent_minimize(
    spec: ProblemSpec,
    tol: float,
    residual_target: float | None = None,
    max_sweeps: int = 100000,
) -> ScalarField:
    """Global minimizer of a tiny instance by exact coordinate descent.

    Cycles over the free nodes in fixed lexicographic order, exactly
    minimizing the strictly convex one-dimensional restriction at each node.
    Terminates once a full sweep moves no node by more than ``tol`` (and,
    when given, the Euler-Lagrange residual is below ``residual_target``).
    Strict convexity makes the limit the global minimizer.
    """
    nfree = int(np.count_nonzero(spec.free_mask))
    if nfree > MAX_ORACLE_UNKNOWNS:
        raise ValueError(f"oracle limited to {MAX_ORACLE_UNKNOWNS} unknowns, got {nfree}")
    if spec.eps <= 0:
        raise ValueError("oracle needs eps > 0 for strict convexity")
    stencils = _build_stencils(spec)
    order = sorted(stencils)
    u_flat = spec.boundary_values().astype(float).ravel().copy()
    vol = spec.grid.cell_volume
    grid = spec.grid
    for sweep in range(max_sweeps):
        max_move = 0.0
        for fi in order:
            old = u_flat[fi]
            new = _minimize_node(stencils[fi], u_flat, spec.p, spec.eps, vol, spec.smooth_p2)
            u_flat[fi] = new
            max_move = max(max_move, abs(new - old))
        if max_move <= tol:
            if residual_target is None:
                break
            u = ScalarField(grid, u_flat.reshape(grid.shape).copy())
            if el_residual_norm(u, spec) <= residual_target:
                break
    else:
        raise RuntimeError(f"coordinate descent did not settle within {max_sweeps} sweeps")
    return ScalarField(grid, u_flat.reshape(grid.shape))


def degenerate_minimizer_check(u: ScalarField, spec: ProblemSpec) -> bool:
    """True iff ``u`` has zero degenerate energy and zero residual at eps = 0.

    Valid only without a lower-order term: any Lipschitz field whose
    per-axis slopes stay inside the degeneracy slabs is then a minimizer,
    and both quantities vanish exactly.
    """
    if not isinstance(spec.lower, NoLowerOrder):
        raise ValueError("degenerate minimizer check requires no lower-order term")
    eval_spec = spec.with_eps(0.0)
    return energy_total(u, eval_spec) == 0.0 and el_residual_norm(u, eval_spec) == 0.0


def poisson_reference(
    f: ScalarField | None,
    boundary: ScalarField,
    region: Ball | None = None,
) -> ScalarField:
    """Dense direct solve of the 5/7-point Laplacian, -lap u = f.

    With ``region=None`` every strictly interior node is an unknown and the
    outermost layer carries the Dirichlet data; with a ball, the free set
    and the edge activation follow the same strict-interior convention as
    the variational problem.  Used as the exact p = 2 reference.
    """
    grid = boundary.grid
    if f is not None and f.grid != grid:
        raise ValueError("load and boundary grids differ")

    if region is None:
        free = np.ones(grid.shape, dtype=bool)
        for a in range(grid.dim):
            sl = [slice(None)] * grid.dim
            sl[a] = 0
            free[tuple(sl)] = False
            sl[a] = -1
            free[tuple(sl)] = False
    else:
        free = node_mask(grid, region)

    flat = np.arange(free.size).reshape(grid.shape)
    free_flat = flat[free]
    col = {int(fi): k for k, fi in enumerate(free_flat)}
    n = len(col)
    if n == 0:
        return boundary.copy()

    A = np.zeros((n, n))
    rhs = np.zeros(n)
    if f is not None:
        rhs += f.values.ravel()[free_flat]
    ub = boundary.values.ravel()

    # classic row assembly: each free node couples to its 2*dim neighbours
    for idx in np.argwhere(free):
        row = col[int(flat[tuple(idx)])]
        for i in range(grid.dim):
            h2 = grid.spacing[i] ** 2
            for off in (-1, 1):
                nbr = list(idx)
                nbr[i] += off
                nf = int(flat[tuple(nbr)])
                A[row, row] += 1.0 / h2
                if nf in col:
                    A[row, col[nf]] -= 1.0 / h2
                else:
                    rhs[row] += ub[nf] / h2

    sol = np.linalg.solve(A, rhs)
    out = boundary.values.copy().ravel()
    out[free_flat] = sol
    return ScalarField(grid, out.reshape(grid.shape))
