"""
Moser ladder arithmetic in exact rational numbers.

The iteration bookkeeping behind the gradient bound is pure exponent
algebra: a geometric family of integrability exponents, the interpolation
weights tying three consecutive norms together, and the cut indices where
the non-homogeneous scheme may start.  Everything here is computed with
``fractions.Fraction`` so the identities hold exactly, not to rounding.

Notation (all per table row j):

* ``gamma``      - the running integrability exponent,
* ``gamma_hat``  - the Sobolev-boosted exponent gained in one step,
* ``ratio``      - gamma_j / gamma_{j-1},
* ``tau``        - interpolation weight zeta(gamma_hat/gamma, ratio) with
                   zeta(x, y) = (x - 1)/(x y - 1).

Homogeneous regime (no load, no degeneracy): gamma_j = p + 2^{j+2} - 2,
gamma_hat = (2*/2) gamma_j, tau decreasing to
tau_bar = (2* - 2)/(2 (2* - 1)).  Non-homogeneous regime (load in W^{1,h},
h > N/2, conjugate h' = h/(h-1)): gamma_j = 2^{j+2} h' - (2*/2) p,
gamma_hat_j = 2* (2^{j+1} - 1), valid from the first index j0 whose odd
exponent q = 2^{j+1} - 1 clears the admissibility floor, with
tau_bar = (2* - 2h')/(4*2* - 2h').
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

__all__ = [
    "LadderRow",
    "LadderTable",
    "ladder",
    "tau_monotonicity_check",
    "staircase_indices",
    "two_star",
    "zeta",
]

REGIMES = ("homogeneous", "nonhomogeneous")

#: In two dimensions the Sobolev exponent 2N/(N-2) is formally infinite; all
#: 2D tables use this surrogate value and flag it in ``sobolev_convention``.
TWO_STAR_SURROGATE_2D = Fraction(4)


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def two_star(N: int) -> Fraction:
    if N < 2:
        raise ValueError(f"dimension must be >= 2, got {N}")
    if N == 2:
        return TWO_STAR_SURROGATE_2D
    return Fraction(2 * N, N - 2)


def zeta(x: Fraction, y: Fraction) -> Fraction:
    """Interpolation weight (x - 1)/(x y - 1)."""
    return (x - 1) / (x * y - 1)


@dataclass(frozen=True)
class LadderRow:
    j: int
    gamma: Fraction
    gamma_hat: Fraction
    ratio: Optional[Fraction]  # gamma_j / gamma_{j-1}, None on the first row
    tau: Optional[Fraction]


@dataclass(frozen=True)
class LadderTable:
    regime: str
    p: Fraction
    N: int
    h: Fraction
    h_conj: Fraction
    two_star: Fraction
    tau_bar: Fraction
    beta: Fraction
    j0: int
    j1: Optional[int]
    q1: Optional[int]
    rows: tuple[LadderRow, ...]
    sobolev_convention: str

    def row(self, j: int) -> LadderRow:
        for r in self.rows:
            if r.j == j:
                return r
        raise KeyError(f"no row j={j} in table")

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "p": str(self.p),
            "N": self.N,
            "h": str(self.h),
            "h_conj": str(self.h_conj),
            "two_star": str(self.two_star),
            "tau_bar": str(self.tau_bar),
            "tau_bar_float": float(self.tau_bar),
            "beta": str(self.beta),
            "beta_float": float(self.beta),
            "j0": self.j0,
            "j1": self.j1,
            "q1": self.q1,
            "sobolev_convention": self.sobolev_convention,
            "rows": [
                {
                    "j": r.j,
                    "gamma": str(r.gamma),
                    "gamma_float": float(r.gamma),
                    "gamma_hat": str(r.gamma_hat),
                    "ratio": None if r.ratio is None else str(r.ratio),
                    "tau": None if r.tau is None else str(r.tau),
                    "tau_float": None if r.tau is None else float(r.tau),
                }
                for r in self.rows
            ],
        }


def ladder(regime: str, p, N: int, h, j_max: int) -> LadderTable:
    """Exact exponent table for one regime.

    Requires p >= 2 and, for the non-homogeneous regime, h > N/2 (the
    conjugate exponent then satisfies h' < 2*/2 so each Sobolev step gains).
    """
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
    p = _frac(p)
    h = _frac(h)
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    if h * 2 <= N:
        raise ValueError(f"need h > N/2, got h={h}, N={N}")
    ts = two_star(N)
    h_conj = h / (h - 1)
    convention = "surrogate 2*=4 in 2D" if N == 2 else "2*=2N/(N-2)"

    if regime == "homogeneous":
        tau_bar = (ts - 2) / (2 * (ts - 1))
        beta = (1 - tau_bar) / tau_bar
        j0, j1, q1 = 0, None, None

        def gamma(j: int) -> Fraction:
            return p + 2 ** (j + 2) - 2

        def gamma_hat(j: int) -> Fraction:
            return ts / 2 * gamma(j)

        j_start = 0
        tau_start = 1
    else:
        tau_bar = (ts - 2 * h_conj) / (4 * ts - 2 * h_conj)
        beta = (1 - tau_bar) / tau_bar * h_conj
        floor = max((p - 2 * h_conj) / (2 * (h_conj - 1)), ts * p / (2 * h_conj) - 1)
        j0 = 0
        while Fraction(2 ** (j0 + 1) - 1) < floor:
            j0 += 1

        def gamma(j: int) -> Fraction:
            return 2 ** (j + 2) * h_conj - ts / 2 * p

        def gamma_hat(j: int) -> Fraction:
            return ts * (2 ** (j + 1) - 1)

        # smallest j >= j0 with 2^{j+1} >= 1 + gamma_{j0}/2*
        j1 = j0
        target = 1 + gamma(j0) / ts
        while Fraction(2 ** (j1 + 1)) < target:
            j1 += 1
        q1 = 2 ** (j1 + 1) - 1
        j_start = j0
        tau_start = j0 + 1

    if j_max < j_start:
        raise ValueError(f"j_max={j_max} below the first valid index {j_start}")

    rows = []
    for j in range(j_start, j_max + 1):
        g = gamma(j)
        if g <= 0:
            raise ValueError(f"exponent gamma_{j}={g} is not positive")
        ratio = None if j == j_start else g / gamma(j - 1)
        tau = None
        if j >= tau_start:
            tau = zeta(gamma_hat(j) / g, ratio)
        rows.append(LadderRow(j=j, gamma=g, gamma_hat=gamma_hat(j), ratio=ratio, tau=tau))

    return LadderTable(
        regime=regime,
        p=p,
        N=N,
        h=h,
        h_conj=h_conj,
        two_star=ts,
        tau_bar=tau_bar,
        beta=beta,
        j0=j0,
        j1=j1,
        q1=q1,
        rows=tuple(rows),
        sobolev_convention=convention,
    )


def tau_monotonicity_check(table: LadderTable) -> bool:
    """Recompute the interpolation weights from the stored exponents and
    verify their required range and ordering.

    Checks, in both regimes: tau in (0, 1) and tau >= tau_bar.  In the
    homogeneous regime the sequence must additionally be non-increasing; in
    the non-homogeneous regime the consecutive exponent ratios must satisfy
    2 <= gamma_j/gamma_{j-1} <= 4 from j0 + 1 on.  Operating on the stored
    values makes the check sensitive to a tampered table.
    """
    prev_tau = None
    for prev, row in zip(table.rows, table.rows[1:]):
        if prev.gamma >= row.gamma:
            return False
        ratio = row.gamma / prev.gamma
        tau = zeta(row.gamma_hat / row.gamma, ratio)
        if not (0 < tau < 1):
            return False
        if tau < table.tau_bar:
            return False
        if table.regime == "homogeneous":
            if prev_tau is not None and tau > prev_tau:
                return False
            prev_tau = tau
        else:
            if row.j >= table.j0 + 1 and not (2 <= ratio <= 4):
                return False
            if row.gamma_hat / row.gamma < table.two_star / (2 * table.h_conj):
                return False
    return True


def staircase_indices(ell0: int) -> list[tuple[int, int]]:
    """Index family (s_l, m_l) = (2^l, q + 1 - 2^l) for l = 0..ell0.

    Each pair sums to q + 1 = 2^ell0; consecutive pairs satisfy the
    recursion s_{l+1} = 2 s_l, m_{l+1} = m_l - s_l, ending at m = 0.
    """
    if ell0 < 1 or int(ell0) != ell0:
        raise ValueError(f"ell0 must be a positive integer, got {ell0}")
    q = 2**ell0 - 1
    return [(2**l, q + 1 - 2**l) for l in range(ell0 + 1)]
