"""
Absorption ("hole-filling") lemma: coefficient and sampled checker.

A bounded Z on [r, R] satisfying, for all r <= t < s <= R,

    Z(t) <= A/(s-t)^alpha0 + B/(s-t)^beta0 + C + theta Z(s),    theta < 1,

obeys the unconditional bound

    Z(r) <= coeff(lam) * [ A/(R-r)^alpha0 + B/(R-r)^beta0 + C ],

with coeff(lam) = lam^alpha0 / ((1-lam)^alpha0 (lam^alpha0 - theta)) for any
lam strictly between theta^(1/alpha0) and 1.  The checker samples the
hypothesis on a radius mesh and asserts the conclusion at every mesh point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HoleFillingInstance",
    "hole_filling_coefficient",
    "hole_filling_check",
    "make_tight_profile",
]


@dataclass(frozen=True)
class HoleFillingInstance:
    A: float
    B: float
    C: float
    alpha0: float
    beta0: float
    theta: float
    lam: float
    r: float
    R: float

    def __post_init__(self):
        if min(self.A, self.B, self.C) < 0:
            raise ValueError("data constants A, B, C must be >= 0")
        if not (self.alpha0 >= self.beta0 > 0):
            raise ValueError(f"need alpha0 >= beta0 > 0, got {self.alpha0}, {self.beta0}")
        if not (0 <= self.theta < 1):
            raise ValueError(f"absorption factor must lie in [0, 1), got {self.theta}")
        lo = self.theta ** (1.0 / self.alpha0)
        if not (lo < self.lam < 1):
            raise ValueError(f"lam must lie in ({lo}, 1), got {self.lam}")
        if not (0 < self.r < self.R):
            raise ValueError(f"need 0 < r < R, got r={self.r}, R={self.R}")

    def data_bound(self, gap) -> np.ndarray:
        """A/gap^alpha0 + B/gap^beta0 + C (the bracket of the conclusion)."""
        gap = np.asarray(gap, dtype=float)
        out = np.full(gap.shape, self.C)
        pos = gap > 0
        out[pos] += self.A / gap[pos] ** self.alpha0 + self.B / gap[pos] ** self.beta0
        out[~pos] = np.inf
        return out


def hole_filling_coefficient(inst: HoleFillingInstance) -> float:
    """lam^alpha0 / ((1 - lam)^alpha0 (lam^alpha0 - theta))."""
    la = inst.lam**inst.alpha0
    return (1.0 / (1.0 - inst.lam) ** inst.alpha0) * (la / (la - inst.theta))


def hole_filling_check(Z, inst: HoleFillingInstance, radii=None, n_points: int = 100, rel_tol: float = 1e-12) -> bool:
    """Verify the lemma's conclusion for a sampled Z.

    ``Z`` is a callable of the radius or an array of samples matching
    ``radii`` (default: a uniform mesh of ``n_points`` radii on [r, R]).
    The hypothesis is first verified on every ordered mesh pair; an input
    violating it is rejected with ValueError since the lemma then makes no
    claim.  Returns True iff Z(t) <= coeff * data_bound(R - t) at every mesh
    point t < R.
    """
    if radii is None:
        radii = np.linspace(inst.r, inst.R, n_points)
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) < 2 or not np.all(np.diff(radii) > 0):
        raise ValueError("radius mesh must be strictly increasing with >= 2 points")
    if not (abs(radii[0] - inst.r) < 1e-12 and abs(radii[-1] - inst.R) < 1e-12):
        raise ValueError("radius mesh must span [r, R]")
    zs = np.asarray([Z(t) for t in radii], dtype=float) if callable(Z) else np.asarray(Z, dtype=float)
    if zs.shape != radii.shape:
        raise ValueError("Z samples do not match the radius mesh")
    if np.any(zs < 0) or not np.all(np.isfinite(zs)):
        raise ValueError("Z must be finite and non-negative")

    scale = max(1.0, float(np.max(zs)))
    for i in range(len(radii) - 1):
        gaps = radii[i + 1 :] - radii[i]
        bounds = inst.data_bound(gaps) + inst.theta * zs[i + 1 :]
        if zs[i] > np.min(bounds) * (1 + rel_tol) + rel_tol * scale:
            raise ValueError(
                f"sampled Z violates the hypothesis at t={radii[i]}: the lemma makes no claim"
            )

    coeff = hole_filling_coefficient(inst)
    conclusion = coeff * inst.data_bound(inst.R - radii[:-1])
    return bool(np.all(zs[:-1] <= conclusion * (1 + rel_tol) + rel_tol * scale))


def make_tight_profile(inst: HoleFillingInstance, rng: np.random.Generator, n_points: int = 100):
    """Construct mesh samples satisfying the hypothesis with equality.

    Backward dynamic programming: the terminal value Z(R) is drawn inside
    the data scale and each earlier sample is the exact minimum of the
    hypothesis bound over all later mesh points, so equality is attained at
    the argmin.  Returns ``(radii, samples)`` ready for
    :func:`hole_filling_check`.
    """
    interior = np.sort(rng.uniform(inst.r, inst.R, size=max(0, n_points - 2)))
    radii = np.unique(np.concatenate([[inst.r], interior, [inst.R]]))
    zs = np.empty(len(radii))
    zs[-1] = rng.uniform(0.0, float(inst.data_bound(np.array([inst.R - inst.r]))[0]))
    for i in range(len(radii) - 2, -1, -1):
        gaps = radii[i + 1 :] - radii[i]
        zs[i] = float(np.min(inst.data_bound(gaps) + inst.theta * zs[i + 1 :]))
    return radii, zs
