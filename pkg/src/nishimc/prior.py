"""Finite discrete spin priors with bounded support.

Every prior handled by this package is a finite list of support points
(atoms) with positive weights.  All channel expectations over the spin
variable then reduce to exact finite sums, so the prior itself introduces
no quadrature error.  Continuous bounded priors must be discretized by the
caller before being passed in.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateAtom, EmptySupport, NegativeWeight

# weights are renormalized when |sum - 1| is below this, rejected otherwise
NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class Prior:
    """Discrete distribution on spin values: atoms s_k with weights w_k.

    Atoms are finite, distinct and sorted ascending; weights are positive
    and sum to one.  Instances are immutable and safe to share.
    """

    atoms: np.ndarray
    weights: np.ndarray
    label: str = field(default="custom")

    @property
    def support_bound(self) -> float:
        """B = max |s_k|."""
        return float(np.max(np.abs(self.atoms)))

    @property
    def n_atoms(self) -> int:
        return self.atoms.size

    def mean(self) -> float:
        return moment(self, 1)

    def second_moment(self) -> float:
        return moment(self, 2)

    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)


def make_prior(atoms, weights, label: str = "custom") -> Prior:
    """Validate, normalize and sort a (atoms, weights) pair into a Prior.

    Raises EmptySupport, NegativeWeight or DuplicateAtom on bad input.
    Weights off normalization by more than NORMALIZATION_TOL are rejected
    rather than silently rescaled.
    """
    a = np.asarray(atoms, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if a.ndim != 1 or w.ndim != 1 or a.size != w.size:
        raise EmptySupport("atoms and weights must be 1D lists of equal length")
    if a.size == 0:
        raise EmptySupport("prior needs at least one atom")
    if not np.all(np.isfinite(a)):
        raise EmptySupport("atoms must be finite")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise NegativeWeight("all weights must be positive and finite")
    total = w.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL and not np.isclose(total, 1.0, rtol=0, atol=NORMALIZATION_TOL):
        raise NegativeWeight(f"weights sum to {total!r}, not 1 (tolerance {NORMALIZATION_TOL})")
    w = w / total
    order = np.argsort(a)
    a, w = a[order], w[order]
    if a.size > 1 and np.min(np.diff(a)) <= 0:
        raise DuplicateAtom("atoms must be distinct")
    a.setflags(write=False)
    w.setflags(write=False)
    return Prior(atoms=a, weights=w, label=label)


def moment(p: Prior, k: int) -> float:
    """k-th moment sum(w_k * s_k^k), exact."""
    if k < 0:
        raise ValueError("moment order must be >= 0")
    return float(np.dot(p.weights, p.atoms**k))


def is_symmetric(p: Prior, tol: float = 1e-12) -> bool:
    """True iff the atom/weight set is invariant under s -> -s."""
    # atoms are sorted ascending, so -atoms reversed is ascending again
    neg_atoms = -p.atoms[::-1]
    neg_weights = p.weights[::-1]
    return bool(
        np.all(np.abs(p.atoms - neg_atoms) <= tol)
        and np.all(np.abs(p.weights - neg_weights) <= tol)
    )


def rademacher() -> Prior:
    """Symmetric +-1 prior."""
    return make_prior([-1.0, 1.0], [0.5, 0.5], label="rademacher")


def bernoulli(p: float = 0.5) -> Prior:
    """{0, 1} prior with P(1) = p."""
    if not 0 < p < 1:
        raise NegativeWeight("bernoulli parameter must be in (0, 1)")
    return make_prior([0.0, 1.0], [1.0 - p, p], label=f"bernoulli({p:g})")


_BERNOULLI_RE = re.compile(r"^bernoulli\(([^)]+)\)$")


def prior_by_name(name: str) -> Prior:
    """Resolve the built-in prior names used in config files."""
    name = name.strip().lower()
    if name == "rademacher":
        return rademacher()
    if name == "bernoulli":
        return bernoulli(0.5)
    m = _BERNOULLI_RE.match(name)
    if m:
        return bernoulli(float(m.group(1)))
    raise EmptySupport(f"unknown prior name {name!r}")
