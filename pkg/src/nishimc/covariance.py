"""Covariance algebra for the rescaled overlap vector.

The limiting covariance of xi_ab = sqrt(N)(q_ab - qbar) takes only three
values, by replica permutation invariance:

    Sigma_{ab,ab} = A,   Sigma_{ab,ac} = B,   Sigma_{ab,cd} = C.

Two independent routes compute them from the scalar-channel coefficients
(a1, a2, a3):

* ``covariance_closed_form``: the explicit rational expressions in
  (a1, a2, a3, lambda) with poles at mu1 = 1 and mu2 = 1.
* ``solve_covariance_general_n``: the linear cavity system over the full
  replica-pair index set for n replicas, solved numerically; the three
  values are read off and their permutation symmetry asserted.

The two must agree for every n >= 2, which is the strongest internal
consistency check this package offers on the covariance algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CriticalPoint, Singular
from .prior import Prior
from .scalar import F, QuadratureSpec, ScalarTheory, solve_fixed_point

POLE_TOL = 1e-12
COND_LIMIT = 1e12


@dataclass(frozen=True)
class CovarianceResult:
    """The three distinct covariance entries plus the mu diagnostics."""

    A: float
    B: float
    C: float
    mu1: float
    mu2: float
    invertible: bool
    n: int = 2  # replica count used when produced by the general-n solver

    def as_dict(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "C": self.C,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "invertible": self.invertible,
            "n": self.n,
        }


def mus(a1: float, a2: float, a3: float, lam: float) -> tuple[float, float]:
    """mu1 = lambda(a1 - 2 a2 + a3), mu2 = lambda(a1 - 3 a2 + 2 a3)."""
    return lam * (a1 - 2 * a2 + a3), lam * (a1 - 3 * a2 + 2 * a3)


def build_M(a1: float, a2: float, a3: float) -> np.ndarray:
    """The 3x3 coefficient matrix of the two-replica field system."""
    return np.array(
        [
            [a1, -2 * a2, a3],
            [a2, a1 - a2 - 2 * a3, 3 * a3 - 2 * a2],
            [a3, 4 * a2 - 6 * a3, a1 - 6 * a2 + 6 * a3],
        ]
    )


def covariance_closed_form(a1: float, a2: float, a3: float, lam: float) -> CovarianceResult:
    """Closed-form (A, B, C), i.e. rows of [1 - lambda M]^{-1} (a1,a2,a3)^T.

    Raises CriticalPoint when either pole 1 - mu1 or 1 - mu2 is within
    POLE_TOL of zero.  ``invertible`` is True only in the regime mu1 < 1
    and mu2 < 1 where the entries form a genuine covariance.
    """
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    mu1, mu2 = mus(a1, a2, a3, lam)
    if min(abs(1 - mu1), abs(1 - mu2)) < POLE_TOL:
        raise CriticalPoint(f"closed form has a pole: mu1={mu1}, mu2={mu2}")
    d1 = 1.0 - mu1
    d2 = 1.0 - mu2
    common = (-3.0 + 3.0 * lam * a1 - 2.0 * lam * a2) / d1**2
    A = (-1.0 + 2.0 / d2 + 2.0 / d1 + common) / lam
    B = (common + 3.0 / d2) / lam
    C = (4 * lam * a2**2 + (1 - lam * a1 - 5 * lam * a2) * a3 + 2 * lam * a3**2) / (d1**2 * d2)
    return CovarianceResult(
        A=A, B=B, C=C, mu1=mu1, mu2=mu2, invertible=bool(mu1 < 1 and mu2 < 1)
    )


# ---------------------------------------------------------------------------
# general-n cavity system
# ---------------------------------------------------------------------------


def cavity_index_set(n: int) -> list[tuple[int, int]]:
    """Row/column ordering of the cavity system for n replicas.

    Pairs within {1..n} lexicographically, then (r, n+1) for r = 1..n,
    then (n+1, n+2).  Replica labels are 1-based to match the bracket
    conventions used throughout.
    """
    pairs = [(a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1)]
    pairs += [(r, n + 1) for r in range(1, n + 1)]
    pairs.append((n + 1, n + 2))
    return pairs


def _a_value(r: int, s: int, a: int, b: int, a1: float, a2: float, a3: float) -> float:
    """Coefficient by index-overlap rule: a1 same pair, a2 one shared, a3 disjoint."""
    shared = len({r, s} & {a, b})
    if shared == 2:
        return a1
    if shared == 1:
        return a2
    return a3


@dataclass(frozen=True)
class CavitySystem:
    """The rectangular source matrix Amat and square propagation matrix Bmat.

    Rows of both run over ``cavity_index_set(n)``.  Columns of Amat run
    over pairs within {1..n} only; columns of Bmat over the full index set.
    Entries are kept in extended precision: 1 - lambda*B can have condition
    numbers ~1e5 even well away from the mu poles (tail modes of B), so
    float64 entry rounding alone would already cost ~1e-10 in the solution.
    """

    n: int
    Amat: np.ndarray  # longdouble, shape (P, n(n-1)/2)
    Bmat: np.ndarray  # longdouble, shape (P, P)
    row_pairs: tuple
    col_pairs: tuple


def build_cavity_system(n: int, a1: float, a2: float, a3: float) -> CavitySystem:
    """Assemble the general-n cavity matrices from (a1, a2, a3).

    Row cases (n1 = n+1, n2 = n+2; av = the index-overlap coefficient):

    * row (r, r') with r < r' <= n:
        col (a,b<=n): av(r,r',a,b); col (a,n1): -(n-1) av(r,r',a,n1);
        col (n1,n2):  n(n-1)/2 av(r,r',n1,n2).
    * row (r, n1) with r <= n:
        col (a,b<=n): av(r,n1,a,b); col (a,n1): av(r,n1,a,n1) - n av(r,n1,a,n2);
        col (n1,n2):  n(n+1)/2 av(r,n1,n2,n3) - n av(r,n1,n1,n2).
    * row (n1, n2):
        col (a,b<=n): av(n1,n2,a,b); col (a,n1): 2 av(n1,n2,a,n1) - (n+1) av(n1,n2,a,n3);
        col (n1,n2):  av(n1,n2,n1,n2) + (n+1)(n+2)/2 av(n1,n2,n3,n4) - 2(n+1) av(n1,n2,n1,n3).

    The same-pair av(n1,n2,n1,n2) = a1 term in the last entry comes from
    the (n+1,n+2) pair of the leading replica sum; dropping it breaks the
    n = 2 reduction to ``build_M`` and the closed-form equivalence.
    """
    if n < 2:
        raise ValueError("need n >= 2 replicas")
    rows = cavity_index_set(n)
    cols_sigma = [(a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1)]
    n1, n2, n3, n4 = n + 1, n + 2, n + 3, n + 4

    a1, a2, a3 = np.longdouble(a1), np.longdouble(a2), np.longdouble(a3)

    def av(r, s, a, b):
        return _a_value(r, s, a, b, a1, a2, a3)

    Amat = np.array([[av(r, s, a, b) for (a, b) in cols_sigma] for (r, s) in rows],
                    dtype=np.longdouble)

    P = len(rows)
    Bmat = np.zeros((P, P), dtype=np.longdouble)
    for i, (r, s) in enumerate(rows):
        for j, (a, b) in enumerate(rows):
            if s <= n:  # row within the first n replicas
                if b <= n:
                    val = av(r, s, a, b)
                elif b == n1 and a <= n:
                    val = -(n - 1) * av(r, s, a, n1)
                else:  # (a, b) == (n1, n2)
                    val = 0.5 * n * (n - 1) * av(r, s, n1, n2)
            elif r <= n and s == n1:  # cavity row (r, n+1)
                if b <= n:
                    val = av(r, n1, a, b)
                elif b == n1 and a <= n:
                    val = av(r, n1, a, n1) - n * av(r, n1, a, n2)
                else:
                    val = 0.5 * n * (n + 1) * av(r, n1, n2, n3) - n * av(r, n1, n1, n2)
            else:  # row (n+1, n+2)
                if b <= n:
                    val = av(n1, n2, a, b)
                elif b == n1 and a <= n:
                    val = 2 * av(n1, n2, a, n1) - (n + 1) * av(n1, n2, a, n3)
                else:
                    val = (
                        av(n1, n2, n1, n2)
                        + 0.5 * (n + 1) * (n + 2) * av(n1, n2, n3, n4)
                        - 2 * (n + 1) * av(n1, n2, n1, n3)
                    )
            Bmat[i, j] = val
    return CavitySystem(n=n, Amat=Amat, Bmat=Bmat, row_pairs=tuple(rows), col_pairs=tuple(cols_sigma))


def _classify(row: tuple[int, int], col: tuple[int, int]) -> str:
    shared = len(set(row) & set(col))
    return {2: "A", 1: "B", 0: "C"}[shared]


def _lu_solve(K: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Dense LU with partial pivoting, dtype-preserving (used in longdouble).

    LAPACK has no extended-precision path; these systems are at most
    ~30 x 30 so an explicit elimination costs nothing and keeps the full
    longdouble accuracy end to end.
    """
    K = K.copy()
    X = A.copy()
    P = K.shape[0]
    for col in range(P):
        piv = col + int(np.argmax(np.abs(K[col:, col])))
        if K[piv, col] == 0:
            raise Singular("exactly singular cavity system")
        if piv != col:
            K[[col, piv]] = K[[piv, col]]
            X[[col, piv]] = X[[piv, col]]
        inv = 1.0 / K[col, col]
        for row in range(col + 1, P):
            f = K[row, col] * inv
            if f != 0.0:
                K[row, col:] -= f * K[col, col:]
                X[row] -= f * X[col]
    for col in range(P - 1, -1, -1):
        X[col] /= K[col, col]
        for row in range(col):
            X[row] -= K[row, col] * X[col]
    return X


def solve_covariance_general_n(sys: CavitySystem, lam: float,
                               symmetry_tol: float = 1e-10) -> CovarianceResult:
    """Solve (1 - lambda B) X = A and read off the three covariance values.

    Every entry X[row, col] is classified by the index overlap of its row
    pair with its column pair; all entries of one class must agree within
    ``symmetry_tol`` (replica permutation symmetry).  A violation is an
    inconsistency in the system itself and raises AssertionError with the
    observed spread rather than being averaged away.
    """
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    P = sys.Bmat.shape[0]
    K = np.eye(P, dtype=np.longdouble) - np.longdouble(lam) * sys.Bmat
    cond = np.linalg.cond(K.astype(np.float64))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise Singular(f"1 - lambda*B numerically singular (cond={cond:.3e})")
    X = _lu_solve(K, sys.Amat)

    buckets: dict[str, list[float]] = {"A": [], "B": [], "C": []}
    for i, rp in enumerate(sys.row_pairs):
        for j, cp in enumerate(sys.col_pairs):
            buckets[_classify(rp, cp)].append(X[i, j])
    out = {}
    for key, vals in buckets.items():
        if not vals:
            raise Singular(f"no entries of type {key}; need n >= 2")
        spread = max(vals) - min(vals)
        scale = max(1.0, max(abs(v) for v in vals))  # relative for ill-conditioned K
        if spread > symmetry_tol * scale:
            raise AssertionError(
                f"permutation symmetry violated for type {key}: spread {spread:.3e}"
            )
        out[key] = float(np.mean(vals))

    mu1, mu2 = mus(_recover_a(sys, 0), _recover_a(sys, 1), _recover_a(sys, 2), lam)
    return CovarianceResult(
        A=out["A"], B=out["B"], C=out["C"], mu1=mu1, mu2=mu2,
        invertible=bool(mu1 < 1 and mu2 < 1), n=sys.n,
    )


def _recover_a(sys: CavitySystem, which: int) -> float:
    """Read a1, a2 or a3 back out of Amat (row/col overlap 2, 1, 0)."""
    for i, rp in enumerate(sys.row_pairs):
        for j, cp in enumerate(sys.col_pairs):
            if len(set(rp) & set(cp)) == 2 - which:
                return float(sys.Amat[i, j])
    raise Singular("could not recover coefficients from Amat")


# ---------------------------------------------------------------------------
# constant-overlap trajectories in the (lambda, h) plane
# ---------------------------------------------------------------------------


def constant_overlap_trajectory(p: Prior, lam: float, lam_prime: float,
                                quad: QuadratureSpec = QuadratureSpec(),
                                tol: float = 1e-10) -> tuple[float, float]:
    """Point (h(lambda'), q(lambda', h)) on the constant-overlap line.

    The line is h(lambda') = h0 - lambda' F(h0) with h0 = lambda qbar(lambda);
    along it the fixed point stays equal to F(h0) = qbar(lambda).  Returns
    the external field h(lambda') >= 0 and the actually re-solved overlap.
    """
    if not 0 <= lam_prime <= lam:
        raise ValueError("need 0 <= lambda' <= lambda")
    base = solve_fixed_point(p, lam, 0.0, quad, tol)
    h0 = lam * base.qbar
    h = h0 - lam_prime * F(p, h0, quad)
    h = max(h, 0.0)  # exact value is (lam - lam') qbar >= 0; clip roundoff
    if lam_prime == 0.0:
        return h, F(p, h0, quad)
    th = solve_fixed_point(p, lam_prime, h, quad, tol)
    return h, th.qbar


def theory_at(p: Prior, lam: float, h: float = 0.0,
              quad: QuadratureSpec = QuadratureSpec(),
              tol: float = 1e-10) -> tuple[ScalarTheory, CovarianceResult]:
    """Convenience: fixed point plus closed-form covariance at (lambda, h)."""
    th = solve_fixed_point(p, lam, h, quad, tol)
    cov = covariance_closed_form(th.a1, th.a2, th.a3, lam)
    return th, cov
