"""Scalar (one-dimensional) Gaussian channel and the RS fixed point.

The effective single-spin problem at signal strength r weights a spin value
x drawn from the prior by

    exp((sqrt(r) z + r x*) x - r x^2 / 2),    z ~ N(0,1), x* ~ prior.

Everything downstream is built from Gibbs brackets of this weight:

    F(r)   = E_{z,x*} x* <x>            (overlap response curve)
    F'(r)  = E_{z,x*} (<x^2> - <x>^2)^2 (always >= 0, so F is non-decreasing)

and the fixed point qbar solving q = F(lambda q + h), selected among all
roots as the maximizer of the scalar potential

    phi(q) = -lambda q^2 / 4 + E_{z,x*} log Z(lambda q + h).

The z-expectation uses Gauss-Hermite quadrature with the sqrt(2) change of
variables (nodes z_i = sqrt(2) t_i, weights w_i / sqrt(pi), sum w = 1);
the x*-expectation is an exact sum over prior atoms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.optimize import brentq

from .errors import DegenerateWeight, NoConvergence
from .prior import Prior

DEFAULT_NODES = 301
MAX_NODES = 350  # hermgauss weight recursion overflows beyond this
DEFAULT_TOL = 1e-10
Q_ZERO_THRESHOLD = 1e-6  # separates the q=0 branch from genuine positive roots
CRITICAL_MU_MARGIN = 1e-2  # |1 - mu1| below this flags a near-critical solve


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Hermite node count for the z-expectation."""

    nodes: int = DEFAULT_NODES

    def grid(self):
        return _gh_nodes(self.nodes)


@lru_cache(maxsize=32)
def _gh_nodes(n: int):
    """Nodes/weights (z, w) such that E_{z~N(0,1)} f(z) ~= sum w_i f(z_i)."""
    if not 2 <= n <= MAX_NODES:
        raise ValueError(f"node count must be in [2, {MAX_NODES}]")
    t, w = hermgauss(n)
    z = np.sqrt(2.0) * t
    w = w / np.sqrt(np.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


@dataclass(frozen=True)
class ScalarBracketParams:
    """One evaluation point of the scalar bracket: r >= 0, noise z, truth x*."""

    r: float
    z: float
    xstar: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("effective SNR r must be >= 0")


@dataclass(frozen=True)
class ScalarTheory:
    """Solved RS quantities at (lambda, h).

    a1, a2, a3 are the quenched bracket moments
        a1 = E<x^2>^2 - qbar^2
        a2 = E<x^2><x>^2 - qbar^2
        a3 = E<x>^4 - qbar^2
    evaluated at r = lambda*qbar + h, and
        mu1 = lambda (a1 - 2 a2 + a3)   (= lambda F'(r) at the fixed point)
        mu2 = lambda (a1 - 3 a2 + 2 a3)
    with mu2 <= mu1 always (a2 >= a3 pointwise).
    """

    lam: float
    h: float
    qbar: float
    pressure: float
    a1: float
    a2: float
    a3: float
    mu1: float
    mu2: float
    residual: float
    critical_warning: bool = False

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "h": self.h,
            "qbar": self.qbar,
            "pressure": self.pressure,
            "a1": self.a1,
            "a2": self.a2,
            "a3": self.a3,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "residual": self.residual,
            "critical_warning": self.critical_warning,
        }


def _bracket_probs(p: Prior, r: float, z, xstar):
    """Normalized bracket weights over atoms, log-sum-exp shifted.

    z and xstar may be arrays (broadcast against each other); the returned
    array has one trailing axis over atoms.
    """
    s = p.atoms
    z = np.asarray(z, dtype=np.float64)
    xs = np.asarray(xstar, dtype=np.float64)
    theta = np.sqrt(r) * z + r * xs
    logw = p.log_weights() + theta[..., None] * s - 0.5 * r * s**2
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    zsum = w.sum(axis=-1, keepdims=True)
    if np.any(zsum <= 0):  # cannot happen after the shift: max term is exp(0)=1
        raise DegenerateWeight("bracket normalization underflowed")
    return w / zsum


def bracket_moment(p: Prior, params: ScalarBracketParams, f_powers) -> list[float]:
    """Gibbs bracket moments <x^k> for each k in f_powers."""
    probs = _bracket_probs(p, params.r, params.z, params.xstar)
    return [float(np.dot(probs, p.atoms**k)) for k in f_powers]


def _channel_moments(p: Prior, r: float, quad: QuadratureSpec):
    """Arrays (<x>, <x^2>, log Z) on the (xstar-atom, z-node) grid.

    log Z uses the same max-shift as the bracket so that weights and
    normalization are consistent to machine precision.
    """
    z, _ = quad.grid()
    s = p.atoms
    xs = p.atoms  # x* ranges over the same support
    theta = np.sqrt(r) * z[None, :, None] + r * xs[:, None, None]
    logw = p.log_weights() + theta * s - 0.5 * r * s**2
    shift = logw.max(axis=-1, keepdims=True)
    w = np.exp(logw - shift)
    zsum = w.sum(axis=-1)
    probs = w / zsum[..., None]
    m1 = probs @ s
    m2 = probs @ s**2
    logZ = np.log(zsum) + shift[..., 0]
    return m1, m2, logZ


def _quenched_average(p: Prior, quad: QuadratureSpec, values) -> float:
    """E over x* atoms (exact) and z nodes (quadrature) of a grid array."""
    _, wz = quad.grid()
    return float(p.weights @ (values @ wz))


def F(p: Prior, r: float, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Overlap response F(r) = E_{z,x*} x* <x>."""
    if r < 0:
        raise ValueError("r must be >= 0")
    m1, _, _ = _channel_moments(p, r, quad)
    return _quenched_average(p, quad, p.atoms[:, None] * m1)


def F_prime(p: Prior, r: float, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """dF/dr = E (<x^2> - <x>^2)^2 >= 0."""
    if r < 0:
        raise ValueError("r must be >= 0")
    m1, m2, _ = _channel_moments(p, r, quad)
    return _quenched_average(p, quad, (m2 - m1**2) ** 2)


def rs_potential(p: Prior, lam: float, h: float, q: float,
                 quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Variational potential -lambda q^2/4 + E log Z(lambda q + h)."""
    r = lam * q + h
    _, _, logZ = _channel_moments(p, r, quad)
    return -0.25 * lam * q * q + _quenched_average(p, quad, logZ)


def _a_coefficients(p: Prior, r: float, qbar: float, quad: QuadratureSpec):
    m1, m2, _ = _channel_moments(p, r, quad)
    q2 = qbar * qbar
    a1 = _quenched_average(p, quad, m2**2) - q2
    a2 = _quenched_average(p, quad, m2 * m1**2) - q2
    a3 = _quenched_average(p, quad, m1**4) - q2
    return a1, a2, a3


def solve_fixed_point(p: Prior, lam: float, h: float = 0.0,
                      quad: QuadratureSpec = QuadratureSpec(),
                      tol: float = DEFAULT_TOL,
                      max_iter: int = 5000) -> ScalarTheory:
    """Solve q = F(lambda q + h) and fill in all RS quantities at the root.

    Strategy: damped iteration q <- (1-alpha) q + alpha F(lambda q + h)
    (alpha = 0.5) from three starting points, plus bracket refinement on
    every sign change of g(q) = q - F(lambda q + h) found by a 200-point
    scan of [0, B^2].  Among converged candidates the potential maximizer
    wins.  Raises NoConvergence if no candidate reaches the tolerance.
    """
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    if h < 0:
        raise ValueError("h must be >= 0")
    B2 = p.support_bound**2 if p.support_bound > 0 else 1.0
    g = lambda q: q - F(p, lam * q + h, quad)

    candidates = []

    def note(q):
        q = min(max(q, 0.0), B2)
        if abs(g(q)) < tol:
            candidates.append(q)

    note(0.0)
    alpha = 0.5
    for q0 in (1e-6, 0.5 * B2, B2):
        q = q0
        for _ in range(max_iter):
            fq = F(p, lam * q + h, quad)
            q_next = (1 - alpha) * q + alpha * fq
            q_next = min(max(q_next, 0.0), B2)
            if abs(q_next - q) < 0.25 * tol and abs(q_next - F(p, lam * q_next + h, quad)) < tol:
                q = q_next
                break
            q = q_next
        note(q)

    # bracket scan: catches roots the damped iteration cycles around
    grid = np.linspace(0.0, B2, 200)
    gv = np.array([g(q) for q in grid])
    for i in np.flatnonzero(np.sign(gv[:-1]) * np.sign(gv[1:]) < 0):
        try:
            note(brentq(g, grid[i], grid[i + 1], xtol=tol * 1e-3, rtol=8.9e-16))
        except ValueError:
            continue

    if not candidates:
        raise NoConvergence(
            f"no fixed point of q = F({lam}*q + {h}) found to tolerance {tol}"
        )

    # dedupe, then pick the potential maximizer
    roots = []
    for q in sorted(candidates):
        if not roots or q - roots[-1] > 1e-8:
            roots.append(q)
    pots = [rs_potential(p, lam, h, q, quad) for q in roots]
    qbar = roots[int(np.argmax(pots))]
    pressure = max(pots)

    r = lam * qbar + h
    a1, a2, a3 = _a_coefficients(p, r, qbar, quad)
    mu1 = lam * (a1 - 2 * a2 + a3)
    mu2 = lam * (a1 - 3 * a2 + 2 * a3)
    return ScalarTheory(
        lam=lam,
        h=h,
        qbar=qbar,
        pressure=pressure,
        a1=a1,
        a2=a2,
        a3=a3,
        mu1=mu1,
        mu2=mu2,
        residual=abs(g(qbar)),
        critical_warning=bool(abs(1.0 - mu1) < CRITICAL_MU_MARGIN),
    )


def estimate_lambda_c(p: Prior, lambda_grid,
                      quad: QuadratureSpec = QuadratureSpec(),
                      tol: float = DEFAULT_TOL) -> float:
    """Grid-resolution bracket of the recovery threshold.

    Returns the largest grid lambda whose fixed point is numerically zero
    (qbar <= Q_ZERO_THRESHOLD); returns 0 when qbar is already positive at
    the smallest grid point.
    """
    grid = np.asarray(lambda_grid, dtype=np.float64)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ValueError("lambda_grid must be a nonempty ascending grid of positives")
    last_zero = 0.0
    for lam in grid:
        th = solve_fixed_point(p, float(lam), 0.0, quad, tol)
        if th.qbar <= Q_ZERO_THRESHOLD:
            last_zero = float(lam)
        else:
            break  # qbar is non-decreasing in lambda, no re-entrant zeros
    return last_zero
