"""Quenched-disorder instances and the interpolated Hamiltonian.

An Instance fixes one realization of the disorder: the planted spins x*,
the symmetric Gaussian couplings z, the external-field noise h_i, and the
single cavity noise z_cav.  The energy it induces on a configuration x is
(written as -H, the exponent of the Boltzmann weight)

    -H(x) = sum_{i<j} [ sqrt(c_ij/N) z_ij x_i x_j
                        + (c_ij/N) x_i x_i* x_j x_j*
                        - (c_ij/2N) x_i^2 x_j^2 ]
            + sum_i ( sqrt(h) h_i x_i + h x_i* x_i - h x_i^2 / 2 )
            + sqrt(g) z_cav x_N + g x_N* x_N - g x_N^2 / 2,

with c_ij = lambda except c_iN = t*lambda for pairs touching the last
site, and g = lambda (1 - t) q_cav.  At t = 1 the last line and the
t-scaling disappear and the plain two-body model is recovered by the same
code path.  A configuration is a plain float64 array of prior atoms.

All randomness is drawn from counter-based Philox streams keyed by
(seed, stream id) through numpy SeedSequence spawn keys, so instances are
reproducible bit for bit across runs and across process boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BadDimension
from .prior import Prior

# stream ids under one instance seed
_STREAM_XSTAR = 0
_STREAM_COUPLINGS = 1
_STREAM_FIELDS = 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the (seed, key...) stream."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=key))
    )


@dataclass(frozen=True, eq=False)
class Instance:
    """One quenched realization plus the model parameters it was drawn at."""

    N: int
    lam: float
    h: float
    t: float
    q_cav: float
    xstar: np.ndarray  # (N,) prior atoms
    z: np.ndarray      # (N, N) symmetric, zero diagonal
    hnoise: np.ndarray # (N,)
    z_cav: float
    seed: int

    def with_t(self, t: float) -> "Instance":
        """Same disorder, different interpolation time."""
        if not 0.0 <= t <= 1.0:
            raise ValueError("t must be in [0, 1]")
        return replace(self, t=t)


def sample_instance(p: Prior, N: int, lam: float, h: float = 0.0, t: float = 1.0,
                    q_cav: float = 0.0, seed: int = 0) -> Instance:
    """Draw (x*, z, h_i, z_cav) for the given parameters, deterministically."""
    if N < 2:
        raise BadDimension("need N >= 2 sites")
    if lam < 0 or h < 0 or q_cav < 0 or not 0.0 <= t <= 1.0:
        raise ValueError("require lambda >= 0, h >= 0, q_cav >= 0, t in [0, 1]")
    rng_x = stream(seed, _STREAM_XSTAR)
    xstar = rng_x.choice(p.atoms, size=N, p=p.weights)

    rng_z = stream(seed, _STREAM_COUPLINGS)
    z = np.zeros((N, N))
    iu = np.triu_indices(N, k=1)
    z[iu] = rng_z.standard_normal(iu[0].size)
    z += z.T

    rng_f = stream(seed, _STREAM_FIELDS)
    hnoise = rng_f.standard_normal(N)
    z_cav = float(rng_f.standard_normal())
    xstar.setflags(write=False)
    z.setflags(write=False)
    hnoise.setflags(write=False)
    return Instance(N=N, lam=lam, h=h, t=t, q_cav=q_cav, xstar=xstar, z=z,
                    hnoise=hnoise, z_cav=z_cav, seed=seed)


def instance_snapshot(inst: Instance) -> dict:
    """Replayable description of an instance: parameters and seed only.

    The disorder arrays are a pure function of the seed, so they are not
    stored; ``instance_from_snapshot`` regenerates them bit for bit.
    """
    return {
        "N": inst.N, "lambda": inst.lam, "h": inst.h, "t": inst.t,
        "q_cav": inst.q_cav, "seed": inst.seed,
    }


def instance_from_snapshot(p: Prior, snap: dict) -> Instance:
    return sample_instance(p, snap["N"], snap["lambda"], h=snap["h"],
                           t=snap["t"], q_cav=snap["q_cav"], seed=snap["seed"])


@dataclass(frozen=True, eq=False)
class EffectiveFields:
    """Precomputed couplings so that for any configuration x

        -H(x) = 0.5 x^T J x - 0.25 (x^2)^T C (x^2) + theta_ext . x - 0.5 d . x^2

    J and C are symmetric with zero diagonal; theta_ext and d collect all
    one-body terms including the cavity channel on the last site.  Local
    conditional fields follow as theta_i = (J x)_i + theta_ext_i and
    b_i = (C x^2)_i + d_i.
    """

    J: np.ndarray
    C: np.ndarray
    theta_ext: np.ndarray
    d: np.ndarray


def effective_fields(inst: Instance) -> EffectiveFields:
    N = inst.N
    c = np.full((N, N), inst.lam)
    c[N - 1, :] *= inst.t
    c[:, N - 1] *= inst.t
    np.fill_diagonal(c, 0.0)
    C = c / N
    J = np.sqrt(C) * inst.z + C * np.outer(inst.xstar, inst.xstar)
    np.fill_diagonal(J, 0.0)

    theta_ext = np.sqrt(inst.h) * inst.hnoise + inst.h * inst.xstar
    d = np.full(N, inst.h)
    g = inst.lam * (1.0 - inst.t) * inst.q_cav
    theta_ext[N - 1] += np.sqrt(g) * inst.z_cav + g * inst.xstar[N - 1]
    d[N - 1] += g
    for a in (J, C, theta_ext, d):
        a.setflags(write=False)
    return EffectiveFields(J=J, C=C, theta_ext=theta_ext, d=d)


def _check_cfg(inst: Instance, cfg: np.ndarray):
    cfg = np.asarray(cfg, dtype=np.float64)
    if cfg.shape != (inst.N,):
        raise BadDimension(f"configuration shape {cfg.shape} != ({inst.N},)")
    return cfg


def energy(inst: Instance, cfg: np.ndarray, fields: EffectiveFields | None = None) -> float:
    """-H(cfg): the exponent of the Boltzmann weight (prior excluded)."""
    x = _check_cfg(inst, cfg)
    f = fields if fields is not None else effective_fields(inst)
    x2 = x * x
    return float(
        0.5 * x @ (f.J @ x)
        - 0.25 * x2 @ (f.C @ x2)
        + f.theta_ext @ x
        - 0.5 * f.d @ x2
    )


def energy_batch(inst: Instance, cfgs: np.ndarray, fields: EffectiveFields | None = None) -> np.ndarray:
    """-H for every row of cfgs, shape (S, N) -> (S,)."""
    X = np.asarray(cfgs, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != inst.N:
        raise BadDimension(f"batch shape {X.shape} incompatible with N={inst.N}")
    f = fields if fields is not None else effective_fields(inst)
    X2 = X * X
    return (
        0.5 * np.einsum("si,ij,sj->s", X, f.J, X)
        - 0.25 * np.einsum("si,ij,sj->s", X2, f.C, X2)
        + X @ f.theta_ext
        - 0.5 * X2 @ f.d
    )


def local_field(inst: Instance, cfg: np.ndarray, i: int,
                fields: EffectiveFields | None = None) -> tuple[float, float]:
    """(theta_i, b_i): conditional weight of x_i = s is w(s) exp(theta s - b s^2/2)."""
    x = _check_cfg(inst, cfg)
    if not 0 <= i < inst.N:
        raise BadDimension(f"site index {i} out of range")
    f = fields if fields is not None else effective_fields(inst)
    theta = float(f.J[i] @ x + f.theta_ext[i])
    b = float(f.C[i] @ (x * x) + f.d[i])
    return theta, b


def overlap(cfg_a: np.ndarray, cfg_b: np.ndarray) -> float:
    """q_ab = (1/N) sum_i x_i^a x_i^b."""
    a = np.asarray(cfg_a, dtype=np.float64)
    b = np.asarray(cfg_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise BadDimension("configurations must be equal-length vectors")
    return float(a @ b) / a.size


def overlap_minus(cfg_a: np.ndarray, cfg_b: np.ndarray) -> float:
    """Overlap excluding the last (cavity) site: q - x_N^a x_N^b / N."""
    a = np.asarray(cfg_a, dtype=np.float64)
    b = np.asarray(cfg_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise BadDimension("configurations must be equal-length vectors")
    return float(a[:-1] @ b[:-1]) / a.size
