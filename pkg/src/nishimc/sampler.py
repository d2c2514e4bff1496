"""Heat-bath MCMC over instances and an exact-enumeration oracle.

Chains resample one site at a time from its exact conditional
w(s) exp(theta_i s - b_i s^2 / 2), visiting sites in fixed order.  Each
replica owns a keyed Philox stream, so the full sample stream is a pure
function of (instance seed, chain seed) and is reproducible regardless of
how work is scheduled.

Chains start from the planted configuration by default.  On the Nishimori
line the planted configuration is itself an exact posterior draw given the
disorder, so a chain started there is stationary from sweep zero; burn-in
only serves to decorrelate the replicas from x* and from each other.  This
also keeps chains in the planted mode for symmetric priors above the
recovery threshold, where the +-x symmetry would otherwise average the
overlap with the truth to zero at any finite sweep budget.  A fresh-prior
initialization remains available via init="prior".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ._kernels import heat_bath_sweeps
from .errors import BadDimension, TooLarge
from .model import EffectiveFields, Instance, effective_fields, stream
from .prior import Prior

RECOMPUTE_EVERY = 100      # sweeps between full field-cache rebuilds
DRIFT_TOL = 1e-8           # allowed cache drift at rebuild time
MAX_REPLICAS = 8
ENUM_STATE_LIMIT = 2**24
_STREAM_CHAIN_BASE = 16    # keep clear of the instance stream ids


@dataclass(frozen=True)
class ChainSpec:
    """MCMC schedule: replicas, burn-in, spacing, sample count, seed."""

    n_replicas: int = 3
    sweeps_burnin: int = 2000
    sweeps_between_samples: int = 10
    n_samples: int = 1
    seed: int = 0
    init: str = "planted"  # "planted" or "prior"

    def __post_init__(self):
        if not 1 <= self.n_replicas <= MAX_REPLICAS:
            raise BadDimension(f"n_replicas must be in [1, {MAX_REPLICAS}]")
        if self.sweeps_burnin < 0 or self.sweeps_between_samples < 1 or self.n_samples < 1:
            raise BadDimension("sweep counts must be positive")
        if self.init not in ("planted", "prior"):
            raise ValueError("init must be 'planted' or 'prior'")


@dataclass(frozen=True)
class GibbsSample:
    """States of all replicas after a common number of sweeps."""

    configs: np.ndarray  # (n_replicas, N)
    sweep_index: int


class Chain:
    """One replica's mutable state bound to a shared immutable Instance."""

    def __init__(self, inst: Instance, p: Prior, rng: np.random.Generator,
                 fields: EffectiveFields | None = None, init: str = "planted"):
        self.inst = inst
        self.prior = p
        self.rng = rng
        self.fields = fields if fields is not None else effective_fields(inst)
        self.atoms = np.asarray(p.atoms)
        self.logw = np.asarray(p.log_weights())
        if init == "planted":
            self.xidx = np.searchsorted(p.atoms, inst.xstar).astype(np.int64)
        elif init == "prior":
            self.xidx = rng.choice(p.n_atoms, size=inst.N, p=p.weights).astype(np.int64)
        else:
            raise ValueError("init must be 'planted' or 'prior'")
        self.x = self.atoms[self.xidx].astype(np.float64)
        self.theta_cache = self.fields.J @ self.x
        self._since_rebuild = 0
        N = inst.N
        self._lam_n = inst.lam / N
        self._tlam_n = inst.t * inst.lam / N
        self._d_last_extra = inst.lam * (1.0 - inst.t) * inst.q_cav
        self._empty_record = np.empty((0, 0), dtype=np.int8)

    def sweep(self, n_sweeps: int, record: np.ndarray | None = None) -> None:
        """Advance n_sweeps, rebuilding the field cache on schedule."""
        done = 0
        while done < n_sweeps:
            chunk = min(RECOMPUTE_EVERY - self._since_rebuild, n_sweeps - done)
            uniforms = self.rng.random((chunk, self.inst.N))
            rec = record[done:done + chunk] if record is not None else self._empty_record
            heat_bath_sweeps(
                self.fields.J, self.fields.theta_ext, self.x, self.xidx,
                self.theta_cache, self.atoms, self.logw,
                self._lam_n, self._tlam_n, self.inst.h, self._d_last_extra,
                uniforms, rec, record is not None,
            )
            done += chunk
            self._since_rebuild += chunk
            if self._since_rebuild >= RECOMPUTE_EVERY:
                self._rebuild_cache()

    def _rebuild_cache(self) -> None:
        fresh = self.fields.J @ self.x
        drift = float(np.max(np.abs(fresh - self.theta_cache)))
        if drift > DRIFT_TOL:
            raise RuntimeError(f"field cache drifted by {drift:.3e} > {DRIFT_TOL}")
        self.theta_cache = fresh
        self._since_rebuild = 0


def heat_bath_sweep(inst: Instance, p: Prior, cfg: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """One full sweep from the given configuration; returns the new one.

    Convenience wrapper over Chain for single-shot use; long runs should
    hold a Chain so the coupling fields are built once.
    """
    chain = Chain(inst, p, rng)
    cfg = np.asarray(cfg, dtype=np.float64)
    if cfg.shape != (inst.N,):
        raise BadDimension(f"configuration shape {cfg.shape} != ({inst.N},)")
    chain.xidx = np.searchsorted(p.atoms, cfg).astype(np.int64)
    if not np.allclose(p.atoms[chain.xidx], cfg):
        raise BadDimension("configuration entries must be prior atoms")
    chain.x = p.atoms[chain.xidx].astype(np.float64)
    chain.theta_cache = chain.fields.J @ chain.x
    chain.sweep(1)
    return chain.x.copy()


def run_chain(inst: Instance, p: Prior, spec: ChainSpec) -> Iterator[GibbsSample]:
    """Yield n_samples GibbsSamples from n_replicas independent chains.

    Replica r draws its uniforms from the Philox stream keyed by
    (spec.seed, _STREAM_CHAIN_BASE + r); samples land at sweep indices
    burnin + k * spacing for k = 1..n_samples.
    """
    fields = effective_fields(inst)
    chains = [
        Chain(inst, p, stream(spec.seed, _STREAM_CHAIN_BASE, r), fields, spec.init)
        for r in range(spec.n_replicas)
    ]
    for c in chains:
        c.sweep(spec.sweeps_burnin)
    sweep_index = spec.sweeps_burnin
    for _ in range(spec.n_samples):
        for c in chains:
            c.sweep(spec.sweeps_between_samples)
        sweep_index += spec.sweeps_between_samples
        yield GibbsSample(
            configs=np.stack([c.x for c in chains]),
            sweep_index=sweep_index,
        )


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExactGibbs:
    """Exact single-replica Gibbs summaries of one instance.

    m1[i] = <x_i>, m2[i] = <x_i^2>, p2[i] = <x_i x_N>, and optionally
    t3[i, j] = <x_i x_j x_N> (site N = the cavity site) and the full state
    probability vector in big-endian atom-index order.
    """

    logZ: float
    m1: np.ndarray
    m2: np.ndarray
    p2: np.ndarray
    t3: np.ndarray | None = None
    probs: np.ndarray | None = None

    def q1star(self, xstar: np.ndarray) -> float:
        """<q_{1*}> = (1/N) sum_i x*_i <x_i>."""
        return float(xstar @ self.m1) / self.m1.size

    def q12(self) -> float:
        """<q_{12}> = (1/N) sum_i <x_i>^2 (replicas independent given disorder)."""
        return float(self.m1 @ self.m1) / self.m1.size


def _state_block(start: int, stop: int, n_atoms: int, N: int) -> np.ndarray:
    idx = np.arange(start, stop)
    digits = np.empty((idx.size, N), dtype=np.int64)
    for i in range(N - 1, -1, -1):
        digits[:, i] = idx % n_atoms
        idx = idx // n_atoms
    return digits


def enumerate_gibbs(inst: Instance, p: Prior, want_triples: bool = False,
                    want_probs: bool = False, chunk: int = 1 << 16) -> ExactGibbs:
    """Exact Gibbs summaries by full state enumeration with log-sum-exp.

    Limits: |atoms|^N <= 2^24 overall; state probabilities additionally
    need |atoms|^N <= 2^20 to stay addressable.
    """
    K = p.n_atoms
    total = K**inst.N
    if total > ENUM_STATE_LIMIT:
        raise TooLarge(f"{K}^{inst.N} states exceed the enumeration limit")
    if want_probs and total > 2**20:
        raise TooLarge("state probabilities only available up to 2^20 states")

    fields = effective_fields(inst)
    logw = p.log_weights()
    atoms = p.atoms
    N = inst.N

    # pass 1: global max of log-weights
    gmax = -np.inf
    for start in range(0, total, chunk):
        digits = _state_block(start, min(start + chunk, total), K, N)
        lw = _log_state_weight(inst, fields, atoms, logw, digits)
        gmax = max(gmax, float(lw.max()))

    # pass 2: normalized accumulation
    zsum = 0.0
    m1 = np.zeros(N)
    m2 = np.zeros(N)
    p2 = np.zeros(N)
    t3 = np.zeros((N, N)) if want_triples else None
    probs = np.empty(total) if want_probs else None
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        digits = _state_block(start, stop, K, N)
        X = atoms[digits]
        w = np.exp(_log_state_weight(inst, fields, atoms, logw, digits) - gmax)
        zsum += w.sum()
        m1 += w @ X
        m2 += w @ (X * X)
        wlast = w * X[:, N - 1]
        p2 += wlast @ X
        if want_triples:
            t3 += np.einsum("s,si,sj->ij", wlast, X, X)
        if want_probs:
            probs[start:stop] = w
    m1 /= zsum
    m2 /= zsum
    p2 /= zsum
    if want_triples:
        t3 /= zsum
        t3.setflags(write=False)
    if want_probs:
        probs /= zsum
        probs.setflags(write=False)
    for a in (m1, m2, p2):
        a.setflags(write=False)
    return ExactGibbs(logZ=float(gmax + np.log(zsum)), m1=m1, m2=m2, p2=p2,
                      t3=t3, probs=probs)


def _log_state_weight(inst, fields, atoms, logw, digits):
    X = atoms[digits]
    X2 = X * X
    e = (
        0.5 * np.einsum("si,ij,sj->s", X, fields.J, X)
        - 0.25 * np.einsum("si,ij,sj->s", X2, fields.C, X2)
        + X @ fields.theta_ext
        - 0.5 * X2 @ fields.d
    )
    return e + logw[digits].sum(axis=1)


def enumerate_exact(inst: Instance, p: Prior, observable) -> float:
    """Named exact expectations for tests and the oracle CLI mode.

    observable: "q1star" | "q12" | "logZ" | ("m", i) | ("pair", i, j).
    """
    if observable in ("q1star", "q12", "logZ"):
        g = enumerate_gibbs(inst, p)
        if observable == "q1star":
            return g.q1star(inst.xstar)
        if observable == "q12":
            return g.q12()
        return g.logZ
    if isinstance(observable, tuple) and observable and observable[0] == "m":
        return float(enumerate_gibbs(inst, p).m1[observable[1]])
    if isinstance(observable, tuple) and observable and observable[0] == "pair":
        _, i, j = observable
        g = enumerate_gibbs(inst, p, want_probs=True)
        K = p.n_atoms
        digits = _state_block(0, K**inst.N, K, inst.N)
        X = p.atoms[digits]
        return float(g.probs @ (X[:, i] * X[:, j]))
    raise BadDimension(f"unknown observable spec {observable!r}")
