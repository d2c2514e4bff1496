"""Statistics of overlap samples: the quantities the CLT is about.

Replica labels: 0 is the planted configuration, 1..n are Gibbs replicas.
A pair (a, b) with a < b indexes one overlap; xi_ab = sqrt(N)(q_ab - qbar)
is its rescaled fluctuation.  Quenched estimates pool over instances (and
over modestly many decorrelated Gibbs samples per instance); standard
errors come from batch means over instances, which are robust to residual
within-instance correlation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import BadF, InsufficientData
from .model import overlap, sample_instance
from .prior import Prior
from .sampler import GibbsSample, enumerate_gibbs

DEFAULT_BATCHES = 20

Pair = tuple[int, int]


def replica_pairs(n_replicas: int, include_star: bool = True) -> list[Pair]:
    """All pairs (a, b), a < b, over replicas 1..n plus the 0 = * label."""
    lo = 0 if include_star else 1
    return [(a, b) for a in range(lo, n_replicas + 1) for b in range(a + 1, n_replicas + 1)]


def overlaps_of(sample: GibbsSample, xstar: np.ndarray) -> dict[Pair, float]:
    """All pairwise overlaps of one Gibbs sample, ground truth included."""
    n = sample.configs.shape[0]
    out: dict[Pair, float] = {}
    for a in range(1, n + 1):
        out[(0, a)] = overlap(xstar, sample.configs[a - 1])
        for b in range(a + 1, n + 1):
            out[(a, b)] = overlap(sample.configs[a - 1], sample.configs[b - 1])
    return out


@dataclass(frozen=True)
class OverlapSample:
    """One draw of the overlap family and its rescaled version."""

    q: dict[Pair, float]
    xi: dict[Pair, float]
    N: int
    qbar_used: float
    xi_minus: dict[Pair, float] | None = None


def rescale(q: dict[Pair, float], qbar: float, N: int,
            q_minus: dict[Pair, float] | None = None) -> OverlapSample:
    """xi_ab = sqrt(N) (q_ab - qbar), exact arithmetic map."""
    if not np.isfinite(qbar):
        raise ValueError("qbar must be finite")
    root = np.sqrt(N)
    xi = {p: root * (v - qbar) for p, v in q.items()}
    xi_minus = None
    if q_minus is not None:
        xi_minus = {p: root * (v - qbar) for p, v in q_minus.items()}
    return OverlapSample(q=dict(q), xi=xi, N=N, qbar_used=qbar, xi_minus=xi_minus)


# ---------------------------------------------------------------------------
# covariance estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceEstimates:
    var: float
    var_se: float
    cov_share: float
    cov_share_se: float
    cov_disjoint: float | None
    cov_disjoint_se: float | None
    mean_xi: float
    mean_xi_se: float
    n_samples: int
    n_instances: int


def _batch_slices(instance_ids: np.ndarray, n_batches: int) -> list[np.ndarray]:
    """Masks splitting samples into contiguous batches of whole instances."""
    uniq = np.unique(instance_ids)
    n_batches = min(n_batches, uniq.size)
    groups = np.array_split(uniq, n_batches)
    return [np.isin(instance_ids, g) for g in groups]


def _pair_couples(pairs: list[Pair]):
    share, disjoint = [], []
    for i, p in enumerate(pairs):
        for q in pairs[i + 1:]:
            k = len(set(p) & set(q))
            if k == 1:
                share.append((p, q))
            elif k == 0:
                disjoint.append((p, q))
    return share, disjoint


def empirical_covariance(samples: list[OverlapSample], n_replicas: int,
                         instance_ids=None,
                         n_batches: int = DEFAULT_BATCHES) -> CovarianceEstimates:
    """Pooled quenched estimates of Var(xi_ab), Cov(xi_ab, xi_ac), Cov(xi_ab, xi_cd).

    Each statistic is averaged over every replica-pair couple of its type
    (exchangeability), centered with the global mean; batch-means standard
    errors group whole instances so within-instance correlation cancels.
    """
    if len(samples) < 2:
        raise InsufficientData("need at least 2 samples")
    if instance_ids is None:
        instance_ids = np.arange(len(samples))
    instance_ids = np.asarray(instance_ids)
    pairs = replica_pairs(n_replicas, include_star=False)
    if not pairs:
        raise InsufficientData("need at least 2 replicas")
    X = np.array([[s.xi[p] for p in pairs] for s in samples])  # (S, P)
    share, disjoint = _pair_couples(pairs)
    m = X.mean()

    def stat_on(mask: np.ndarray):
        Y = X[mask] - m
        var = float((Y**2).mean())
        cs = float(np.mean([Y[:, pairs.index(p)] * Y[:, pairs.index(q)]
                            for p, q in share])) if share else np.nan
        cd = float(np.mean([Y[:, pairs.index(p)] * Y[:, pairs.index(q)]
                            for p, q in disjoint])) if disjoint else None
        return var, cs, cd, float((X[mask]).mean())

    var, cs, cd, _ = stat_on(np.ones(len(samples), dtype=bool))
    batches = [stat_on(msk) for msk in _batch_slices(instance_ids, n_batches)]
    nb = len(batches)
    if nb < 2:
        raise InsufficientData("need at least 2 instance batches for errors")

    def se(idx):
        vals = np.array([b[idx] for b in batches], dtype=np.float64)
        return float(vals.std(ddof=1) / np.sqrt(nb))

    return CovarianceEstimates(
        var=var, var_se=se(0),
        cov_share=cs, cov_share_se=se(1),
        cov_disjoint=cd, cov_disjoint_se=se(2) if cd is not None else None,
        mean_xi=m, mean_xi_se=se(3),
        n_samples=len(samples), n_instances=int(np.unique(instance_ids).size),
    )


def pair_cov(samples: list[OverlapSample], p: Pair, q: Pair,
             instance_ids=None, n_batches: int = DEFAULT_BATCHES) -> tuple[float, float]:
    """Cov(xi_p, xi_q) for two specific pairs, with batch-means SE."""
    if len(samples) < 2:
        raise InsufficientData("need at least 2 samples")
    if instance_ids is None:
        instance_ids = np.arange(len(samples))
    instance_ids = np.asarray(instance_ids)
    xp = np.array([s.xi[p] for s in samples])
    xq = np.array([s.xi[q] for s in samples])
    prod = (xp - xp.mean()) * (xq - xq.mean())
    est = float(prod.mean())
    masks = _batch_slices(instance_ids, n_batches)
    vals = np.array([prod[m].mean() for m in masks])
    return est, float(vals.std(ddof=1) / np.sqrt(len(masks)))


# ---------------------------------------------------------------------------
# Nishimori identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NishimoriCheck:
    gap: float
    se: float
    gap_sq: float | None = None
    se_sq: float | None = None


def nishimori_check(samples: list[OverlapSample], instance_ids=None,
                    include_squares: bool = False) -> NishimoriCheck:
    """Difference of quenched means of replica-replica vs replica-truth overlaps.

    The identity says E<q_ab> = E<q_a*> exactly; the estimator pairs both
    averages inside each instance before differencing, so common disorder
    fluctuations cancel and the SE reflects only the genuine gap.
    """
    if not samples:
        raise InsufficientData("no samples")
    some = samples[0]
    rr = [p for p in some.q if 0 not in p]
    sr = [p for p in some.q if 0 in p]
    if not rr or not sr:
        raise InsufficientData("need >= 2 replicas and ground-truth overlaps")
    if instance_ids is None:
        instance_ids = np.arange(len(samples))
    instance_ids = np.asarray(instance_ids)

    def per_instance(vals: np.ndarray) -> np.ndarray:
        return np.array([vals[instance_ids == u].mean() for u in np.unique(instance_ids)])

    d = per_instance(np.array([np.mean([s.q[p] for p in rr])
                               - np.mean([s.q[p] for p in sr]) for s in samples]))
    if d.size < 2:
        raise InsufficientData("need >= 2 instances")
    gap, se = float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.size))
    gap_sq = se_sq = None
    if include_squares:
        d2 = per_instance(np.array([np.mean([s.q[p] ** 2 for p in rr])
                                    - np.mean([s.q[p] ** 2 for p in sr]) for s in samples]))
        gap_sq, se_sq = float(d2.mean()), float(d2.std(ddof=1) / np.sqrt(d2.size))
    return NishimoriCheck(gap=gap, se=se, gap_sq=gap_sq, se_sq=se_sq)


# ---------------------------------------------------------------------------
# normality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalityReport:
    ks_stat: float
    ks_p: float
    skew: float
    skew_se: float
    exkurt: float
    exkurt_se: float
    n: int
    degenerate: bool = False


def _loo_moment_stats(x: np.ndarray):
    """Leave-one-out skewness and excess kurtosis, vectorized via power sums."""
    n = x.size
    P1, P2, P3, P4 = (np.sum(x**k) for k in (1, 2, 3, 4))
    m = n - 1
    p1 = (P1 - x) / m
    p2 = (P2 - x**2) / m
    p3 = (P3 - x**3) / m
    p4 = (P4 - x**4) / m
    m2 = p2 - p1**2
    m3 = p3 - 3 * p1 * p2 + 2 * p1**3
    m4 = p4 - 4 * p1 * p3 + 6 * p1**2 * p2 - 3 * p1**4
    skew_i = m3 / m2**1.5
    kurt_i = m4 / m2**2 - 3.0
    return skew_i, kurt_i


def normality_test(xi_samples, sigma2: float) -> NormalityReport:
    """One-sample KS against N(0, sigma2) plus moment-shape diagnostics.

    The KS p-value uses the asymptotic Kolmogorov distribution; skewness
    and excess kurtosis get jackknife standard errors.  Degenerate
    (constant) inputs are flagged instead of producing p-values.
    """
    x = np.asarray(xi_samples, dtype=np.float64)
    if x.size < 100:
        raise InsufficientData("need >= 100 samples for the normality test")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    if np.ptp(x) == 0:
        return NormalityReport(np.nan, np.nan, np.nan, np.nan, np.nan, np.nan,
                               n=x.size, degenerate=True)
    ks = sps.kstest(x, "norm", args=(0.0, np.sqrt(sigma2)), mode="asymp")
    skew = float(sps.skew(x))
    exkurt = float(sps.kurtosis(x, fisher=True))
    skew_i, kurt_i = _loo_moment_stats(x)
    n = x.size
    skew_se = float(np.sqrt((n - 1) / n * np.sum((skew_i - skew_i.mean()) ** 2)))
    exk_se = float(np.sqrt((n - 1) / n * np.sum((kurt_i - kurt_i.mean()) ** 2)))
    return NormalityReport(
        ks_stat=float(ks.statistic), ks_p=float(ks.pvalue),
        skew=skew, skew_se=skew_se, exkurt=exkurt, exkurt_se=exk_se, n=n,
    )


# ---------------------------------------------------------------------------
# concentration scaling
# ---------------------------------------------------------------------------


def concentration_fit(Ns, mean_sq, mean_quartic=None):
    """log-log slopes of the centered overlap moments against N.

    Expect about -1 for the quadratic moment and about -2 for the quartic
    away from criticality.  Returns (slope2, slope4); slope4 is None when
    no quartic data is given.
    """
    Ns = np.asarray(Ns, dtype=np.float64)
    m2 = np.asarray(mean_sq, dtype=np.float64)
    if Ns.size < 3 or np.unique(Ns).size < 3:
        raise InsufficientData("need >= 3 distinct N values")
    if np.any(m2 <= 0):
        raise InsufficientData("moments must be positive for a log-log fit")
    slope2 = float(np.polyfit(np.log(Ns), np.log(m2), 1)[0])
    slope4 = None
    if mean_quartic is not None:
        m4 = np.asarray(mean_quartic, dtype=np.float64)
        if np.any(m4 <= 0):
            raise InsufficientData("moments must be positive for a log-log fit")
        slope4 = float(np.polyfit(np.log(Ns), np.log(m4), 1)[0])
    return slope2, slope4


def lag1_autocorr(series_by_instance) -> float:
    """Mean lag-1 autocorrelation of per-instance sample series."""
    rhos = []
    for s in series_by_instance:
        s = np.asarray(s, dtype=np.float64)
        if s.size < 3 or s.std() == 0:
            continue
        a, b = s[:-1] - s.mean(), s[1:] - s.mean()
        rhos.append(float((a * b).mean() / s.var()))
    return float(np.mean(rhos)) if rhos else np.nan


# ---------------------------------------------------------------------------
# cavity derivative identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CavityCheckResult:
    fd: float
    rhs: float
    se: float  # paired SE of (fd - rhs)
    diff: float
    n_instances: int
    f_spec: str


def _cavity_terms_q12(g, q_cav: float, N: int):
    """RHS terms for f = q12 (two replicas, truth-free derivative rule)."""
    m1, p2, t3 = g.m1, g.p2, g.t3
    mN = m1[N - 1]
    head = slice(0, N - 1)  # sites entering the reduced overlap
    w1 = (t3[head, :] ** 2).sum() / N**2 - q_cav * (p2**2).sum() / N
    w2 = (t3[head, :] * np.outer(p2[head], m1)).sum() / N**2 \
        - q_cav * (p2 * m1).sum() * mN / N
    w3 = (p2[head] ** 2).sum() * (m1**2).sum() / N**2 \
        - q_cav * (m1**2).sum() * mN**2 / N
    return w1 - 2.0 * w2 + w3


def _cavity_terms_q1star(g, xstar: np.ndarray, q_cav: float, N: int):
    """RHS terms for f = q_{1*} (one replica plus truth, five-term rule)."""
    m1, p2, t3 = g.m1, g.p2, g.t3
    mN = m1[N - 1]
    xsN = xstar[N - 1]
    head = slice(0, N - 1)
    v1 = (t3[head, :] * np.outer(p2[head], xstar)).sum() / N**2 \
        - q_cav * (xstar * p2).sum() * mN / N
    v2 = (t3[head, :] * np.outer(xstar[head], xstar)).sum() * xsN / N**2 \
        - q_cav * xsN * (xstar * p2).sum() / N
    v3 = (np.outer(xstar[head] * p2[head], xstar * m1)).sum() * xsN / N**2 \
        - q_cav * xsN * (xstar * m1).sum() * mN / N
    v4 = (p2[head] ** 2).sum() * (xstar * m1).sum() / N**2 \
        - q_cav * (xstar * m1).sum() * mN**2 / N
    return -v1 + v2 - v3 + v4


def cavity_derivative_check(p: Prior, N_small: int, lam: float, q_cav: float,
                            t0: float, eps: float, n_instances: int,
                            f_spec: str = "q12", h: float = 0.0,
                            seed: int = 0) -> CavityCheckResult:
    """Centered finite difference of nu_t(f) against the derivative rule.

    Both sides are computed exactly per instance by enumeration (replicas
    factorize given the disorder), then averaged; the reported SE is the
    paired one of the per-instance differences.  The rule holds for any
    interpolation level q_cav, not only the fixed point.
    """
    if f_spec not in ("q12", "q1star"):
        raise BadF(f"unsupported cavity test function {f_spec!r}")
    if not (0.0 <= t0 - eps and t0 + eps <= 1.0):
        raise ValueError("need t0 +- eps inside [0, 1]")
    if eps <= 0:
        raise ValueError("eps must be > 0")
    fds = np.empty(n_instances)
    rhss = np.empty(n_instances)
    for k in range(n_instances):
        inst = sample_instance(p, N_small, lam, h=h, t=t0, q_cav=q_cav,
                               seed=seed + k)
        g_lo = enumerate_gibbs(inst.with_t(t0 - eps), p)
        g_hi = enumerate_gibbs(inst.with_t(t0 + eps), p)
        g_mid = enumerate_gibbs(inst, p, want_triples=True)
        if f_spec == "q12":
            val = lambda g: float(g.m1 @ g.m1) / N_small
            rhs = lam * _cavity_terms_q12(g_mid, q_cav, N_small)
        else:
            val = lambda g: float(inst.xstar @ g.m1) / N_small
            rhs = lam * _cavity_terms_q1star(g_mid, inst.xstar, q_cav, N_small)
        fds[k] = (val(g_hi) - val(g_lo)) / (2.0 * eps)
        rhss[k] = rhs
    d = fds - rhss
    se = float(d.std(ddof=1) / np.sqrt(n_instances)) if n_instances > 1 else np.nan
    return CavityCheckResult(fd=float(fds.mean()), rhs=float(rhss.mean()),
                             se=se, diff=float(d.mean()),
                             n_instances=n_instances, f_spec=f_spec)
