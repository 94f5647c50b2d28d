"""Global evidence from per-sentence P-values.

The workhorse is the Higher Criticism statistic

    HC = max_{1 <= j <= floor(n * gamma0)}
         sqrt(n) * (j/n - p_(j)) / sqrt((j/n) * (1 - j/n))

over the ascending order statistics p_(1) <= ... <= p_(n), which is
sensitive to a small unknown fraction of non-uniform P-values. Its null
distribution is calibrated by simulation for specific n. Fisher's
combination and the Benjamini-Hochberg step-up rule are provided as
alternatives for denser or selection-oriented regimes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaincc

from .errors import MultipleTestingError

DEFAULT_GAMMA0 = 0.4

CRIT_TABLE_FORMAT = 1

# tolerance against binary round-off when gamma0 * n is an exact integer
_JMAX_EPS = 1e-9


def _index_range(n: int, gamma0: float) -> np.ndarray:
    """Rank indices j participating in the HC maximum.

    j runs over 1..max(1, floor(n*gamma0)); any j with j/n == 1 is
    excluded because the denominator vanishes there.
    """
    if not 0 < gamma0 < 1:
        raise MultipleTestingError(f"gamma0 must be in (0,1), got {gamma0}")
    jmax = max(1, int(math.floor(n * gamma0 + _JMAX_EPS)))
    js = np.arange(1, jmax + 1)
    js = js[js < n]
    if js.size == 0:
        raise MultipleTestingError(f"n={n} too small for gamma0={gamma0}")
    return js


@dataclass(frozen=True)
class HCResult:
    """HC value with the rank and P-value threshold achieving it.

    ``selected`` holds the original input positions whose P-values lie
    at or below the thresholding order statistic (ties included).
    """

    hc: float
    j_star: int
    p_threshold: float
    selected: tuple[int, ...]
    gamma0: float
    n: int


def _check_pvalues(pvalues: Sequence[float]) -> np.ndarray:
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1:
        raise MultipleTestingError("pvalues must be one-dimensional")
    if p.size == 0:
        raise MultipleTestingError("no testable sentences")
    if np.any(~np.isfinite(p)) or np.any(p <= 0) or np.any(p > 1):
        raise MultipleTestingError("every P-value must lie in (0, 1]")
    return p


def hc(pvalues: Sequence[float], gamma0: float = DEFAULT_GAMMA0) -> HCResult:
    """Higher Criticism of a P-value collection.

    Returns the maximal standardized gap between the empirical and
    uniform P-value CDFs over the first ``floor(n*gamma0)`` ranks,
    breaking argmax ties toward the smallest rank.
    """
    p = _check_pvalues(pvalues)
    n = p.size
    js = _index_range(n, gamma0)
    ps = np.sort(p)
    frac = js / n
    values = math.sqrt(n) * (frac - ps[js - 1]) / np.sqrt(frac * (1.0 - frac))
    k = int(np.argmax(values))  # first occurrence wins on ties
    j_star = int(js[k])
    p_threshold = float(ps[j_star - 1])
    selected = tuple(int(i) for i in np.nonzero(p <= p_threshold)[0])
    return HCResult(
        hc=float(values[k]),
        j_star=j_star,
        p_threshold=p_threshold,
        selected=selected,
        gamma0=gamma0,
        n=n,
    )


def hc_plus(pvalues: Sequence[float], gamma0: float = DEFAULT_GAMMA0) -> HCResult:
    """HC restricted to ranks with p_(j) > 1/n (experimental variant)."""
    p = _check_pvalues(pvalues)
    n = p.size
    js = _index_range(n, gamma0)
    ps = np.sort(p)
    frac = js / n
    values = math.sqrt(n) * (frac - ps[js - 1]) / np.sqrt(frac * (1.0 - frac))
    mask = ps[js - 1] > 1.0 / n
    if not mask.any():
        raise MultipleTestingError("no ranks with p > 1/n in range")
    values = np.where(mask, values, -np.inf)
    k = int(np.argmax(values))
    j_star = int(js[k])
    p_threshold = float(ps[j_star - 1])
    selected = tuple(int(i) for i in np.nonzero(p <= p_threshold)[0])
    return HCResult(
        hc=float(values[k]),
        j_star=j_star,
        p_threshold=p_threshold,
        selected=selected,
        gamma0=gamma0,
        n=n,
    )


def hc_values_matrix(P: np.ndarray, gamma0: float = DEFAULT_GAMMA0) -> np.ndarray:
    """Row-wise HC statistic of a (draws, n) matrix of P-values.

    Vectorized companion of :func:`hc` used by the simulation paths;
    both must agree to floating-point equality on the same rows.
    """
    draws, n = P.shape
    js = _index_range(n, gamma0)
    ps = np.sort(P, axis=1)[:, js - 1]
    frac = js / n
    values = math.sqrt(n) * (frac[None, :] - ps) / np.sqrt(frac * (1.0 - frac))[None, :]
    return values.max(axis=1)


# --- simulated critical values ------------------------------------------------


@dataclass(frozen=True)
class CriticalValueEntry:
    n: int
    alpha: float
    threshold: float
    ci_low: float
    ci_high: float
    n_sims: int
    seed: int


@dataclass
class CriticalValueTable:
    entries: list[CriticalValueEntry] = field(default_factory=list)

    def lookup(self, n: int, alpha: float) -> CriticalValueEntry | None:
        """Entry with this alpha whose n is nearest to ``n`` (ties and
        mismatches err toward the larger table n); None when the alpha
        is absent."""
        candidates = [e for e in self.entries if math.isclose(e.alpha, alpha)]
        if not candidates:
            return None
        return min(candidates, key=lambda e: (abs(e.n - n), -e.n))

    def entry_for_n(self, n: int) -> CriticalValueEntry | None:
        exact = [e for e in self.entries if e.n == n]
        return exact[0] if exact else None

    def to_json_obj(self) -> dict:
        return {
            "format": CRIT_TABLE_FORMAT,
            "entries": [
                {
                    "n": e.n,
                    "alpha": e.alpha,
                    "threshold": e.threshold,
                    "ci_low": e.ci_low,
                    "ci_high": e.ci_high,
                    "n_sims": e.n_sims,
                    "seed": e.seed,
                }
                for e in self.entries
            ],
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "CriticalValueTable":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if data.get("format") != CRIT_TABLE_FORMAT:
            raise MultipleTestingError(
                f"unsupported critical-value table format {data.get('format')!r}"
            )
        return cls(
            entries=[
                CriticalValueEntry(
                    n=int(e["n"]),
                    alpha=float(e["alpha"]),
                    threshold=float(e["threshold"]),
                    ci_low=float(e["ci_low"]),
                    ci_high=float(e["ci_high"]),
                    n_sims=int(e["n_sims"]),
                    seed=int(e["seed"]),
                )
                for e in data["entries"]
            ]
        )


def _rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def null_hc_sample(
    n: int, n_sims: int, seed: int, gamma0: float = DEFAULT_GAMMA0
) -> np.ndarray:
    """Simulated HC values of ``n_sims`` draws of n iid Uniform(0,1)
    P-values. The stream depends only on (seed, n), so a critical-value
    table entry pins this sample exactly."""
    rng = _rng_for(seed, 0, n)
    draws = rng.random((n_sims, n))
    return hc_values_matrix(draws, gamma0)


def simulate_critical_values(
    ns: Sequence[int],
    alphas: Sequence[float],
    n_sims: int = 10_000,
    seed: int = 0,
    gamma0: float = DEFAULT_GAMMA0,
    n_bootstrap: int = 1000,
) -> CriticalValueTable:
    """Monte-Carlo critical values of the HC null for each (n, alpha).

    Thresholds are the empirical (1-alpha) quantiles (conservative
    "higher" order statistic) of the simulated null HC values, with
    bootstrapped 0.95 confidence intervals. Deterministic given seed.
    """
    if n_sims < 1000:
        raise MultipleTestingError("n_sims must be >= 1000")
    for a in alphas:
        if not 0 < a <= 1:
            raise MultipleTestingError(f"alpha must be in (0,1], got {a}")
    table = CriticalValueTable()
    for n in ns:
        hcs = null_hc_sample(n, n_sims, seed, gamma0)
        boot_rng = _rng_for(seed, 1, n)
        idx = boot_rng.integers(0, n_sims, size=(n_bootstrap, n_sims))
        boot = hcs[idx]
        for alpha in alphas:
            q = 1.0 - alpha
            threshold = float(np.quantile(hcs, q, method="higher"))
            boot_thr = np.quantile(boot, q, axis=1, method="higher")
            ci_low = float(np.quantile(boot_thr, 0.025))
            ci_high = float(np.quantile(boot_thr, 0.975))
            table.entries.append(
                CriticalValueEntry(
                    n=int(n),
                    alpha=float(alpha),
                    threshold=threshold,
                    ci_low=ci_low,
                    ci_high=ci_high,
                    n_sims=int(n_sims),
                    seed=int(seed),
                )
            )
    return table


# --- alternatives --------------------------------------------------------------


def fisher(pvalues: Sequence[float]) -> dict:
    """Fisher's combination: statistic -2 * sum(ln p) with its
    chi-square(2n) survival P-value."""
    p = _check_pvalues(pvalues)
    # +0.0 normalizes the all-ones case to 0.0 rather than -0.0
    statistic = -2.0 * math.fsum(math.log(x) for x in p) + 0.0
    # chi-square(2n) survival at s equals the regularized upper
    # incomplete gamma Q(n, s/2)
    pvalue = float(gammaincc(p.size, statistic / 2.0))
    return {"statistic": float(statistic), "pvalue": pvalue}


def bh_select(pvalues: Sequence[float], alpha: float) -> set[int]:
    """Benjamini-Hochberg step-up selection at FDR level ``alpha``.

    Returns the (possibly empty) set of input positions of the k
    smallest P-values, where k = max{j : p_(j) <= j*alpha/n}.
    """
    if not 0 < alpha < 1:
        raise MultipleTestingError(f"alpha must be in (0,1), got {alpha}")
    p = _check_pvalues(pvalues)
    n = p.size
    ps = np.sort(p)
    js = np.arange(1, n + 1)
    passing = np.nonzero(ps <= js * alpha / n)[0]
    if passing.size == 0:
        return set()
    k = int(passing[-1]) + 1
    threshold = ps[k - 1]
    return {int(i) for i in np.nonzero(p <= threshold)[0]}
