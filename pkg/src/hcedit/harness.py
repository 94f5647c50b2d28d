"""Synthetic evaluation harness.

Builds mixed-authorship documents by inserting sentences from a human
pool into machine text at random positions, estimates detection power
with binomial standard errors over seeded trials, scores edit
localization against the known insertion set, and runs the abstract
P-value mixture Monte Carlo where the non-null fraction is calibrated
as ``n**(-beta)``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .calibration import (
    DEFAULT_MIN_BUCKET,
    DEFAULT_MIN_LEN,
    build_null_table,
    score_document,
)
from .errors import HarnessError
from .multitest import DEFAULT_GAMMA0, hc, hc_values_matrix
from .providers import TokenizedSentence, iter_logprob_file
from .segment import SegmentationConfig, segment

_MC_CHUNK = 200


def _rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


# --- mixing -------------------------------------------------------------------


@dataclass(frozen=True)
class MixSpec:
    """Mixing recipe: expected non-machine fraction, target sentence
    count, and the RNG seed. ``epsilon=0`` is allowed for size checks."""

    epsilon: float
    target_len: int
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise HarnessError(f"epsilon must be in [0,1), got {self.epsilon}")
        if self.target_len < 2:
            raise HarnessError(f"target_len must be >= 2, got {self.target_len}")


@dataclass(frozen=True)
class SentenceSource:
    kind: str  # "machine" | "human"
    orig_index: int


@dataclass(frozen=True)
class MixedDocument:
    doc_id: str
    sentences: tuple[TokenizedSentence, ...]
    truth: frozenset[int]  # positions of inserted (non-machine) sentences
    sources: tuple[SentenceSource, ...]


def mix(
    machine_doc: Sequence[TokenizedSentence],
    human_pool: Sequence[TokenizedSentence],
    spec: MixSpec,
    rng: np.random.Generator | None = None,
    doc_id: str = "mixed",
) -> MixedDocument:
    """Create one mixed document.

    The machine base is the first ``round(target_len * (1 - epsilon))``
    sentences of ``machine_doc``; K ~ Binomial(target_len, epsilon)
    human sentences are drawn uniformly without replacement and each is
    inserted at an independent uniform position. Draw order (K, pool
    picks, positions) is fixed, so a seed replays exactly.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    base_len = int(round(spec.target_len * (1.0 - spec.epsilon)))
    if base_len > len(machine_doc):
        raise HarnessError(
            f"machine pool exhausted: need {base_len} sentences, "
            f"have {len(machine_doc)}"
        )
    k = int(rng.binomial(spec.target_len, spec.epsilon)) if spec.epsilon > 0 else 0
    if k > len(human_pool):
        raise HarnessError(
            f"human pool exhausted: need {k} sentences, have {len(human_pool)}"
        )
    items: list[tuple[SentenceSource, TokenizedSentence]] = [
        (SentenceSource("machine", i), s) for i, s in enumerate(machine_doc[:base_len])
    ]
    if k > 0:
        picks = rng.choice(len(human_pool), size=k, replace=False)
        for pick in picks:
            pos = int(rng.integers(0, len(items) + 1))
            items.insert(pos, (SentenceSource("human", int(pick)), human_pool[pick]))
    sentences = tuple(
        dataclasses.replace(s, doc_id=doc_id, sent_index=i)
        for i, (_, s) in enumerate(items)
    )
    truth = frozenset(i for i, (src, _) in enumerate(items) if src.kind == "human")
    sources = tuple(src for src, _ in items)
    return MixedDocument(doc_id=doc_id, sentences=sentences, truth=truth, sources=sources)


# --- power estimation -----------------------------------------------------------


@dataclass
class PowerEstimate:
    config: dict
    power: float
    se: float
    n_trials: int
    n_rejections: int
    precision: float | None = None
    recall: float | None = None
    skipped_reason: str | None = None

    def to_json_obj(self) -> dict:
        # skipped cells carry NaN internally; emit null so the file stays
        # strict JSON
        def scrub(x):
            return None if x is None or math.isnan(x) else x

        return {
            "config": self.config,
            "power": scrub(self.power),
            "se": scrub(self.se),
            "n_trials": self.n_trials,
            "n_rejections": self.n_rejections,
            "precision": self.precision,
            "recall": self.recall,
            "skipped_reason": self.skipped_reason,
        }


@dataclass(frozen=True)
class ArticlePair:
    """Machine and human renditions of one topic, already scored."""

    title: str
    machine: tuple[TokenizedSentence, ...]
    human: tuple[TokenizedSentence, ...]


class _ProcedureNullCache:
    """Per-target-length HC null quantiles obtained by replaying the
    full split-calibrate-score procedure on pure machine documents.

    Scoring a document against a table estimated from a finite
    calibration sample leaves the per-sentence P-values weakly dependent
    (same-length sentences share a bucket), which inflates the HC tail
    beyond the iid-uniform simulation for larger documents. Calibrating
    the threshold on complete null documents absorbs that, so the test
    holds its nominal size at every document length.
    """

    def __init__(self, alpha, n_null, seed, min_len, min_bucket, gamma0):
        self.alpha = alpha
        self.n_null = n_null
        self.seed = seed
        self.min_len = min_len
        self.min_bucket = min_bucket
        self.gamma0 = gamma0
        self._cache: dict[tuple[str, int], float] = {}

    def threshold(self, dataset_id: str, machine_all, n: int) -> float:
        key = (dataset_id, n)
        if key not in self._cache:
            values = []
            for r in range(self.n_null):
                rng = _rng_for(self.seed, 3, n, r)
                hcres, _ = _score_mixed_trial(
                    machine_all, (), 0.0, n, rng,
                    self.min_len, self.min_bucket, self.gamma0,
                )
                if hcres is not None:
                    values.append(hcres.hc)
            if not values:
                raise HarnessError("null calibration produced no testable documents")
            self._cache[key] = float(
                np.quantile(values, 1.0 - self.alpha, method="higher")
            )
        return self._cache[key]


def estimate_power(
    datasets: Mapping[str, Sequence[ArticlePair]],
    epsilons: Sequence[float] = (0.1, 0.2),
    ns: Sequence[int] = (50, 100, 200),
    alpha: float = 0.05,
    n_trials: int = 200,
    seed: int = 0,
    min_len: int = DEFAULT_MIN_LEN,
    min_bucket: int = DEFAULT_MIN_BUCKET,
    null_reps: int = 400,
    gamma0: float = DEFAULT_GAMMA0,
) -> list[PowerEstimate]:
    """Estimate rejection power over a (dataset, epsilon, n) grid.

    Per trial: a fresh 50/50 split of the dataset's machine sentences
    builds the null table from one half; a mixed document is assembled
    from a random draw of the other half plus human insertions; the
    document is scored and HC compared against a threshold calibrated
    on ``null_reps`` pure-machine replicates of the same procedure (see
    ``_ProcedureNullCache``). Localization precision/recall of the
    thresholded set against the insertion ground truth is averaged over
    rejecting trials.
    """
    estimates: list[PowerEstimate] = []
    cache = _ProcedureNullCache(alpha, null_reps, seed, min_len, min_bucket, gamma0)
    cell = 0
    for dataset_id in sorted(datasets):
        pairs = datasets[dataset_id]
        machine_all = [s for pair in pairs for s in pair.machine]
        human_all = [s for pair in pairs for s in pair.human]
        for eps in epsilons:
            for n in ns:
                cell += 1
                config = {
                    "dataset_id": dataset_id,
                    "epsilon": eps,
                    "n_sentences": n,
                    "alpha": alpha,
                }
                if len(machine_all) // 2 < n:
                    estimates.append(
                        PowerEstimate(
                            config=config,
                            power=float("nan"),
                            se=float("nan"),
                            n_trials=0,
                            n_rejections=0,
                            skipped_reason=(
                                f"need {n} held-out machine sentences, "
                                f"dataset provides {len(machine_all) // 2}"
                            ),
                        )
                    )
                    continue
                thr = cache.threshold(dataset_id, machine_all, n)
                rejections = 0
                precisions: list[float] = []
                recalls: list[float] = []
                for trial in range(n_trials):
                    rng = _rng_for(seed, cell, trial)
                    hcres, mixed_info = _score_mixed_trial(
                        machine_all, human_all, eps, n, rng,
                        min_len, min_bucket, gamma0,
                    )
                    if hcres is None or hcres.hc <= thr:
                        continue
                    rejections += 1
                    pvec, truth = mixed_info
                    suspected = {pvec.entries[i].sent_index for i in hcres.selected}
                    overlap = len(suspected & truth)
                    if suspected:
                        precisions.append(overlap / len(suspected))
                    if truth:
                        recalls.append(overlap / len(truth))
                power = rejections / n_trials
                estimates.append(
                    PowerEstimate(
                        config=config,
                        power=power,
                        se=math.sqrt(power * (1.0 - power) / n_trials),
                        n_trials=n_trials,
                        n_rejections=rejections,
                        precision=float(np.mean(precisions)) if precisions else None,
                        recall=float(np.mean(recalls)) if recalls else None,
                    )
                )
    return estimates


def _score_mixed_trial(machine_all, human_all, eps, n, rng, min_len, min_bucket, gamma0):
    """One split + mix + score pass; returns (HCResult, (PValueVector,
    truth set)) or (None, None) when nothing is testable."""
    m = len(machine_all)
    perm = rng.permutation(m)
    train_idx = perm[: m // 2]
    # keep the held-out half in permuted order: the document base is then
    # a fresh random draw of the pool each trial, not always its head
    test_idx = perm[m // 2 :]
    table = build_null_table(
        (machine_all[i] for i in train_idx), min_len=min_len, min_bucket=min_bucket
    )
    held_out = [machine_all[i] for i in test_idx]
    mixed = mix(held_out, human_all, MixSpec(eps, n, seed=0), rng=rng)
    pvec = score_document(list(mixed.sentences), table)
    if not pvec.entries:
        return None, None
    hcres = hc(pvec.pvalues(), gamma0=gamma0)
    return hcres, (pvec, set(mixed.truth))


# --- abstract P-value mixture Monte Carlo ---------------------------------------


@dataclass(frozen=True)
class AltSpec:
    """Non-null P-value law: survival of a standard normal shifted by
    ``mu`` (p = sf(Z + mu))."""

    mu: float


def _null_statistic_sample(n, n_sims, seed, gamma0):
    """HC and Fisher statistics over shared null uniform draws, chunked
    to bound memory. The stream matches ``multitest.null_hc_sample``."""
    rng = _rng_for(seed, 0, n)
    hc_vals = np.empty(n_sims)
    fisher_vals = np.empty(n_sims)
    done = 0
    while done < n_sims:
        block = min(_MC_CHUNK, n_sims - done)
        draws = rng.random((block, n))
        hc_vals[done : done + block] = hc_values_matrix(draws, gamma0)
        fisher_vals[done : done + block] = -2.0 * np.log(draws).sum(axis=1)
        done += block
    return hc_vals, fisher_vals


def mixture_mc(
    n: int,
    beta: float,
    alt: AltSpec,
    n_trials: int = 2000,
    seed: int = 0,
    alpha: float = 0.05,
    null_sims: int = 2000,
    gamma0: float = DEFAULT_GAMMA0,
) -> dict:
    """Power of HC, Fisher, and BH-nonempty under the sparse P-value
    mixture (1 - eps) * Uniform + eps * Q with eps = n**(-beta).

    HC and Fisher reject above their own simulated (1-alpha) null
    quantiles; BH "rejects" when its step-up selection at FDR alpha is
    non-empty. Deterministic given seed.
    """
    if not 0.5 < beta < 1.0:
        raise HarnessError(f"beta must be in (0.5, 1), got {beta}")
    eps = n ** (-beta)
    hc_null, fisher_null = _null_statistic_sample(n, null_sims, seed, gamma0)
    thr_hc = float(np.quantile(hc_null, 1.0 - alpha, method="higher"))
    thr_fisher = float(np.quantile(fisher_null, 1.0 - alpha, method="higher"))

    js = np.arange(1, n + 1)
    bh_line = js * alpha / n

    rng = _rng_for(seed, 1, n)
    rej = {"hc": 0, "fisher": 0, "bh": 0}
    done = 0
    while done < n_trials:
        block = min(_MC_CHUNK, n_trials - done)
        P = rng.random((block, n))
        mask = rng.random((block, n)) < eps
        k = int(mask.sum())
        if k:
            z = rng.standard_normal(k)
            P[mask] = norm.sf(z + alt.mu)
        rej["hc"] += int((hc_values_matrix(P, gamma0) > thr_hc).sum())
        rej["fisher"] += int((-2.0 * np.log(P).sum(axis=1) > thr_fisher).sum())
        ps = np.sort(P, axis=1)
        rej["bh"] += int((ps <= bh_line[None, :]).any(axis=1).sum())
        done += block

    thresholds = {"hc": thr_hc, "fisher": thr_fisher, "bh": None}
    results = {}
    for stat in ("hc", "fisher", "bh"):
        power = rej[stat] / n_trials
        results[stat] = {
            "power": power,
            "se": math.sqrt(power * (1.0 - power) / n_trials),
            "threshold": thresholds[stat],
        }
    return {
        "config": {
            "n": n,
            "beta": beta,
            "epsilon": eps,
            "mu": alt.mu,
            "alpha": alpha,
            "n_trials": n_trials,
            "null_sims": null_sims,
            "seed": seed,
            "gamma0": gamma0,
        },
        "results": results,
    }


# --- surrogate data and dataset loading ------------------------------------------


def make_surrogate_pairs(
    n_pairs: int = 20,
    machine_per_pair: int = 120,
    human_per_pair: int = 40,
    shift: float = 0.9,
    noise_sd: float = 0.6,
    length_range: tuple[int, int] = (11, 16),
    seed: int = 0,
    model_id: str = "surrogate-lm",
    dataset_id: str = "surrogate",
) -> list[ArticlePair]:
    """Synthetic scored article pairs with a location-shift alternative.

    Machine sentences draw their log-perplexity from a normal whose
    mean decreases with token count; human sentences are shifted up by
    ``shift``. Token lists are synthetic carriers chosen so the
    sentence's log-perplexity equals the drawn value exactly.
    """
    rng = _rng_for(seed, 99)
    lo, hi = length_range
    pairs = []
    for p in range(n_pairs):
        machine = _surrogate_sentences(
            rng, f"{dataset_id}-{p}::machine", machine_per_pair, lo, hi, 0.0, noise_sd, model_id
        )
        human = _surrogate_sentences(
            rng, f"{dataset_id}-{p}::human", human_per_pair, lo, hi, shift, noise_sd, model_id
        )
        pairs.append(ArticlePair(title=f"{dataset_id}-{p}", machine=machine, human=human))
    return pairs


def _length_mean(length: int) -> float:
    # average log-perplexity decays with sentence length
    return 2.2 + 12.0 / length


def _surrogate_sentences(rng, doc_id, count, lo, hi, shift, noise_sd, model_id):
    out = []
    for i in range(count):
        length = int(rng.integers(lo, hi + 1))
        value = rng.normal(_length_mean(length) + shift, noise_sd)
        value = max(1e-3, float(value))
        out.append(
            TokenizedSentence(
                doc_id=doc_id,
                sent_index=i,
                tokens=tuple(f"w{j}" for j in range(length)),
                logprobs=(-value,) * length,
                context_id=None,
                model_id=model_id,
            )
        )
    return tuple(out)


def machine_doc_id(title: str) -> str:
    return f"{title}::machine"


def human_doc_id(title: str) -> str:
    return f"{title}::human"


def load_dataset(
    data_path: str | Path,
    logprob_path: str | Path,
    rules: SegmentationConfig | None = None,
) -> list[ArticlePair]:
    """Load article pairs from a two-column JSONL dataset plus a
    logprob file.

    Each dataset line is {"machine": text, "human": text, "title": str};
    the logprob file must hold one record per sentence under the doc ids
    ``<title>::machine`` and ``<title>::human``.
    """
    records: dict[tuple[str, int], TokenizedSentence] = {}
    for sent in iter_logprob_file(logprob_path):
        records[(sent.doc_id, sent.sent_index)] = sent

    pairs = []
    with open(data_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            try:
                title = row["title"]
                machine_text = row["machine"]
                human_text = row["human"]
            except KeyError as exc:
                raise HarnessError(
                    f"{data_path}:{lineno}: dataset row missing {exc}"
                ) from exc
            machine = _scored_sentences(machine_text, machine_doc_id(title), records, rules)
            human = _scored_sentences(human_text, human_doc_id(title), records, rules)
            pairs.append(ArticlePair(title=title, machine=machine, human=human))
    if not pairs:
        raise HarnessError(f"dataset {data_path} is empty")
    return pairs


def _scored_sentences(text, doc_id, records, rules):
    doc = segment(text, rules, doc_id=doc_id)
    out = []
    for span in doc.sentences:
        sent = records.get((doc_id, span.index))
        if sent is None:
            raise HarnessError(
                f"logprob file has no record for {doc_id!r} sentence {span.index}"
            )
        out.append(sent)
    return tuple(out)


def power_report_json(estimates: Iterable[PowerEstimate]) -> dict:
    return {"format": 1, "estimates": [e.to_json_obj() for e in estimates]}
