import json
import math

import numpy as np
import pytest

from hcedit.calibration import build_null_table
from hcedit.errors import HarnessError
from hcedit.harness import (
    AltSpec,
    ArticlePair,
    MixSpec,
    estimate_power,
    human_doc_id,
    load_dataset,
    machine_doc_id,
    make_surrogate_pairs,
    mix,
    mixture_mc,
)
from hcedit.pipeline import ThresholdSpec, analyze_scored

from conftest import carrier_sentence, write_wire_file


def pool(count, start_lppt=2.0, doc_id="m", length=12):
    return [
        carrier_sentence(start_lppt + 0.01 * i, length, sent_index=i, doc_id=doc_id)
        for i in range(count)
    ]


class TestMixSpec:
    def test_epsilon_range(self):
        with pytest.raises(HarnessError):
            MixSpec(epsilon=1.0, target_len=10)
        with pytest.raises(HarnessError):
            MixSpec(epsilon=-0.1, target_len=10)
        MixSpec(epsilon=0.0, target_len=10)  # null configuration allowed

    def test_target_len_minimum(self):
        with pytest.raises(HarnessError):
            MixSpec(epsilon=0.1, target_len=1)


class TestMix:
    def test_zero_insertions_gives_pure_machine_text(self):
        doc = mix(pool(20), pool(20, doc_id="h"), MixSpec(0.0, 10, seed=1))
        assert doc.truth == frozenset()
        assert len(doc.sentences) == 10
        assert all(s.kind == "machine" for s in doc.sources)

    def test_seeded_replay_of_the_draw_sequence(self):
        eps, target, seed = 0.2, 10, 42
        machine, human = pool(30), pool(30, doc_id="h", start_lppt=4.0)
        doc = mix(machine, human, MixSpec(eps, target, seed=seed))

        # hand-replay the documented draw order: K, pool picks, positions
        rng = np.random.default_rng(seed)
        base_len = round(target * (1 - eps))
        k = rng.binomial(target, eps)
        picks = rng.choice(len(human), size=k, replace=False)
        symbolic = [("machine", i) for i in range(base_len)]
        for pick in picks:
            pos = int(rng.integers(0, len(symbolic) + 1))
            symbolic.insert(pos, ("human", int(pick)))
        expect_truth = {i for i, (kind, _) in enumerate(symbolic) if kind == "human"}

        assert len(doc.sentences) == base_len + k
        assert set(doc.truth) == expect_truth
        for i, (kind, orig) in enumerate(symbolic):
            assert doc.sources[i].kind == kind
            assert doc.sources[i].orig_index == orig

    def test_sentences_reindexed_but_scores_untouched(self):
        machine, human = pool(20), pool(20, doc_id="h", start_lppt=4.0)
        doc = mix(machine, human, MixSpec(0.3, 10, seed=5))
        for i, s in enumerate(doc.sentences):
            assert s.sent_index == i
            src = doc.sources[i]
            original = (machine if src.kind == "machine" else human)[src.orig_index]
            assert s.logprobs == original.logprobs
            assert s.tokens == original.tokens

    def test_machine_pool_exhaustion_names_counts(self):
        with pytest.raises(HarnessError, match="need 9 sentences, have 5"):
            mix(pool(5), pool(20, doc_id="h"), MixSpec(0.1, 10, seed=1))

    def test_human_pool_exhaustion_names_counts(self):
        machine = pool(50)
        with pytest.raises(HarnessError, match="human pool exhausted"):
            # eps high enough that K > 1 almost surely
            mix(machine, pool(1, doc_id="h"), MixSpec(0.8, 40, seed=3))

    def test_expected_truth_fraction_matches_epsilon(self):
        eps = 0.1
        machine, human = pool(40), pool(40, doc_id="h")
        rng = np.random.default_rng(2024)
        ratios = []
        for _ in range(10_000):
            doc = mix(machine, human, MixSpec(eps, 30, seed=0), rng=rng)
            ratios.append(len(doc.truth) / len(doc.sentences))
        assert abs(float(np.mean(ratios)) - eps) < 0.01

    def test_epsilon_zero_mix_equals_plain_truncation(self):
        machine = pool(20)
        doc = mix(machine, pool(5, doc_id="h"), MixSpec(0.0, 12, seed=9), doc_id="base")
        table = build_null_table(pool(200, doc_id="calib"), min_bucket=30)
        import dataclasses

        manual = [
            dataclasses.replace(s, doc_id="base", sent_index=i)
            for i, s in enumerate(machine[:12])
        ]
        r1 = analyze_scored(None, list(doc.sentences), table, ThresholdSpec(value=3.0))
        r2 = analyze_scored(None, manual, table, ThresholdSpec(value=3.0))
        assert r1.to_json() == r2.to_json()


class TestEstimatePower:
    def test_grid_runs_and_is_deterministic(self):
        pairs = make_surrogate_pairs(
            n_pairs=6, machine_per_pair=60, human_per_pair=30, shift=1.2, seed=3
        )
        kw = dict(
            epsilons=[0.0, 0.2],
            ns=[30],
            alpha=0.05,
            n_trials=40,
            seed=11,
            min_bucket=20,
            null_reps=150,
        )
        a = estimate_power({"surrogate": pairs}, **kw)
        b = estimate_power({"surrogate": pairs}, **kw)
        assert [e.to_json_obj() for e in a] == [e.to_json_obj() for e in b]

        by_eps = {e.config["epsilon"]: e for e in a}
        assert by_eps[0.0].power < by_eps[0.2].power  # signal beats size
        for e in a:
            assert e.se == pytest.approx(
                math.sqrt(e.power * (1 - e.power) / e.n_trials)
            )

    def test_insufficient_data_cells_are_skipped_with_reason(self):
        pairs = make_surrogate_pairs(n_pairs=1, machine_per_pair=10, human_per_pair=5, seed=1)
        est = estimate_power(
            {"tiny": pairs}, epsilons=[0.1], ns=[200], n_trials=5, seed=1
        )
        assert len(est) == 1
        assert est[0].skipped_reason is not None
        assert math.isnan(est[0].power)
        # the serialized form stays strict JSON (no NaN literals)
        from hcedit.harness import power_report_json

        text = json.dumps(power_report_json(est))
        parsed = json.loads(text, parse_constant=lambda c: pytest.fail(f"bad literal {c}"))
        assert parsed["estimates"][0]["power"] is None

    def test_localization_metrics_reported_on_rejections(self):
        pairs = make_surrogate_pairs(
            n_pairs=6, machine_per_pair=60, human_per_pair=30, shift=2.5, seed=3
        )
        est = estimate_power(
            {"surrogate": pairs},
            epsilons=[0.2],
            ns=[30],
            n_trials=30,
            seed=7,
            min_bucket=20,
            null_reps=150,
        )
        e = est[0]
        assert e.n_rejections > 0
        assert e.precision is not None and 0.0 <= e.precision <= 1.0
        assert e.recall is not None and 0.0 <= e.recall <= 1.0


class TestMixtureMC:
    def test_null_configuration_sizes_near_alpha(self):
        out = mixture_mc(
            n=400, beta=0.7, alt=AltSpec(mu=0.0), n_trials=800, seed=21,
            alpha=0.05, null_sims=2000,
        )
        for stat in ("hc", "fisher", "bh"):
            power = out["results"][stat]["power"]
            band = 3 * math.sqrt(0.05 * 0.95 / 800)
            assert abs(power - 0.05) <= band, f"{stat} size {power}"

    def test_deterministic_given_seed(self):
        kw = dict(n=200, beta=0.6, alt=AltSpec(mu=2.0), n_trials=300, seed=5, null_sims=1000)
        assert mixture_mc(**kw) == mixture_mc(**kw)

    def test_beta_range_enforced(self):
        with pytest.raises(HarnessError):
            mixture_mc(n=100, beta=0.4, alt=AltSpec(mu=1.0), n_trials=10, seed=1)
        with pytest.raises(HarnessError):
            mixture_mc(n=100, beta=1.0, alt=AltSpec(mu=1.0), n_trials=10, seed=1)

    def test_strong_shift_lifts_power_above_size(self):
        out = mixture_mc(
            n=400, beta=0.55, alt=AltSpec(mu=3.0), n_trials=400, seed=13, null_sims=1000
        )
        assert out["results"]["hc"]["power"] > 0.5
        assert out["results"]["bh"]["threshold"] is None

    def test_hc_dominates_bh_nonempty_below_recovery_boundary(self):
        """With many weak signals (shift under the exact-recovery
        boundary) HC detects the ensemble while BH rarely selects
        anything; the global orderings flip once the shift is large
        enough for individual signals to clear the selection threshold
        (see the known-failing acceptance assertion at r = 0.6)."""
        n = 10_000
        r = 0.06  # below (1 - sqrt(1 - beta))^2 ~ 0.09 at beta = 0.51
        out = mixture_mc(
            n=n, beta=0.51, alt=AltSpec(mu=math.sqrt(2 * r * math.log(n))),
            n_trials=600, seed=5, null_sims=1500,
        )
        res = out["results"]
        gap_se = math.hypot(res["hc"]["se"], res["bh"]["se"])
        assert res["hc"]["power"] - res["bh"]["power"] >= 3 * gap_se, (
            f"HC {res['hc']['power']:.3f} vs BH non-empty {res['bh']['power']:.3f}"
        )


class TestDatasetLoading:
    def _write_dataset(self, tmp_path, pairs):
        data_path = tmp_path / "pairs.jsonl"
        records = []
        with open(data_path, "w") as fh:
            for pair in pairs:
                machine_text = " ".join(" ".join(s.tokens) + "." for s in pair.machine)
                human_text = " ".join(" ".join(s.tokens) + "." for s in pair.human)
                fh.write(json.dumps({
                    "title": pair.title, "machine": machine_text, "human": human_text,
                }) + "\n")
                records.extend(pair.machine)
                records.extend(pair.human)
        wire = write_wire_file(tmp_path / "pairs.logprobs.jsonl", records)
        return str(data_path), wire

    def test_round_trip(self, tmp_path):
        pairs = make_surrogate_pairs(n_pairs=3, machine_per_pair=5, human_per_pair=4, seed=2)
        # surrogate doc ids follow the dataset convention already
        assert pairs[0].machine[0].doc_id == machine_doc_id(pairs[0].title)
        assert pairs[0].human[0].doc_id == human_doc_id(pairs[0].title)
        data_path, wire = self._write_dataset(tmp_path, pairs)
        loaded = load_dataset(data_path, wire)
        assert len(loaded) == 3
        for orig, back in zip(pairs, loaded):
            assert back.title == orig.title
            assert back.machine == orig.machine
            assert back.human == orig.human

    def test_missing_record_is_an_error(self, tmp_path):
        pairs = make_surrogate_pairs(n_pairs=1, machine_per_pair=3, human_per_pair=2, seed=2)
        data_path, wire = self._write_dataset(tmp_path, pairs)
        # drop the last record
        lines = open(wire).read().splitlines()
        open(wire, "w").write("\n".join(lines[:-1]) + "\n")
        with pytest.raises(HarnessError, match="no record"):
            load_dataset(data_path, wire)
