"""Command-line interface.

Subcommands:
    segment    split a document into sentence spans (JSON handoff)
    calibrate  build a null calibration table from logprob files
    analyze    score a document and test it for edits
    crit       simulate HC critical values
    power      power study over mixed-authorship documents
    mixmc      abstract sparse-mixture Monte Carlo

Exit codes: 0 verdict "not_edited", 3 verdict "edited", 1 error,
2 usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .calibration import (
    DEFAULT_MIN_BUCKET,
    DEFAULT_MIN_LEN,
    NullTable,
    build_null_table,
)
from .errors import HcEditError
from .multitest import (
    DEFAULT_GAMMA0,
    CriticalValueTable,
    simulate_critical_values,
)
from .pipeline import ThresholdSpec, analyze
from .providers import ProviderDescriptor, iter_logprob_file, validate_logprob_file
from .segment import SegmentationConfig, segment

EXIT_NOT_EDITED = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_EDITED = 3


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _load_doc(path: str, config_path: str | None, doc_id: str | None = None):
    rules = SegmentationConfig.from_json(config_path) if config_path else None
    if path == "-":
        text = sys.stdin.read()
        doc_id = doc_id or "stdin"
    else:
        text = Path(path).read_text(encoding="utf-8")
        doc_id = doc_id or Path(path).stem
    return segment(text, rules, doc_id=doc_id)


def _cmd_segment(args) -> int:
    doc = _load_doc(args.doc, args.segment_config, args.doc_id)
    obj = {
        "doc_id": doc.doc_id,
        "spans": [
            {"index": s.index, "start": s.start, "end": s.end, "text": s.text}
            for s in doc.sentences
        ],
    }
    out = json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    return 0


def _cmd_calibrate(args) -> int:
    def stream():
        for path in args.logprobs:
            yield from iter_logprob_file(path)

    table = build_null_table(
        stream(), min_len=args.min_len, min_bucket=args.min_bucket
    )
    table.save(args.out)
    total = table.total_samples
    print(
        f"calibrated {total} sentences across {len(table.per_length)} "
        f"length buckets -> {args.out}"
    )
    return 0


def _cmd_validate(args) -> int:
    summary = validate_logprob_file(args.logprobs)
    print(f"records: {summary.records}  tokens: {summary.token_total}")
    for v in summary.violations:
        print(f"violation: {v}")
    return 0 if summary.ok() else 1


def _cmd_analyze(args) -> int:
    doc = _load_doc(args.doc, args.segment_config, args.doc_id)
    provider = ProviderDescriptor.parse(args.provider)
    table = NullTable.load(args.table)
    thr = ThresholdSpec()
    if args.thr is not None:
        thr = ThresholdSpec(value=args.thr)
    elif args.crit_table:
        thr = ThresholdSpec(
            crit_table=CriticalValueTable.load(args.crit_table), alpha=args.alpha
        )
    elif args.null_docs:
        docs = []
        for p in sorted(Path(args.null_docs).glob("*.txt")):
            docs.append(_load_doc(str(p), args.segment_config))
        thr = ThresholdSpec(null_docs=docs, alpha=args.alpha)
    else:
        raise HcEditError("one of --thr, --crit-table, --null-docs is required")

    report = analyze(doc, provider, table, thr, gamma0=args.gamma0)
    if args.out:
        report.save(args.out)
    else:
        sys.stdout.write(report.to_json())
    if args.pretty:
        sys.stdout.write(report.render_table())
    return EXIT_EDITED if report.verdict == "edited" else EXIT_NOT_EDITED


def _cmd_crit(args) -> int:
    table = simulate_critical_values(
        ns=args.n,
        alphas=args.alpha,
        n_sims=args.sims,
        seed=args.seed,
        gamma0=args.gamma0,
    )
    table.save(args.out)
    print(f"simulated {len(table.entries)} critical values -> {args.out}")
    return 0


def _cmd_power(args) -> int:
    pairs = harness.load_dataset(args.data, args.logprobs)
    dataset_id = Path(args.data).stem
    estimates = harness.estimate_power(
        {dataset_id: pairs},
        epsilons=args.eps,
        ns=args.n,
        alpha=args.alpha,
        n_trials=args.trials,
        seed=args.seed,
        min_len=args.min_len,
        min_bucket=args.min_bucket,
        null_reps=args.null_reps,
    )
    obj = harness.power_report_json(estimates)
    Path(args.out).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for e in estimates:
        c = e.config
        if e.skipped_reason:
            print(f"eps={c['epsilon']} n={c['n_sentences']}: skipped ({e.skipped_reason})")
        else:
            print(
                f"eps={c['epsilon']} n={c['n_sentences']}: "
                f"power {e.power:.3f} ({e.se:.3f})"
            )
    return 0


def _cmd_mixmc(args) -> int:
    result = harness.mixture_mc(
        n=args.n,
        beta=args.beta,
        alt=harness.AltSpec(mu=args.mu),
        n_trials=args.trials,
        seed=args.seed,
        alpha=args.alpha,
        null_sims=args.null_sims,
    )
    Path(args.out).write_text(
        json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for stat, row in result["results"].items():
        print(f"{stat}: power {row['power']:.3f} ({row['se']:.3f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcedit",
        description=(
            "Decide whether a document was written entirely by a given "
            "language model or contains sparse edits, and localize them."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="emit sentence spans as JSON")
    p.add_argument("--doc", required=True, help="input text file, or - for stdin")
    p.add_argument("--doc-id", default=None)
    p.add_argument("--segment-config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("calibrate", help="build a null calibration table")
    p.add_argument("--logprobs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-len", type=int, default=DEFAULT_MIN_LEN)
    p.add_argument("--min-bucket", type=int, default=DEFAULT_MIN_BUCKET)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("validate", help="check a logprob file against the wire schema")
    p.add_argument("--logprobs", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("analyze", help="test one document for edits")
    p.add_argument("--doc", required=True)
    p.add_argument("--doc-id", default=None)
    p.add_argument("--provider", required=True, help="file:PATH or http:URL")
    p.add_argument("--table", required=True)
    p.add_argument("--thr", type=float, default=None)
    p.add_argument("--crit-table", default=None)
    p.add_argument("--null-docs", default=None, help="directory of null .txt documents")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--gamma0", type=float, default=DEFAULT_GAMMA0)
    p.add_argument("--segment-config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("crit", help="simulate HC critical values")
    p.add_argument("--n", type=_int_list, required=True)
    p.add_argument("--alpha", type=_float_list, required=True)
    p.add_argument("--sims", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--gamma0", type=float, default=DEFAULT_GAMMA0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_crit)

    p = sub.add_parser("power", help="power study over mixed documents")
    p.add_argument("--data", required=True)
    p.add_argument("--logprobs", required=True)
    p.add_argument("--eps", type=_float_list, default=[0.1, 0.2])
    p.add_argument("--n", type=_int_list, default=[50, 100, 200])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--min-len", type=int, default=DEFAULT_MIN_LEN)
    p.add_argument("--min-bucket", type=int, default=DEFAULT_MIN_BUCKET)
    p.add_argument("--null-reps", type=int, default=400,
                   help="pure-machine replicates used to calibrate the threshold")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_power)

    p = sub.add_parser("mixmc", help="sparse P-value mixture Monte Carlo")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--null-sims", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mixmc)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HcEditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
