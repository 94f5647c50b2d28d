"""Command-line interface: `hcedit-export export` and `hcedit-export serve`."""

from __future__ import annotations

import argparse
import sys

from .export import ExportError, ExportJob, export
from .models import ModelError, load_model
from .server import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcedit-export",
        description="Emit per-token natural-log probabilities in the "
        "hcedit wire format, from a file or over HTTP.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="score a document into a JSONL logprob file")
    p.add_argument("--in", dest="input_path", required=True)
    p.add_argument("--model", required=True,
                   help="ngram:ORDER[:CORPUS] or a causal LM name/path")
    p.add_argument("--context", choices=["none", "prev"], default="none")
    p.add_argument("--out", default="-")
    p.add_argument("--doc-id", default=None)
    p.add_argument("--spans-from", default=None,
                   help="spans JSON from `hcedit segment` (default: invoke it)")
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("serve", help="serve the POST /logprobs contract")
    p.add_argument("--model", required=True)
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--device", default="cpu")
    p.set_defaults(func=_cmd_serve)
    return parser


def _cmd_export(args) -> int:
    job = ExportJob(
        input_path=args.input_path,
        model=args.model,
        context_policy=args.context,
        output_path=args.out,
        doc_id=args.doc_id,
        spans_from=args.spans_from,
        device=args.device,
    )
    count = export(job)
    if args.out != "-":
        print(f"wrote {count} records -> {args.out}")
    return 0


def _cmd_serve(args) -> int:
    model = load_model(args.model, device=args.device)
    serve(model, args.host, args.port)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ExportError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
