"""Command line entry point: ``shellfield <subcommand> --config <path>``.

Results go to ``--out`` (or stdout when no path is given) as CSV or JSON;
diagnostics go to stderr.  The exit status is 0 exactly when every
threshold configured for the run passes, 1 when some threshold fails and
2 on usage, configuration or quadrature errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

from ._jsonutil import jsonable
from .experiments import COMMANDS, Table, load_config, preset
from .shell import QuadratureError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def render(table: Table, fmt: str) -> str:
    if fmt == "json":
        envelope = {
            "experiment": table.name,
            "passed": table.passed,
            "columns": table.columns,
            "rows": table.rows,
            "metadata": table.metadata,
        }
        return json.dumps(jsonable(envelope), indent=2) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=table.columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in table.rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shellfield", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="experiment config (JSON); defaults to the bundled preset")
        src.add_argument("--preset", help=f"bundled preset name (default: {name})")
        p.add_argument("--out", type=Path, help="result file; stdout when omitted")
        p.add_argument("--format", choices=("csv", "json"), help="result format (default json)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else load_config(preset(args.preset or args.command))
        table = COMMANDS[args.command](cfg)
    except (ValueError, KeyError, IndexError, OSError, QuadratureError, NotImplementedError) as exc:
        # ValueError covers config, resolution, dimension, zero-norm and PSD failures
        print(f"shellfield {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    fmt = args.format or cfg.output.get("format", "json")
    out = args.out or (Path(cfg.output["path"]) if cfg.output.get("path") else None)
    text = render(table, fmt)
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        for line in table.summary:
            print(line)
        print(f"{table.name}: {'PASS' if table.passed else 'FAIL'} -> {out}")
    if table.metadata.get("all_rows_failed"):
        print(f"shellfield {args.command}: every row failed", file=sys.stderr)
    return EXIT_OK if table.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
