"""Command-line entry point: ``isplab {audit,feasibility,sweep,zoo,verify-golden}``.

Exit codes: 0 when the run completed (whatever the claim verdicts),
1 when ``verify-golden`` finds a difference, 2 on configuration or
runtime errors.
"""

from __future__ import annotations

import argparse
import filecmp
import logging
import sys
import tempfile
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .exceptions import ISPLabError
from .harness import RunConfig, load_config, run_audit, run_feasibility, sweep
from .zoo import KINDS, _KIND_PARAMS

log = logging.getLogger("isplab")

GOLDEN_FILES = ("audit.csv", "summary.json")


def golden_dir() -> Path:
    return Path(str(resources.files("isplab") / "golden"))


def _config(args) -> RunConfig:
    if not args.config:
        raise ISPLabError("--config is required")
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output"] = args.out
    if args.include_degenerate_windows:
        overrides["include_degenerate_windows"] = True
    if args.grid_oracle:
        overrides["grid_oracle"] = True
    if args.diagonal_windows:
        overrides["diagonal_windows_only"] = True
    return replace(cfg, **overrides).validate()


def run_golden(out: Path) -> None:
    """Regenerate the golden run (audit + feasibility) into ``out``."""
    cfg = load_config(golden_dir() / "config.json")
    run_audit(cfg, out)
    run_feasibility(cfg, out)


def verify_golden(out: Path | None = None) -> list[str]:
    """Re-run the golden configuration and list files that differ."""
    ref = golden_dir()
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(out) if out else Path(tmp)
        run_golden(target)
        expected = sorted(
            p.relative_to(ref).as_posix() for p in ref.rglob("*") if p.is_file() and p.name != "config.json"
        )
        produced = sorted(p.relative_to(target).as_posix() for p in target.rglob("*") if p.is_file())
        diffs = sorted(set(expected) ^ set(produced))
        for rel in sorted(set(expected) & set(produced)):
            if not filecmp.cmp(ref / rel, target / rel, shallow=False):
                diffs.append(rel)
        return diffs


def _cmd_zoo(args) -> int:
    for kind in KINDS:
        params = ", ".join(sorted(_KIND_PARAMS[kind])) or "-"
        print(f"{kind:18s} params: {params}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isplab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration (JSON)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--include-degenerate-windows", action="store_true")
        p.add_argument("--grid-oracle", action="store_true", help="cross-check search with the grid oracle")
        p.add_argument("--diagonal-windows", action="store_true", help="use only windows (k,k)")

    for name in ("audit", "feasibility", "sweep"):
        common(sub.add_parser(name))
    zoo = sub.add_parser("zoo")
    zoo.add_argument("action", choices=["list"])
    golden = sub.add_parser("verify-golden")
    golden.add_argument("--out", help="keep the regenerated files here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "zoo":
            return _cmd_zoo(args)
        if args.command == "verify-golden":
            diffs = verify_golden(args.out)
            if diffs:
                for rel in diffs:
                    print(f"MISMATCH {rel}")
                return 1
            print("golden run reproduced")
            return 0
        cfg = _config(args)
        if args.command == "audit":
            summary = run_audit(cfg)
            for cid, c in summary["claims"].items():
                print(f"{cid}: " + " ".join(f"{k}={v}" for k, v in c.items() if v))
        elif args.command == "feasibility":
            for r in run_feasibility(cfg):
                extra = f" oracle_agreement={r['oracle_agreement']}" if r.get("oracle_agreement") is not None else ""
                print(f"{r['operator_id']} {r['family']}: {r.get('verdict', r.get('skipped'))}{extra}")
        else:
            agg = sweep(cfg)
            for cid, c in agg["claims"].items():
                print(f"{cid}: pass_rate={c['pass_rate']}")
        return 0
    except (ISPLabError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
