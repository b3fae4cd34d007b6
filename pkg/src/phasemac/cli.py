"""``phasemac <command> [--config FILE] [--seed N] [--bits 8,6,4,2] [--batch 1..128] [--out DIR] [--full]``"""

from __future__ import annotations

import argparse
import logging
import sys
import typing
from pathlib import Path

from .experiments import COMMANDS, TASKS, ExperimentConfig

log = logging.getLogger("phasemac")


def parse_int_list(text: str) -> tuple[int, ...]:
    """``"8,6,4"`` -> (8, 6, 4); ``"1..128"`` -> powers of two 1, 2, ..., 128."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part or part == "float":
            continue
        if ".." in part:
            lo, hi = (int(s) for s in part.split("..", 1))
            if lo < 1 or hi < lo:
                raise ValueError(f"bad range {part!r}")
            v = lo
            while v <= hi:
                out.append(v)
                v *= 2
        else:
            out.append(int(part))
    return tuple(out)


def _convert(value: str, type_name: str):
    if "tuple[int" in type_name:
        return parse_int_list(value)
    if "tuple[float" in type_name:
        return tuple(float(s) for s in value.split(","))
    if type_name.startswith("bool"):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if type_name.startswith("int"):
        return int(value)
    if type_name.startswith("float"):
        return float(value)
    return value


def read_config(path: str | Path) -> dict:
    """Plain ``key=value`` lines; ``#`` starts a comment."""
    types = ExperimentConfig.field_types()
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(val, str(types[key]))
    return values


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phasemac", description=(
        "Phase-domain MAC simulator: exactness oracle, energy model, "
        "anomaly-detection and MNIST experiments, comparison report."))
    ap.add_argument("command", choices=TASKS)
    ap.add_argument("--config", help="key=value config file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--bits", type=parse_int_list, help="bit widths, e.g. 8,6,4,2")
    ap.add_argument("--batch", type=parse_int_list, dest="batches",
                    help="batch sizes, e.g. 1,8,64 or 1..128 (powers of two)")
    ap.add_argument("--out", dest="out_dir", help="output directory (default: out)")
    ap.add_argument("--data", dest="data_dir",
                    help="data root (default: $PHASEMAC_DATA or ./data)")
    ap.add_argument("--full", action="store_true", default=None,
                    help="full-scale MNIST configuration (slow)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    values = read_config(args.config) if args.config else {}
    for key in ("seed", "bits", "batches", "out_dir", "data_dir", "full"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    values["task"] = args.command
    return ExperimentConfig(**values)


def main(argv: typing.Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        result = COMMANDS[cfg.task](cfg)
    except (ValueError, OSError, RuntimeError, ArithmeticError) as e:
        print(f"phasemac {args.command}: error: {e}", file=sys.stderr)
        return 2
    if cfg.task == "oracle" and not result.passed:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
