"""Command-line entry point: ``dqnn train|eval|extract-codeword|oracle|presets``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import evaluation as ev
from .codes import extract_codeword
from .config import ConfigError, list_presets, load_config, parse_eval_spec
from .network import load_checkpoint
from .runner import OUTPUT_ROOT_ENV, evaluate, output_dir, run_experiment
from .training import NumericalFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

log = logging.getLogger("dqnn")


def _rooted(path: Path) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(root) / path if root and not path.is_absolute() else path


def cmd_train(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    out = _rooted(Path(args.output_dir)) if args.output_dir else output_dir(cfg)
    res = run_experiment(cfg, out, max_epochs=args.max_epochs)
    print(f"final validation cost {res.summary['final_val_cost']:.6f}")
    print(f"mesh mean fidelity {res.summary['mean_fidelity']:.6f}")
    for key, value in res.summary.items():
        if key.startswith(("case.", "mesh.")):
            print(f"{key} {value:.6f}")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    spec, params = load_checkpoint(args.checkpoint)
    spec_path = Path(args.evalspec)
    spec_eval = parse_eval_spec(spec_path.read_text(), str(spec_path))
    out = _rooted(Path(args.output_dir)) if args.output_dir else \
        Path(args.checkpoint).parent / f"eval_{spec_path.stem}"
    summary, _, _ = evaluate(spec, params, spec_eval, None, out)
    for key, value in summary.items():
        print(f"{key} {value}")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_extract_codeword(args) -> int:
    spec, params = load_checkpoint(args.checkpoint)
    if spec.widths[args.layer - 1] != 1 or spec.channel_slot is None:
        raise ValueError(
            f"extract-codeword needs a single-qubit input layer followed by an embedded "
            f"channel; checkpoint has widths {list(spec.widths)} and "
            f"{'a' if spec.channel_slot else 'no'} channel")
    report = extract_codeword(spec, params, args.layer)
    for line in report.lines(args.top):
        print(line)
    cond = ev.conditional_fidelity(spec, params, args.N)
    for label, mean in cond.means.items():
        print(f"conditional fidelity {label}: {mean:.6f}")
    return EXIT_OK


def _p_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad p list {text!r}") from exc
    if not values or any(not 0 <= v <= 1 for v in values):
        raise argparse.ArgumentTypeError("p values must lie in [0, 1]")
    return values


def cmd_oracle(args) -> int:
    spec = params = None
    if args.checkpoint:
        spec, params = load_checkpoint(args.checkpoint)
    rows = ev.compare_to_oracle(spec, params, args.p, args.N)
    out = _rooted(Path(args.out))
    out.parent.mkdir(parents=True, exist_ok=True)
    ev.write_oracle_table(rows, out)
    print(out.read_text(), end="")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in list_presets():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqnn", description=__doc__)
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training config or bundled preset")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--output-dir", default=None)
    p.add_argument("--max-epochs", type=int, default=None, help="cap each session")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="mesh reports for a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("evalspec")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract-codeword", help="learned logical basis of the first layer")
    p.add_argument("checkpoint")
    p.add_argument("--layer", type=int, default=1)
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--top", type=int, default=4)
    p.set_defaults(func=cmd_extract_codeword)

    p = sub.add_parser("oracle", help="majority-vote failure table")
    p.add_argument("--p", type=_p_list, required=True, help="comma-separated flip probabilities")
    p.add_argument("--checkpoint", default=None, help="also score a [3,1,3] model")
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--out", default="oracle.csv")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("presets", help="list bundled presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
