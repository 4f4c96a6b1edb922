"""Command-line interface: ``run``, ``sweep`` and ``dump-preset``."""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .config import FLAG_KEYS, ParameterWarning, dump_config, from_dict, load_file, merge, set_dotted
from .errors import ConfigError, InvalidArgument, RunAborted, SolverFailure, WavetopoError
from .presets import PRESET_IDS, preset_dict

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

_FLOAT_FLAGS = ("ell", "m", "k", "beta", "c_f", "volume_fraction", "gamma")
_INT_FLAGS = ("iters", "seed", "nx", "ny")
_SCHEMES = ("we", "dwe", "bwe", "dbwe", "gwe", "dgwe", "rde")
_INITS = ("filled", "hole", "perforated", "half", "random")


def _add_run_options(p):
    p.add_argument("--preset", help=f"one of {', '.join(PRESET_IDS)}")
    p.add_argument("--config", help="JSON file merged before the flags")
    p.add_argument("--scheme", type=str.lower, choices=_SCHEMES)
    for name in _FLOAT_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=float)
    for name in _INT_FLAGS:
        p.add_argument("--" + name, dest=name, type=int)
    p.add_argument("--init", type=str.lower, choices=_INITS)
    p.add_argument("--init-prev", dest="init_prev", type=str.lower, choices=_INITS)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--quiet", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="wavetopo", description="Level set topology optimization "
                                     "driven by wave-type evolution equations.")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_options(sub.add_parser("run", help="run one optimization"))
    sweep = sub.add_parser("sweep", help="run one optimization per parameter value")
    _add_run_options(sweep)
    sweep.add_argument("--param", required=True, choices=sorted(FLAG_KEYS))
    sweep.add_argument("--values", required=True, nargs="+")
    dump = sub.add_parser("dump-preset", help="print a preset as JSON")
    dump.add_argument("preset")
    return parser


def overrides_from_args(args):
    raw = load_file(args.config) if args.config else {}
    if args.preset:
        raw["preset"] = args.preset
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            set_dotted(raw, key, value)
    return raw


def _progress(run, step):
    h = run.history
    row = h.rows[-1]
    print(f"{row['iteration']:4d}  J/J0 {row['J_over_J0']:.6f}  vol {row['vol_frac']:.4f}  "
          f"G {row['G']:+.3e}  {row['wall_ms']:.0f} ms", flush=True)


def _run_one(config, out, quiet):
    from .io import export_run
    from .optimizer import run

    result = run(config, out_dir=out, callback=None if quiet else _progress)
    if out is not None:
        export_run(result, out, beta=config.evolution.beta)
        (Path(out) / "config.json").write_text(dump_config(config) + "\n")
    return result


def _summary(result):
    h = result.history
    return (f"iterations {len(h)}  converged {h.converged}  J/J0 {h.last('J_over_J0'):.6f}  "
            f"vol {h.last('vol_frac'):.4f}  G {h.last('G'):+.3e}")


def cmd_run(args):
    config = from_dict(overrides_from_args(args))
    result = _run_one(config, args.out, args.quiet)
    print(_summary(result))


def cmd_sweep(args):
    base = overrides_from_args(args)
    configs = []
    for value in args.values:
        raw = merge(base, set_dotted({}, FLAG_KEYS[args.param], _coerce(args.param, value)))
        configs.append((value, from_dict(raw)))
    for value, config in configs:
        out = None if args.out is None else args.out / f"{args.param}={value}"
        result = _run_one(config, out, quiet=True)
        print(f"{args.param}={value}  {_summary(result)}", flush=True)


def _coerce(param, value):
    if param in _FLOAT_FLAGS:
        return float(value)
    if param in _INT_FLAGS:
        return int(value)
    return value


def cmd_dump(args):
    try:
        raw = preset_dict(args.preset)
    except InvalidArgument as exc:
        raise ConfigError(str(exc), key="preset") from None
    print(json.dumps(raw, indent=2))


def _show_warning(message, category, *args, **kwargs):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "dump-preset": cmd_dump}[args.command]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", ParameterWarning)
            warnings.showwarning = _show_warning
            handler(args)
    except (ConfigError, InvalidArgument) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunAborted, SolverFailure, WavetopoError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
