"""Command line entry point ``fbarlab``.

Exit codes: 0 success, 2 validation error, 3 experiment or verification failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import FbarLabError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3


def _print(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True, default=float))


def _read_symbols(path: Path) -> np.ndarray:
    text = path.read_text().replace(",", " ").split()
    try:
        return np.array([int(t) for t in text], dtype=np.int64)
    except ValueError as exc:
        raise ValidationError(f"{path} is not a whitespace separated symbol list") from exc


def cmd_run(args) -> int:
    from .experiments import run_experiment

    man = run_experiment(args.config, args.out, args.seed)
    _print({"manifest": man.path, "outputs": man.outputs})
    return EXIT_OK


def cmd_report(args) -> int:
    from .experiments import RunManifest, emit_report

    man = RunManifest.load(args.manifest)
    print(emit_report(man))
    if not args.no_figures:
        try:
            from .plotting import render
        except ImportError:
            print("matplotlib not installed; skipping figures", file=sys.stderr)
        else:
            for p in render(man, args.figures):
                print(f"figure {p}")
    return EXIT_OK


def cmd_fbar(args) -> int:
    from .fbar import edit_distance_n, fbar_measures_exact, fbar_sequences, read_word_law

    a, b = Path(args.file_a), Path(args.file_b)
    if a.suffix == ".json" and b.suffix == ".json":
        est = fbar_measures_exact(read_word_law(json.loads(a.read_text())),
                                  read_word_law(json.loads(b.read_text())), cap=args.cap)
        _print(est.to_json())
        return EXIT_OK
    x, y = _read_symbols(a), _read_symbols(b)
    if args.n:
        if min(x.size, y.size) < args.n:
            raise ValidationError(f"need at least {args.n} symbols in each file")
        _print({"value": edit_distance_n(x[: args.n], y[: args.n]), "kind": "exact", "n": args.n})
    else:
        _print(fbar_sequences(x, y).to_json())
    return EXIT_OK


def cmd_lyap(args) -> int:
    from .circle import SkewSystem
    from .cocycle import top_lyapunov
    from .symdyn import BernoulliVector

    fam = SkewSystem.load(args.family)
    p = BernoulliVector.normalized(args.p) if args.p else BernoulliVector.uniform(fam.size)
    est = top_lyapunov(fam, p, args.steps, args.trials, args.seed)
    _print(est.to_json())
    return EXIT_OK


def cmd_cifs_verify(args) -> int:
    from .circle import Arc, SkewSystem, verify_cifs

    sysm = SkewSystem.load(args.system)
    col = json.loads(Path(args.collection).read_text())
    need = ("words", "J", "K", "alpha0", "alpha", "eps")
    missing = [k for k in need if k not in col]
    if missing:
        raise ValidationError(f"collection JSON lacks {missing}")
    res = verify_cifs(sysm, col["words"], Arc.from_json(col["J"]), col["K"], col["alpha0"],
                      col["alpha"], col["eps"], args.grid or col.get("grid", 256))
    out = res.to_json()
    out["ok"] = res.ok
    _print(out)
    return EXIT_OK if res.ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbarlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config (JSON or YAML) or re-run a manifest")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarise a finished run and render figures")
    p.add_argument("manifest")
    p.add_argument("--figures", help="figure directory (default: <run>/figures)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fbar", help="f-bar between two symbol files or two JSON word laws")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--n", type=int, help="compare the first n symbols only")
    p.add_argument("--cap", type=int, default=10**6, help="cost-matrix cap for exact transport")
    p.set_defaults(func=cmd_fbar)

    p = sub.add_parser("lyap", help="top Lyapunov exponent of a matrix family")
    p.add_argument("family")
    p.add_argument("--steps", type=int, default=10**5)
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=float, nargs="+", help="probability vector (default uniform)")
    p.set_defaults(func=cmd_lyap)

    p = sub.add_parser("cifs-verify", help="verify a word collection as a CIFS")
    p.add_argument("system")
    p.add_argument("collection")
    p.add_argument("--grid", type=int)
    p.set_defaults(func=cmd_cifs_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FbarLabError, OSError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
