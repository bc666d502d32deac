"""Command line: ``twistop run | check | qh-norm <config.json>``.

Exit codes: 0 success, 1 error, 2 refusal (the map or observable violates
a standing hypothesis: no spectral gap, or zero asymptotic variance).
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import load_config
from .errors import Refusal, TwistopError
from .maps import expression_observable
from .pipeline import json_text, resolve_stages, run_pipeline
from .quasi_holder import GridFunction, lasota_yorke_probe, seminorm_alpha
from .spectral import invariant_density
from .ulam import build_ulam


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    stages = None if args.stages is None else [s.strip() for s in args.stages.split(",") if s.strip()]
    resolve_stages(stages)
    summary, _ = run_pipeline(cfg, stages, args.out)
    print(json.dumps(summary.results, indent=2, sort_keys=True, default=str))
    return 0


def _cmd_check(args) -> int:
    cfg = load_config(args.config)
    _, artifacts = run_pipeline(cfg, ["check"], write=False)
    sys.stdout.write(artifacts["regularity.json"])
    return 0


def _cmd_qh(args) -> int:
    cfg = load_config(args.config)
    T = cfg.build_map()
    part = cfg.partition(T)
    K = build_ulam(T, part, cfg["method"], cfg["samples_per_cell"], cfg["seed"])
    which = cfg["qh_function"]
    if which == "observable":
        values = cfg.observable(part, T).values
    elif which == "density":
        values = invariant_density(K).right
    else:
        values = expression_observable(part, which).values
    f = GridFunction(part, np.asarray(values, dtype=float))
    rep = seminorm_alpha(f, cfg["qh_alpha"], cfg["qh_eps0"], cfg["qh_n_eps"])
    probe = lasota_yorke_probe(K, f, cfg["qh_alpha"], cfg["qh_eps0"], cfg["qh_k_max"],
                               cfg["qh_n_eps"])
    sys.stdout.write(json_text({"norm": rep.to_dict(), "lasota_yorke": probe.to_dict()}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twistop", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run analysis stages and write artifacts")
    r.add_argument("config")
    r.add_argument("--stages", help="comma-separated subset of check,density,spectrum,"
                                    "variance,ldp,clt,simulate,compare")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.set_defaults(func=_cmd_run)
    c = sub.add_parser("check", help="validate the config and print the regularity report")
    c.add_argument("config")
    c.set_defaults(func=_cmd_check)
    q = sub.add_parser("qh-norm", help="quasi-Hölder norm and Lasota-Yorke probe")
    q.add_argument("config")
    q.set_defaults(func=_cmd_qh)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Refusal as exc:
        stage = getattr(exc, "stage", None)
        where = f" at stage {stage}" if stage else ""
        print(f"refused{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (TwistopError, ValueError, OSError) as exc:
        stage = getattr(exc, "stage", None)
        where = f" at stage {stage}" if stage else ""
        print(f"error{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
