"""Command-line entry point ``posg-ltl-synth``.

Exit codes: 0 success, 1 invalid input, 2 internal or solver error.
Every JSON artifact carries ``schema_version`` and the resolved config.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

SCHEMA_VERSION = "1.0"
BUILTIN_MODELS = ("example1", "example2")

log = logging.getLogger("posg_ltl_synth")


class InputError(Exception):
    """Bad user input; maps to exit code 1."""


# ---------------------------------------------------------------------------
# argument helpers


def int_list(text: str) -> list[int]:
    """Parse ``3``, ``1,2`` or ``1..4`` into a list of positive ints."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"expected positive sizes, got {text!r}")
    return out


def positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model JSON path, or builtin:example1 / builtin:example2")
    goal = common.add_mutually_exclusive_group()
    goal.add_argument("--formula", help="LTL formula in the supported fragment")
    goal.add_argument("--hoa", help="path to a deterministic Rabin automaton in HOA format")
    common.add_argument("--gd", type=int_list, default=None, help="defender controller sizes")
    common.add_argument("--ga", type=int_list, default=None, help="adversary controller sizes")
    common.add_argument("--eps", type=positive_float, default=None)
    common.add_argument("--variant", choices=("plain", "guarded"), default=None)
    common.add_argument("--max-new", type=nonneg_int, default=2)
    common.add_argument("--rounds", type=nonneg_int, default=1)
    common.add_argument("--trials", type=positive_int, default=None)
    common.add_argument("--caps", type=int_list, default=[40, 80])
    common.add_argument("--seed", type=int, default=7)
    common.add_argument("--out", help="output path (JSON, or SVG for plot); stdout when omitted")
    common.add_argument("--threads", type=positive_int, default=1,
                        help="worker cap; the computation itself is single-threaded")
    common.add_argument("--start", choices=("ones", "sampled"), default="ones",
                        help="search start masks: all entries, or the seeded harness draw")
    common.add_argument("--structures", help="search output to take the structure pair from")
    common.add_argument("--index", type=nonneg_int, default=0, help="which candidate of --structures")
    common.add_argument("--fsc-d", help="defender controller JSON (simulate)")
    common.add_argument("--fsc-a", help="adversary controller JSON (simulate)")
    common.add_argument("--steps", type=nonneg_int, default=None, help="trace length (simulate)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="posg-ltl-synth",
                                description="Controller synthesis for temporal goals in partially observable games.")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", parents=[common], help="check a model file")
    v.add_argument("path", nargs="?", help="model JSON (alternative to --model)")
    sub.add_parser("product", parents=[common], help="build the product with the automaton")
    sub.add_parser("search", parents=[common], help="search controller structures")
    sub.add_parser("solve", parents=[common], help="max-min value iteration on a structure pair")
    sub.add_parser("improve", parents=[common], help="robust improvement and controller growth")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo success rates")
    r = sub.add_parser("reproduce", parents=[common], help="run a packaged experiment")
    r.add_argument("experiment", choices=("example1", "table1", "table2", "fig5"))
    pl = sub.add_parser("plot", parents=[common], help="render an experiment JSON as SVG")
    pl.add_argument("input", help="JSON written by reproduce")
    return p


# ---------------------------------------------------------------------------
# input loading (errors here are exit 1)


def read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None


def load_model(ref: str | None):
    from .experiments import example2_grid
    from .model import SchemaError, ValidationError, example1_grid, load_posg

    if not ref:
        raise InputError("--model is required")
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        if name not in BUILTIN_MODELS:
            raise InputError(f"unknown builtin model {name!r}; choose from {', '.join(BUILTIN_MODELS)}")
        return example1_grid() if name == "example1" else example2_grid()
    try:
        return load_posg(read_text(ref))
    except SchemaError as e:
        raise InputError(f"schema error: {e}") from None
    except ValidationError as e:
        raise InputError("model failed validation:\n  " + "\n  ".join(e.report)) from None


def load_automaton(args, model):
    from .logic import HoaError, LtlSyntaxError, UnsupportedFormula, import_hoa, ltl_to_dra, parse_ltl
    from .experiments import FORMULA

    try:
        if args.hoa:
            return import_hoa(read_text(args.hoa))
        return ltl_to_dra(parse_ltl(args.formula or FORMULA, ap=model.ap), ap=model.ap)
    except (LtlSyntaxError, UnsupportedFormula, HoaError) as e:
        raise InputError(str(e)) from None


def load_product(args):
    from .product import build_product

    model = load_model(args.model)
    dra = load_automaton(args, model)
    try:
        return build_product(model, dra)
    except ValueError as e:
        raise InputError(str(e)) from None


def load_fsc(path, obs, acts):
    from .model import SchemaError, ValidationError, fsc_from_dict

    try:
        return fsc_from_dict(json.loads(read_text(path)), obs, acts)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON: {e}") from None
    except (SchemaError, ValidationError, KeyError, ValueError) as e:
        raise InputError(f"{path}: {e}") from None


def single(values, name, default):
    if values is None:
        return default
    if len(values) != 1:
        raise InputError(f"--{name} takes a single size for this command")
    return values[0]


def start_masks(args, product, gd, ga):
    from .experiments import HarnessError, draw_trial
    from .model import full_mask

    if args.start == "ones":
        Od, Oa = product.Od.shape[1], product.Oa.shape[1]
        Ud, Ua = product.T.shape[1:3]
        return full_mask(gd, Od, Ud), full_mask(ga, Oa, Ua)
    try:
        ts = draw_trial(product, gd, ga, args.seed, 0)
    except HarnessError as e:
        raise InputError(str(e)) from None
    return ts.defender[-1], ts.adversary[-1]


def run_search(args, product, stats=None):
    from .structure import candidate_structures

    gd, ga = single(args.gd, "gd", 1), single(args.ga, "ga", 1)
    init_d, init_a = start_masks(args, product, gd, ga)
    return gd, ga, candidate_structures(product, gd, ga, init_d, init_a, stats)


def structure_from_args(args, product):
    """The structure pair named by ``--structures`` or the first one the search emits."""
    from .vi import Structures

    if args.structures:
        try:
            doc = json.loads(read_text(args.structures))
            cands = doc["candidates"]
            if args.index >= len(cands):
                raise InputError(f"--index {args.index} out of range ({len(cands)} candidates)")
            c = cands[args.index]
            return Structures(np.array(c["mask_d"], dtype=bool), np.array(c["mask_a"], dtype=bool))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise InputError(f"{args.structures}: not a search result ({e})") from None
    _, _, cands = run_search(args, product)
    if not cands:
        raise InputError("the structure search emitted nothing for these sizes; "
                         "try --start sampled or pass --structures")
    return Structures(cands[0].mask_d, cands[0].mask_a)


# ---------------------------------------------------------------------------
# commands (errors here are exit 2)


def cmd_validate(args):
    from .model import validate_posg

    ref = args.path or args.model
    model = load_model(ref)
    report = validate_posg(model)
    if report:
        raise InputError("model failed validation:\n  " + "\n  ".join(report))
    return {"valid": True, "states": model.num_states, "report": report}


def cmd_product(args):
    from .product import product_to_dict

    product = load_product(args)
    return {"product": product_to_dict(product), "num_states": product.num_states,
            "reachable": int(product.reachable.sum())}


def cmd_search(args):
    from .structure import SearchStats

    product = load_product(args)
    stats = SearchStats()
    gd, ga, cands = run_search(args, product, stats)
    return {"gd": gd, "ga": ga, "start": args.start,
            "stats": {"passes": stats.passes, "aborted": stats.aborted, "emitted": stats.emitted,
                      "skipped_no_good": stats.skipped_no_good, "duplicates": stats.duplicates},
            "candidates": [{"mask_d": c.mask_d.astype(int).tolist(), "mask_a": c.mask_a.astype(int).tolist(),
                            "witness": c.witness, "pair_index": c.pair_index, "component": c.component}
                           for c in cands]}


def _state_key(product, i, Gd, Ga):
    x, rest = divmod(i, Gd * Ga)
    gd, ga = divmod(rest, Ga)
    return f"{product.state_name(x)},{gd},{ga}"


def cmd_solve(args):
    from .vi import fixed_point_residual, termination_bound, value_iterate

    product = load_product(args)
    st = structure_from_args(args, product)
    variant = args.variant or "plain"
    res = value_iterate(product, st, eps=args.eps, variant=variant)
    keys = [_state_key(product, i, st.Gd, st.Ga) for i in range(len(res.V))]
    out = {"value": res.value, "sweeps": res.sweeps, "converged": res.converged,
           "monotone": res.monotone, "eps": res.eps, "variant": variant,
           "residual": fixed_point_residual(product, st, res),
           "V": dict(zip(keys, res.V.tolist())),
           "targets": [k for k, t in zip(keys, res.targets) if t],
           "strategy_d": dict(zip(keys, res.strat_d.tolist())),
           "strategy_a": dict(zip(keys, res.strat_a.tolist()))}
    if variant == "guarded" and res.vmin < 1:
        out["termination_bound"] = termination_bound(product.num_model_states, product.num_dra_states,
                                                     st.Gd, st.Ga, res.eps, res.vmin)
    return out


def cmd_improve(args):
    from .improve import bounded_policy_iteration
    from .model import fsc_to_dict

    product = load_product(args)
    st = structure_from_args(args, product)
    fsc_d, vi, report = bounded_policy_iteration(product, st, max_new=args.max_new, rounds=args.rounds,
                                                 eps=args.eps or 1e-6)
    return {"vi_values": report.vi_values, "fsc_values": report.fsc_values,
            "recovery_residual": report.recovery_residual,
            "rounds": [{"Gd": r["Gd"], "added": r["added"], "node_eps": r["eps_history"]}
                       for r in report.rounds],
            "fsc_d": fsc_to_dict(fsc_d)}


def cmd_simulate(args):
    from .experiments import synthesize_pair
    from .simulate import first_hits, simulate

    trials = args.trials or 100
    caps = sorted(args.caps)
    if args.fsc_d or args.fsc_a:
        if not (args.fsc_d and args.fsc_a):
            raise InputError("--fsc-d and --fsc-a go together")
        model = load_model(args.model)
        fd = load_fsc(args.fsc_d, model.obs_d, model.actions_d)
        fa = load_fsc(args.fsc_a, model.obs_a, model.actions_a)
        info = {}
    else:
        product = load_product(args)
        model = product.model
        st = structure_from_args(args, product)
        fd, fa, info = synthesize_pair(product, st.mask_d, st.mask_a, args.eps or 1e-4,
                                       args.variant or "guarded")
    for atom in ("tar", "obs"):
        if atom not in model.ap:
            raise InputError(f"simulate needs the atomic proposition {atom!r}")
    hits = first_hits(model, fd, fa, "tar", "obs", caps[-1], trials, args.seed)
    out = {"trials": trials, "caps": caps, "first_hit": hits,
           "successes": {str(c): sum(h is not None and h <= c for h in hits) for c in caps},
           "fraction": {str(c): sum(h is not None and h <= c for h in hits) / trials for c in caps},
           "synthesis": info}
    if args.steps is not None:
        out["trace"] = simulate(model, fd, fa, args.steps, args.seed).to_dict()
    return out


def cmd_reproduce(args):
    from . import experiments as E

    def progress(t):
        log.info("trial %d done", t + 1)

    name = args.experiment
    eps = args.eps or (1e-6 if name == "example1" else 1e-4)
    variant = args.variant or ("plain" if name == "example1" else "guarded")
    if name == "example1":
        return E.example1(eps=eps)
    if name == "table1":
        return E.table1(trials=args.trials or 100, gds=tuple(args.gd or (1, 2, 3, 4)),
                        gas=tuple(args.ga or (1, 2)), seed=args.seed, eps=eps, variant=variant,
                        progress=progress)
    if name == "table2":
        return E.table2(trials=args.trials or 100, gds=tuple(args.gd or (1, 2, 3, 4)), seed=args.seed,
                        eps=eps, variant=variant, progress=progress)
    return E.fig5(structures=args.trials or 20, caps=tuple(args.caps), gds=tuple(args.gd or (1, 2, 3, 4)),
                  gas=tuple(args.ga or (1, 2)), seed=args.seed, eps=eps, variant=variant, progress=progress)


def cmd_plot(args):
    from .plots import render

    try:
        doc = json.loads(read_text(args.input))
    except json.JSONDecodeError as e:
        raise InputError(f"{args.input}: invalid JSON: {e}") from None
    if not args.out:
        raise InputError("plot needs --out PATH.svg")
    try:
        render(doc, args.out)
    except KeyError as e:
        raise InputError(f"{args.input}: not an experiment document (missing {e})") from None
    return None


COMMANDS = {"validate": cmd_validate, "product": cmd_product, "search": cmd_search, "solve": cmd_solve,
            "improve": cmd_improve, "simulate": cmd_simulate, "reproduce": cmd_reproduce, "plot": cmd_plot}


def resolved_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "verbose"}
    return json.loads(json.dumps(cfg, default=str))


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; usage errors are invalid input here
        return 0 if e.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="posg-ltl-synth: %(message)s", stream=sys.stderr)
    cfg = resolved_config(args)
    log.info("config %s", json.dumps(cfg, sort_keys=True))
    start = time.perf_counter()
    try:
        result = COMMANDS[args.command](args)
    except InputError as e:
        print(f"posg-ltl-synth: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - anything else is ours
        print(f"posg-ltl-synth: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        if args.verbose or os.environ.get("POSG_LTL_SYNTH_TRACEBACK"):
            raise
        return 2
    if result is None:
        return 0
    log.info("finished in %.2fs", time.perf_counter() - start)
    # no timings in the document, so reruns are byte-identical
    doc = {"schema_version": SCHEMA_VERSION, "command": args.command, "config": cfg, **result}
    text = json.dumps(doc, indent=2, default=_jsonable)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
