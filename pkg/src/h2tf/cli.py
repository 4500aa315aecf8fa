"""Command-line interface: ``h2tf {reduce,sweep,impulse,check,generate}``."""

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

from .conditions import optimality_residuals
from .exceptions import H2tfError
from .fhirka import OptimizerConfig, fhirka_run
from .metrics import error_sq
from .system import modal_decompose
from .bench.io import emit_csv, load_model, save_model
from .bench.models import generate_heat_like, generate_unstable_toy
from .bench.sweep import SWEEP_METHODS, SweepSpec, impulse_error_trace, run_sweep

logger = logging.getLogger("h2tf")


def parse_orders(text):
    """``"a:b:c"`` (inclusive of ``b``), ``"a:b"`` or a comma list ``"2,4,6"``."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step <= 0 or stop < start:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid order list {text!r}; use a:b:c or a,b,c") from None


def _methods(text):
    methods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in SWEEP_METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"methods must be drawn from {','.join(SWEEP_METHODS)}")
    return methods


def _positive(kind):
    def conv(text):
        val = kind(text)
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val

    return conv


def _add_optimizer_args(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--grad-tol", type=_positive(float), default=1e-8)


def _config(args, init):
    return OptimizerConfig(max_iters=args.max_iters, grad_tol=args.grad_tol, init_source=init, seed=args.seed)


def build_parser():
    parser = argparse.ArgumentParser(prog="h2tf", description="Finite-horizon H2 model reduction.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="reduce one model to one order")
    p.add_argument("--model", required=True, help="model manifest (JSON)")
    p.add_argument("-r", "--order", type=int, required=True)
    p.add_argument("--tf", type=_positive(float), default=1.0)
    p.add_argument("--init", choices=("auto",) + SWEEP_METHODS + ("file",), default="auto")
    p.add_argument("--init-model", help="manifest of the initial reduced model (with --init file)")
    p.add_argument("--out", help="manifest path for the reduced model")
    _add_optimizer_args(p)

    p = sub.add_parser("sweep", help="baseline vs FHIRKA errors over a range of orders")
    p.add_argument("--model", required=True)
    p.add_argument("--orders", type=parse_orders, required=True)
    p.add_argument("--tf", type=_positive(float), default=1.0)
    p.add_argument("--init", type=_methods, default=list(SWEEP_METHODS), help="comma list of pod,tlbt,random")
    p.add_argument("--jobs", type=_positive(int), default=1)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--strict", action="store_true", help="exit 1 if any row failed")
    _add_optimizer_args(p)

    p = sub.add_parser("impulse", help="impulse responses and pointwise error as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--reduced", required=True, help="manifest of the reduced model")
    p.add_argument("--tf", type=_positive(float), default=1.0)
    p.add_argument("--dt", type=_positive(float), default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("check", help="finite-horizon optimality residuals of a reduced model")
    p.add_argument("--model", required=True)
    p.add_argument("--reduced", required=True)
    p.add_argument("--tf", type=_positive(float), default=1.0)
    p.add_argument("--strict", action="store_true", help="exit 1 unless the certificate holds")

    p = sub.add_parser("generate", help="write a synthetic benchmark model")
    p.add_argument("kind", choices=("heat", "unstable"))
    p.add_argument("--n", type=int, default=197, help="heat model order")
    p.add_argument("--n-stable", type=int, default=400)
    p.add_argument("--n-unstable", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def _cmd_reduce(args):
    bundle = load_model(args.model)
    init_model = None
    if args.init == "file":
        if not args.init_model:
            raise SystemExit("--init file requires --init-model")
        init_model = load_model(args.init_model).model
    res = fhirka_run(bundle.model, args.order, _config(args, args.init), args.tf, init_model=init_model)
    summary = {
        "model": bundle.name,
        "r": args.order,
        "init": res.init_source,
        "init_error": math.sqrt(res.init_J),
        "final_error": res.error,
        "iterations": res.iterations,
        "converged": res.converged,
        "reason": res.reason,
        "max_value_residual": res.residuals.max_value,
        "max_hermite_residual": res.residuals.max_hermite,
    }
    if args.out:
        out = Path(args.out)
        name = out.stem if out.suffix == ".json" else f"{bundle.name}_r{args.order}"
        directory = out.parent if out.suffix == ".json" else out
        summary["manifest"] = str(save_model(directory, res.realization, name, provenance={
            "reduced_from": bundle.name, "r": args.order, "tf": args.tf, "init": res.init_source,
        }))
    _emit(summary)
    return 0


def _cmd_sweep(args):
    bundle = load_model(args.model)
    spec = SweepSpec(
        orders=args.orders,
        tf=args.tf,
        methods=tuple(args.init),
        config=_config(args, "auto"),
        out=args.out,
        seed=args.seed,
        n_jobs=args.jobs,
    )
    table = run_sweep(bundle, spec)
    emit_csv(table, args.out)
    failed = table.failed
    for row in failed:
        logger.warning("r=%d %s %s: %s", row.r, row.method, row.status, row.message)
    print(f"{len(table)} rows written to {args.out} ({len(failed)} failed)")
    return 1 if args.strict and failed else 0


def _cmd_impulse(args):
    full = load_model(args.model).model
    red = load_model(args.reduced).model
    trace = impulse_error_trace(full, red, args.tf, args.dt)
    emit_csv(trace, args.out)
    print(f"{trace.t.size} samples written to {args.out}")
    return 0


def _cmd_check(args):
    full = modal_decompose(load_model(args.model).model)
    red = modal_decompose(load_model(args.reduced).model)
    res = optimality_residuals(full, red, args.tf)
    ok = res.is_stationary()
    _emit({
        "error": math.sqrt(error_sq(full, red, args.tf)),
        "poles": [[z.real, z.imag] for z in red.poles],
        "value_residual": res.max_value,
        "hermite_residual": res.max_hermite,
        "stationary": ok,
    })
    return 1 if args.strict and not ok else 0


def _cmd_generate(args):
    if args.kind == "heat":
        bundle = generate_heat_like(args.n)
    else:
        bundle = generate_unstable_toy(args.n_stable, args.n_unstable, args.seed)
    name = args.name or bundle.name.replace("+", "p")
    path = save_model(args.out, bundle.model, name, provenance=bundle.provenance)
    print(path)
    return 0


COMMANDS = {
    "reduce": _cmd_reduce,
    "sweep": _cmd_sweep,
    "impulse": _cmd_impulse,
    "check": _cmd_check,
    "generate": _cmd_generate,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        return COMMANDS[args.command](args)
    except (H2tfError, OSError, ValueError) as exc:
        print(f"h2tf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
