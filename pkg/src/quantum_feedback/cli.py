"""Command-line entry point.

    quantum-feedback check SYSTEM.json
    quantum-feedback simulate PROTOCOL.json STATE.json [--target STATE.json] [--mode sample --n 1000]
    quantum-feedback examples [--alpha 0.6,0 --beta 0,0.8]
    quantum-feedback pulse [--omega W --omega-prime W2 --gamma G --amplitude A]

Reports are JSON on stdout (or ``--out``); a short summary goes to stderr.
Exit codes: 0 success, 1 check failed, 2 input error, 3 closure did not
stabilize, 4 trajectory cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from typing import Dict, List, Optional, Tuple

from . import __version__
from .errors import (
    BranchCapExceeded,
    ClosureNotConverged,
    DimensionError,
    ProtocolError,
    ValidationError,
)
from .lie import DEFAULT_TOL, ControlSystem, all_verdicts
from .protocols import BRANCH_CAP, protocol_from_json, run_enumerate, run_sampled
from .pulse import STEP_TOL, TARGET_FIDELITY, SpinPairParams, amplitude_sweep, validate_selective_pulse
from .states import RNG_NAME, QuantumState, fidelity
from .worked_examples import FIDELITY_TOL, reproduce_all

SCHEMA_VERSION = "1.0"

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_CAP = 0, 1, 2, 3, 4

DEFAULT_TOLS = {
    "closure": DEFAULT_TOL,
    "fidelity": FIDELITY_TOL,
    "step": STEP_TOL,
}

SWEEP_RATIOS = (1.0, 0.5, 0.25, 0.1, 0.025)


class InputError(Exception):
    pass


def _split_tol_flags(argv: List[str]) -> Tuple[List[str], Dict[str, float]]:
    """Pull ``--tol.<name> VALUE`` / ``--tol.<name>=VALUE`` out of argv."""
    rest, tols = [], {}
    it = iter(argv)
    for tok in it:
        if not tok.startswith("--tol."):
            rest.append(tok)
            continue
        name, eq, value = tok[len("--tol."):].partition("=")
        if not eq:
            value = next(it, None)
            if value is None:
                raise InputError(f"missing value for {tok}")
        if name not in DEFAULT_TOLS:
            raise InputError(f"unknown tolerance '{name}' (known: {', '.join(sorted(DEFAULT_TOLS))})")
        try:
            tols[name] = float(value)
        except ValueError:
            raise InputError(f"tolerance {name} must be a number, got {value!r}") from None
    return rest, tols


def _complex_arg(text: str) -> complex:
    parts = text.split(",")
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected 're' or 're,im', got {text!r}")


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _header(command: str, args, tols: Dict[str, float]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": command,
        "seed": args.seed,
        "generator": RNG_NAME,
        "tolerances": dict(sorted(tols.items())),
    }


def cmd_check(args, tols) -> Tuple[dict, int]:
    obj = _load_json(args.system)
    try:
        system = ControlSystem.from_json(obj)
    except (ValidationError, DimensionError) as exc:
        raise InputError(f"{args.system}: {exc}") from None
    verdicts = all_verdicts(system, tols["closure"], args.max_generations)
    report = _header("check", args, tols)
    report["system"] = {"dim": system.dim, "n_controls": len(system.controls),
                        "n_measurements": len(system.measurements), "n_couplings": len(system.couplings)}
    report["verdicts"] = [v.to_json() for v in verdicts]
    for v in verdicts:
        print(f"{v.kind:28s} {'yes' if v.answer else 'no ':4s} dim {v.closure.dim_found}/{v.closure.target_dim}"
              + (f"  ({'; '.join(v.reasons)})" if v.reasons else ""), file=sys.stderr)
    return report, EXIT_OK


def _trajectory_json(t, target: Optional[QuantumState]) -> dict:
    out = {
        "records": {k: {"eigenvalue": e, "outcome": i} for k, (e, i) in sorted(t.records.items())},
        "probability": t.probability,
        "seed_info": t.seed_info,
        "final_state": t.final_state.to_json(),
    }
    if target is not None:
        out["fidelity_to_target"] = fidelity(t.final_state, target)
    return out


def cmd_simulate(args, tols) -> Tuple[dict, int]:
    try:
        protocol = protocol_from_json(_load_json(args.protocol))
        state = QuantumState.from_json(_load_json(args.state))
        target = QuantumState.from_json(_load_json(args.target)) if args.target else None
    except (ValidationError, DimensionError, ProtocolError) as exc:
        raise InputError(str(exc)) from None
    if state.space.factor_dims != protocol.space.factor_dims:
        raise InputError(
            f"state dims {list(state.space.factor_dims)} do not match protocol dims {list(protocol.space.factor_dims)}"
        )
    if target is not None and target.space.factor_dims != protocol.space.factor_dims:
        raise InputError("target state dims do not match the protocol")
    if args.mode == "enumerate":
        trajs = run_enumerate(state, protocol, args.branch_cap)
    else:
        if args.n < 1:
            raise InputError("--n must be >= 1 in sample mode")
        trajs = run_sampled(state, protocol, args.seed, args.n)
    report = _header("simulate", args, tols)
    report.update(protocol=protocol.label, mode=args.mode, n_trajectories=len(trajs))
    report["trajectories"] = [_trajectory_json(t, target) for t in trajs]
    print(f"{protocol.label or 'protocol'}: {len(trajs)} trajectories ({args.mode})", file=sys.stderr)
    return report, EXIT_OK


def cmd_examples(args, tols) -> Tuple[dict, int]:
    results = reproduce_all(args.alpha, args.beta, tols["fidelity"])
    report = _header("examples", args, tols)
    report.update(alpha=[args.alpha.real, args.alpha.imag], beta=[args.beta.real, args.beta.imag])
    report["examples"] = results
    n_pass = sum(r["passed"] for r in results)
    for r in results:
        print(f"{r['name']:24s} {'PASS' if r['passed'] else 'FAIL'}", file=sys.stderr)
    print(f"{n_pass}/{len(results)} PASS", file=sys.stderr)
    return report, EXIT_OK if n_pass == len(results) else EXIT_FAIL


def cmd_pulse(args, tols) -> Tuple[dict, int]:
    try:
        params = SpinPairParams(args.omega, args.omega_prime, args.gamma)
    except ValidationError as exc:
        raise InputError(str(exc)) from None
    if not args.amplitude > 0:
        raise InputError("--amplitude must be positive")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        main_run = validate_selective_pulse(params, args.amplitude)
    sweep = [] if args.no_sweep else amplitude_sweep(params, SWEEP_RATIOS)
    report = _header("pulse", args, tols)
    report["validation"] = main_run.to_json()
    report["sweep"] = [
        {"amplitude_over_gamma": r, "fidelity": v.fidelity, "worst_case_fidelity": v.worst_case_fidelity}
        for r, v in zip(SWEEP_RATIOS, sweep)
    ]
    best = max([main_run.fidelity] + [v.fidelity for v in sweep])
    report["best_fidelity"] = best
    print(f"selective pi-pulse fidelity {main_run.fidelity:.8f} (best {best:.8f})", file=sys.stderr)
    for w in main_run.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return report, EXIT_OK if best >= TARGET_FIDELITY else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (recorded in every report)")
    common.add_argument("--out", help="write the JSON report here instead of stdout")

    parser = argparse.ArgumentParser(
        prog="quantum-feedback",
        description="Controllability verdicts and exact simulation of semiclassical and coherent quantum feedback.",
        epilog="Tolerances can be overridden with --tol.<name> VALUE, names: " + ", ".join(sorted(DEFAULT_TOLS)),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="all five controllability/observability verdicts")
    p.add_argument("system", help="control-system JSON file")
    p.add_argument("--max-generations", type=int, default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", parents=[common], help="run a protocol on a state")
    p.add_argument("protocol")
    p.add_argument("state")
    p.add_argument("--target", help="state file to report fidelity against")
    p.add_argument("--mode", choices=("enumerate", "sample"), default="enumerate")
    p.add_argument("--n", type=int, default=1000, help="trajectories in sample mode")
    p.add_argument("--branch-cap", type=int, default=BRANCH_CAP)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("examples", parents=[common], help="reproduce the three spin-control examples")
    p.add_argument("--alpha", type=_complex_arg, default=complex(0.6), metavar="RE[,IM]")
    p.add_argument("--beta", type=_complex_arg, default=complex(0.8), metavar="RE[,IM]")
    p.set_defaults(func=cmd_examples)

    p = sub.add_parser("pulse", parents=[common], help="validate the selective conditional-flip pulse")
    two_pi = 2 * math.pi
    p.add_argument("--omega", type=float, default=two_pi * 500, help="spin-1 resonance, rad/s")
    p.add_argument("--omega-prime", type=float, default=two_pi * 300, help="spin-2 resonance, rad/s")
    p.add_argument("--gamma", type=float, default=two_pi * 20, help="scalar coupling, rad/s")
    p.add_argument("--amplitude", type=float, default=two_pi * 0.5, help="drive amplitude, rad/s")
    p.add_argument("--no-sweep", action="store_true", help="skip the amplitude sweep")
    p.set_defaults(func=cmd_pulse)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv, overrides = _split_tol_flags(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    tols = {**DEFAULT_TOLS, **overrides}
    try:
        report, code = args.func(args, tols)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ClosureNotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except BranchCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
