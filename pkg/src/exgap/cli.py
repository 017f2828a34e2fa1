"""Command-line interface.

Exit codes: 0 all checks pass, 1 a verification failed, 2 usage or model
error, 3 the state-count cap was exceeded.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import montecarlo, particles
from .certify import structural_checks
from .errors import ExgapError, InvalidModel, ParseError, TooLarge, UnsupportedFamily
from .kernels import aldous_criterion, gamma as gamma_report, gamma_closed_form
from .model import ModelSpec, load_model, model_hash, validate
from .report import ReportEnvelope, now_utc
from .spectral import gap_rw, spectrum, verify_bounds

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _pair_label(spec, pair):
    return [spec.graph.labels[pair[0]], spec.graph.labels[pair[1]]]


def _require_valid(spec: ModelSpec):
    rep = validate(spec)
    if not rep.ok:
        raise InvalidModel(f"model assumptions fail: {rep.to_dict()}")
    return rep


def gamma_payload(spec: ModelSpec):
    rep = _require_valid(spec)
    g = gamma_report(spec)
    labels = spec.graph.labels
    holds, margin = aldous_criterion(spec)
    margins = {f"{labels[x]}->{labels[y]}": margin[x, y]
               for x in range(spec.n) for y in range(spec.n)
               if x != y and not math.isnan(margin[x, y])}
    payload = {
        "validation": rep.to_dict(),
        "family": spec.family,
        "pi": dict(zip(labels, g.pi)),
        "gamma": g.gamma,
        "argmin_edge": _pair_label(spec, g.argmin),
        "edges": g.edge_table(labels),
        "aldous": {"holds": holds, "margin": margins},
    }
    code = EXIT_OK
    try:
        cf = gamma_closed_form(spec)
        agrees = abs(cf - g.gamma) <= 1e-12 * abs(cf)
        payload["closed_form"] = {"gamma": cf, "agrees": agrees}
        if not agrees:
            code = EXIT_FAIL
    except UnsupportedFamily:
        pass
    return payload, code, g


def _levels_payload(sp):
    return {str(k): v for k, v in sp.levels.items()}


def spectrum_payload(spec: ModelSpec, kmax: int, hier, g, threads=None):
    sp = spectrum(spec, kmax, hier, g, threads)
    payload = {
        "kmax": kmax,
        "gap_rw": sp.gap_rw,
        "eigenvalues": _levels_payload(sp),
        "new_eigenvalues": {str(k): v for k, v in sp.new.items()},
        "gap_per_level": {str(k): sp.gap_level(k) for k in sp.levels},
        "gap_upto": sp.gap_upto,
        "gap_upto_kind": "upper approximation of the full gap (levels 1..kmax only)",
        "zero_tolerance": {str(k): v for k, v in sp.zero_tolerance.items()},
    }
    if spec.reversible:
        payload["certified_lower_bound"] = min(1.0, g.gamma) * sp.gap_rw
    return payload, sp


def verify_payload(spec: ModelSpec, kmax: int, hier, g, sp):
    bounds = verify_bounds(spec, kmax, sp, g)
    structural = structural_checks(spec, kmax, hier, g, sp)
    checks = bounds.checks + structural
    ok = all(c.passed for c in checks)
    payload = {
        "gamma": bounds.gamma,
        "gap_rw": bounds.gap_rw,
        "gamma_gap_rw": bounds.gamma * bounds.gap_rw,
        "checks": [c.to_dict() for c in checks],
        "passed": ok,
    }
    return payload, (EXIT_OK if ok else EXIT_FAIL)


def _dump(spec, hier, kmax, target):
    target = Path(target)
    for k in range(1, kmax + 1):
        path = target.with_name(f"{target.stem}_k{k}.csv")
        particles.dump_generator(hier.generator(k), path, spec.graph.labels)


def _verification_error(exc):
    return {"error": type(exc).__name__, "message": str(exc)}, EXIT_FAIL


def cmd_gamma(spec, args):
    payload, code, _ = gamma_payload(spec)
    return payload, code


def cmd_spectrum(spec, args):
    hier = particles.Hierarchy(spec, args.cap)
    hier.check_size(args.kmax)
    _require_valid(spec)
    g = gamma_report(spec, hier.oracle)
    try:
        payload, _ = spectrum_payload(spec, args.kmax, hier, g, args.threads)
    except (TooLarge, InvalidModel, ParseError):
        raise
    except ExgapError as exc:
        return _verification_error(exc)
    if args.dump_generator:
        _dump(spec, hier, args.kmax, args.dump_generator)
    return payload, EXIT_OK


def cmd_verify(spec, args):
    hier = particles.Hierarchy(spec, args.cap)
    hier.check_size(args.kmax)
    _require_valid(spec)
    g = gamma_report(spec, hier.oracle)
    try:
        _, sp = spectrum_payload(spec, args.kmax, hier, g, args.threads)
        payload, code = verify_payload(spec, args.kmax, hier, g, sp)
    except (TooLarge, InvalidModel, ParseError):
        raise
    except ExgapError as exc:
        return _verification_error(exc)
    if args.dump_generator:
        _dump(spec, hier, args.kmax, args.dump_generator)
    return payload, code


def cmd_report(spec, args):
    gpay, gcode, g = gamma_payload(spec)
    hier = particles.Hierarchy(spec, args.cap)
    hier.check_size(args.kmax)
    try:
        spay, sp = spectrum_payload(spec, args.kmax, hier, g, args.threads)
        vpay, vcode = verify_payload(spec, args.kmax, hier, g, sp)
    except (TooLarge, InvalidModel, ParseError):
        raise
    except ExgapError as exc:
        err, code = _verification_error(exc)
        return {"gamma": gpay, "error": err}, max(gcode, code)
    if args.dump_generator:
        _dump(spec, hier, args.kmax, args.dump_generator)
    return {"gamma": gpay, "spectrum": spay, "verify": vpay}, max(gcode, vcode)


def _initial_state(spec, args):
    n = spec.n
    if args.process == "theta":
        if args.theta0:
            vals = [float(s) for s in args.theta0.split(",")]
            if len(vals) != n or any(not 0 <= v <= 1 for v in vals):
                raise UsageError(f"--theta0 needs {n} values in [0, 1]")
            return np.array(vals)
        th = np.zeros(n)
        th[0] = 1.0
        return th
    if args.eta0:
        vals = np.array([float(s) for s in args.eta0.split(",")])
        if len(vals) != n or np.any(vals < 0) or not math.isclose(vals.sum(), 1.0, abs_tol=1e-12):
            raise UsageError(f"--eta0 needs {n} nonnegative values summing to 1")
        return vals
    # stationary start, on a stream separate from the simulation blocks
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(args.seed, spawn_key=(2 ** 32 - 1,))))
    return montecarlo.dirichlet_sample(spec.alpha, rng, args.replicas)


def cmd_simulate(spec, args):
    if args.replicas < 1:
        raise UsageError("--replicas must be positive")
    if not args.tmax > 0:
        raise UsageError("--tmax must be positive")
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    if not 0 < args.eps < 1:
        raise UsageError("--eps must lie in (0, 1)")
    _require_valid(spec)
    g = gamma_report(spec)
    gap = gap_rw(spec, g)
    x0 = _initial_state(spec, args)
    times = np.linspace(0.0, args.tmax, args.samples)
    policy = montecarlo.TruncationPolicy(args.eps)
    traj = montecarlo.simulate(spec, args.process, x0, times, args.replicas, args.seed,
                               policy, args.threads)
    vals = traj.observable(args.observable, g.pi)
    if vals.ndim == 2:
        vals = vals[..., None]
    names = traj.observable_names(args.observable, spec.graph.labels)
    se = (vals.std(axis=0, ddof=1) / math.sqrt(traj.replicas) if traj.replicas > 1
          else np.full(vals.shape[1:], np.nan))
    payload = {
        "process": args.process, "observable": args.observable, "replicas": traj.replicas,
        "seed": args.seed, "eps": args.eps, "events": traj.events,
        "event_rate": traj.meta["event_rate"], "times": times,
        "columns": names, "mean": vals.mean(axis=0), "stderr": se,
    }
    code = EXIT_OK
    if args.process == "theta" and args.observable == "var_pi":
        bound = g.gamma * gap
        window = min(args.tmax, 3.0 / bound)
        try:
            rate, err = montecarlo.estimate_decay(vals[..., 0], times, window, seed=args.seed)
            ok = rate >= bound - 3 * err
            payload["decay"] = {"rate": rate, "stderr": err, "window": window,
                                "gamma_gap_rw": bound, "bound_holds": ok}
            code = EXIT_OK if ok else EXIT_FAIL
        except ExgapError as exc:
            payload["decay"] = {"error": type(exc).__name__, "message": str(exc)}
    if args.output_csv:
        montecarlo.export_csv(traj, args.output_csv, args.observable, spec.graph.labels, g.pi)
    return payload, code


COMMANDS = {
    "gamma": cmd_gamma,
    "spectrum": cmd_spectrum,
    "verify": cmd_verify,
    "report": cmd_report,
    "simulate": cmd_simulate,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="exgap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, levels=True):
        sp.add_argument("model", help="model JSON file")
        sp.add_argument("-o", "--output", help="write the JSON report here instead of stdout")
        sp.add_argument("--threads", type=int, default=1, help="worker thread cap")
        sp.add_argument("--timestamp", action="store_true",
                        help="record the wall-clock time in the report")
        if levels:
            sp.add_argument("--kmax", type=int, default=3, help="highest particle level")
            sp.add_argument("--cap", type=int, default=None,
                            help="state-count cap (default 20000 or $EXGAP_CAP)")
            sp.add_argument("--dump-generator", metavar="CSV",
                            help="write L_k as i,j,rate rows to CSV_k<k>.csv")

    common(sub.add_parser("gamma", help="kinetic factor and Aldous criterion"), levels=False)
    common(sub.add_parser("spectrum", help="k-particle spectra up to kmax"))
    common(sub.add_parser("verify", help="check all bounds and identities"))
    common(sub.add_parser("report", help="gamma + spectrum + verify"))
    sim = sub.add_parser("simulate", help="Monte Carlo of the eta or theta dynamics")
    common(sim, levels=False)
    sim.add_argument("--tmax", type=float, required=True)
    sim.add_argument("--replicas", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--eps", type=float, default=1e-4, help="harmonic-process truncation")
    sim.add_argument("--samples", type=int, default=41, help="number of sample times")
    sim.add_argument("--process", choices=("eta", "theta"), default="theta")
    sim.add_argument("--observable", choices=("var_pi", "moments"), default="var_pi")
    sim.add_argument("--theta0", help="comma-separated initial theta (default: first vertex 1)")
    sim.add_argument("--eta0", help="comma-separated initial eta (default: Dirichlet draws)")
    sim.add_argument("--output-csv", help="trajectory CSV path")
    return p


def run(argv=None) -> tuple[int, ReportEnvelope | None]:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"exgap: {exc}", file=sys.stderr)
        return EXIT_USAGE, None
    if getattr(args, "kmax", 1) < 1 or (args.threads is not None and args.threads < 1):
        print("exgap: --kmax and --threads must be positive", file=sys.stderr)
        return EXIT_USAGE, None
    mhash = None
    try:
        spec = load_model(args.model)
        mhash = model_hash(spec)
        payload, code = COMMANDS[args.command](spec, args)
    except TooLarge as exc:
        payload, code = {"error": "TooLarge", "message": str(exc)}, EXIT_CAP
    except (ParseError, InvalidModel, UnsupportedFamily, UsageError, ValueError) as exc:
        payload, code = {"error": type(exc).__name__, "message": str(exc)}, EXIT_USAGE
    except ExgapError as exc:
        payload, code = {"error": type(exc).__name__, "message": str(exc)}, EXIT_FAIL
    env = ReportEnvelope(args.command, mhash, payload, code,
                         now_utc() if args.timestamp else None)
    text = env.to_json()
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    err = payload.get("error")
    if isinstance(err, dict):
        err, msg = err["error"], err["message"]
    else:
        msg = payload.get("message")
    if err:
        print(f"exgap: {err}: {msg}", file=sys.stderr)
    return code, env


def main(argv=None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
