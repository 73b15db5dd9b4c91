"""Command-line interface: ``filcert <subcommand> ...``.

Exit codes: 0 certified / ran clean, 1 refuted / check failed,
2 inconclusive / nothing found, 3 usage or model error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from typing import List, Optional, Sequence

import numpy as np

from ._kernels import KernelError
from .certify import (
    CERTIFIED,
    INCONCLUSIVE,
    CertificationError,
    Domain,
    certify,
    planar_no_limit_cycle,
    search_metric,
)
from .measures import Metric, MetricError
from .registry import example_names, get_example, is_builtin
from .reports import dumps, report, write_json
from .sim import (
    SimOptions,
    SimulationError,
    decay_study,
    entrainment_study,
    epsilon_sweep,
    integrate_filippov,
    integrate_regularized,
    write_events_csv,
    write_trajectory_csv,
)
from .system import ModelError, PWASystem, RelaySystem, load_system, system_to_dict

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- argument helpers ------------------------------------------------------------------


def _floats(text: str, what: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _span(text: str) -> tuple:
    bits = text.split(":")
    if len(bits) != 2:
        raise UsageError(f"--tspan: expected t0:t1, got {text!r}")
    try:
        t0, t1 = float(bits[0]), float(bits[1])
    except ValueError:
        raise UsageError(f"--tspan: expected numbers, got {text!r}") from None
    if not t1 > t0:
        raise UsageError("--tspan: t1 must exceed t0")
    return t0, t1


def _load(name: str):
    if is_builtin(name):
        return get_example(name).build(), get_example(name)
    if not os.path.exists(name):
        raise UsageError(f"system {name!r} is neither a built-in ({', '.join(example_names())}) nor a file")
    return load_system(name), None


def _read_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"{what}: cannot read {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what}: {path!r} is not valid JSON: {exc}") from None


def _metric(family: str, weight_file: Optional[str]) -> Metric:
    if weight_file is None:
        return Metric(family)
    data = _read_json(weight_file, "--weight")
    fam = Metric(family).family
    if isinstance(data, dict):
        if "Q" in data:
            return Metric(fam, np.array(data["Q"], dtype=float))
        if "P" in data:
            return Metric.from_P(np.array(data["P"], dtype=float))
        if "D" in data:
            return Metric.diagonal(fam, data["D"])
        raise UsageError("--weight: JSON object needs a 'D', 'P' or 'Q' field")
    arr = np.array(data, dtype=float)
    if fam == "l2":
        if arr.ndim != 2:
            raise UsageError("--weight: l2 expects a square matrix P")
        return Metric.from_P(arr)
    if arr.ndim == 2:
        if np.any(arr - np.diag(np.diag(arr))):
            raise UsageError("--weight: l1/linf weights must be diagonal")
        arr = np.diag(arr)
    return Metric.diagonal(fam, arr)


def _outdir(path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    os.makedirs(path, exist_ok=True)
    return path


def _opts(args) -> SimOptions:
    return SimOptions(h=args.h, stride=args.stride)


def _vector(args_value: Optional[str], default, what: str, n: int) -> List[float]:
    if args_value is None:
        if not default:
            raise UsageError(f"{what} is required for this system")
        return list(default)
    v = _floats(args_value, what)
    if len(v) != n:
        raise UsageError(f"{what}: expected {n} values, got {len(v)}")
    return v


def _dim(system) -> int:
    return system.n


def _input(args, ex):
    if getattr(args, "input", None):
        return args.input
    return None


def _say(msg: str = "") -> None:
    print(msg)


# -- subcommands ---------------------------------------------------------------------------


def cmd_certify(args) -> int:
    system, ex = _load(args.system)
    metric = _metric(args.metric, args.weight)
    box = args.box or (ex.box if ex else None)
    domain = Domain.parse(box, args.samples) if box else None
    if domain is None and not isinstance(system, (PWASystem, RelaySystem)):
        raise UsageError("--box is required for a general Filippov system")
    cert = certify(system, metric, domain)
    body = cert.to_dict()
    if isinstance(system, RelaySystem) and system.n == 2:
        nlc = planar_no_limit_cycle(system)
        body["no_limit_cycle"] = {"holds": nlc.holds, "trace": nlc.trace, "cb": nlc.cb, "reason": nlc.reason}
    doc = report("certificate", args.system, body)
    out = _outdir(args.out)
    if out:
        write_json(doc, os.path.join(out, "certificate.json"))
    _say(f"system {args.system}: {cert.kind} certificate, metric {metric.family}")
    for cond in cert.conditions:
        status = {True: "pass", False: "FAIL", None: "n/a"}[cond.passed]
        where = f" at {cond.witness}" if cond.witness is not None and cond.passed is False else ""
        _say(f"  {cond.name:<11} value={cond.value!r} threshold={cond.threshold:g} {status}{where}")
    _say(f"  rates: c1={cert.c1!r} c2={cert.c2!r} c={cert.c!r} K={cert.K:g}")
    if "no_limit_cycle" in body:
        _say(f"  planar no-limit-cycle: {body['no_limit_cycle']['holds']} ({body['no_limit_cycle']['reason']})")
    _say(f"verdict: {cert.verdict}")
    if cert.verdict == CERTIFIED:
        return EXIT_OK
    return EXIT_INCONCLUSIVE if cert.verdict == INCONCLUSIVE else EXIT_FAIL


def cmd_simulate(args) -> int:
    system, ex = _load(args.system)
    x0 = _vector(args.x0, ex.x0 if ex else None, "--x0", _dim(system))
    span = _span(args.tspan)
    opts = _opts(args)
    inp = _input(args, ex)
    if args.eps is not None:
        traj = integrate_regularized(system, args.phi, args.eps, x0, span, inp, opts)
        method = "regularized"
    else:
        traj = integrate_filippov(system, x0, span, inp, opts)
        method = "filippov"
    files = {}
    out = _outdir(args.out)
    if out:
        files = {"trajectory": "trajectory.csv", "events": "events.csv", "summary": "simulation.json"}
        write_trajectory_csv(traj, os.path.join(out, files["trajectory"]))
        write_events_csv(traj, os.path.join(out, files["events"]))
    doc = report(
        "simulation",
        args.system,
        {
            "method": method,
            "x0": x0,
            "t_span": list(span),
            "h": opts.h,
            "eps": args.eps,
            "phi": args.phi if args.eps is not None else None,
            "samples": int(traj.t.size),
            "steps": traj.steps,
            "events": len(traj.events),
            "final_state": traj.final.tolist(),
            "files": files,
        },
    )
    if out:
        write_json(doc, os.path.join(out, files["summary"]))
    _say(f"{method} run of {args.system}: {traj.t.size} samples, {len(traj.events)} events")
    _say(f"final state at t={float(traj.t[-1])!r}: {traj.final.tolist()}")
    return EXIT_OK


def cmd_decay(args) -> int:
    system, ex = _load(args.system)
    n = _dim(system)
    x0 = _vector(args.x0, ex.x0 if ex else None, "--x0", n)
    y0 = _vector(args.y0, ex.y0 if ex else None, "--y0", n)
    rate = args.rate if args.rate is not None else (ex.rate if ex else None)
    if rate is None:
        raise UsageError("--rate is required for this system")
    metric = _metric(args.metric, args.weight)
    rep = decay_study(system, x0, y0, metric, rate, args.K, _span(args.tspan), _opts(args), _input(args, ex))
    files = {}
    out = _outdir(args.out)
    if out:
        files = {"table": "decay.csv", "summary": "decay.json"}
        with open(os.path.join(out, files["table"]), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "distance", "envelope", "ratio"])
            for t, d, e, r in zip(rep.times, rep.distances, rep.envelope, rep.ratios):
                w.writerow([repr(float(t)), repr(float(d)), repr(float(e)), repr(float(r))])
    doc = report("decay", args.system, {**rep.summary(), "x0": x0, "y0": y0, "files": files})
    if out:
        write_json(doc, os.path.join(out, files["summary"]))
    ok = rep.max_ratio <= 1.0 + args.tolerance
    _say(f"decay of {args.system}: c={rate:g} K={args.K:g} metric={metric.family}")
    _say(f"  max distance/envelope = {rep.max_ratio!r} at t={rep.t_max_ratio!r}")
    _say(f"  envelope {'respected' if ok else 'VIOLATED'} (tolerance {args.tolerance:g})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(args) -> int:
    system, ex = _load(args.system)
    x0 = _vector(args.x0, ex.x0 if ex else None, "--x0", _dim(system))
    eps_list = _floats(args.eps_list, "--eps-list")
    metric = _metric(args.metric, None)
    rep = epsilon_sweep(system, args.phi, eps_list, x0, _span(args.tspan), _opts(args), metric, _input(args, ex))
    files = {}
    out = _outdir(args.out)
    if out:
        files = {"table": "sweep.csv", "summary": "sweep.json"}
        with open(os.path.join(out, files["table"]), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps", "sup_error", "ratio"])
            for r in rep.rows:
                w.writerow([repr(r.eps), repr(r.sup_error), repr(r.ratio)])
    doc = report("sweep", args.system, {**rep.summary(), "x0": x0, "files": files})
    if out:
        write_json(doc, os.path.join(out, files["summary"]))
    _say(f"eps sweep of {args.system} ({rep.phi}):")
    for r in rep.rows:
        _say(f"  eps={r.eps:<8g} sup error={r.sup_error:.6e} error/eps={r.ratio:.4f}")
    _say(f"  ratios within 3x of median: {rep.within_band}")
    return EXIT_OK if rep.within_band else EXIT_FAIL


def cmd_entrain(args) -> int:
    system, ex = _load(args.system)
    n = _dim(system)
    if args.ics:
        ics = _read_json(args.ics, "--ics")
        if not isinstance(ics, list) or not all(isinstance(v, list) and len(v) == n for v in ics):
            raise UsageError(f"--ics: expected a JSON list of length-{n} lists")
    elif ex and ex.ics:
        ics = [list(v) for v in ex.ics]
    else:
        raise UsageError("--ics is required for this system")
    period = args.period if args.period is not None else (ex.period if ex else None)
    if period is None:
        raise UsageError("--period is required for this system")
    inp = args.input or (list(ex.forcing) if ex and ex.forcing else None)
    rep = entrainment_study(system, period, ics, _span(args.tspan), _opts(args), inp, _metric(args.metric, None))
    files = {}
    out = _outdir(args.out)
    if out:
        for k, tr in enumerate(rep.trajectories):
            files[f"trajectory_{k}"] = f"trajectory_{k}.csv"
            write_trajectory_csv(tr, os.path.join(out, files[f"trajectory_{k}"]))
        files["summary"] = "entrainment.json"
    doc = report("entrainment", args.system, {**rep.summary(), "files": files})
    if out:
        write_json(doc, os.path.join(out, files["summary"]))
    ok = rep.pairwise_distance <= args.tolerance and rep.period_mismatch <= args.tolerance
    _say(f"entrainment of {args.system}: period {period:g}, {len(ics)} initial conditions")
    _say(f"  tail pairwise distance = {rep.pairwise_distance:.3e}")
    _say(f"  period mismatch        = {rep.period_mismatch:.3e}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_search_metric(args) -> int:
    system, ex = _load(args.system)
    box = args.box or (ex.box if ex else None)
    domain = Domain.parse(box, args.samples) if box else None
    res = search_metric(system, args.family, domain, args.budget)
    fam = {"l1-diag": "l1", "linf-diag": "linf", "l2-factor": "l2"}.get(args.family, args.family)
    doc = report(
        "metric-search",
        args.system,
        {
            "family": Metric(fam).family,
            "found": res.found,
            "objective": res.objective,
            "evaluations": res.evaluations,
            "reason": res.reason,
            "metric": res.metric.describe() if res.metric else None,
            "certificate": res.certificate.to_dict() if res.certificate else None,
        },
    )
    out = _outdir(args.out)
    if out:
        write_json(doc, os.path.join(out, "metric_search.json"))
    _say(f"metric search ({args.family}) for {args.system}: {res.reason}")
    if res.metric is not None:
        _say(json.dumps(res.metric.describe(), sort_keys=True))
        return EXIT_OK
    return EXIT_INCONCLUSIVE


def cmd_examples(args) -> int:
    if args.dump:
        ex = get_example(args.dump)
        text = dumps(system_to_dict(ex.build()))
        out = _outdir(args.out)
        if out:
            with open(os.path.join(out, f"{ex.name}.json"), "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    for name in example_names():
        ex = get_example(name)
        _say(f"{name}  {ex.kind:<8} box={ex.box}  {ex.description}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="filcert", description="Contraction certificates and simulation for bimodal Filippov systems.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common_sim(sp):
        sp.add_argument("--h", type=float, default=1e-3, help="RK4 step (default 1e-3)")
        sp.add_argument("--stride", type=int, default=1, help="keep every stride-th step in the output")
        sp.add_argument("--out", help="directory for report files")

    c = sub.add_parser("certify", help="check the contraction conditions on a box")
    c.add_argument("system", help="built-in name or system JSON file")
    c.add_argument("--metric", default="l1", choices=["l1", "l2", "linf"])
    c.add_argument("--weight", help="JSON weight file (D list, P matrix, or object with D/P/Q)")
    c.add_argument("--box", help="lo:hi[,lo:hi...]")
    c.add_argument("--samples", type=int, default=41, help="grid samples per axis (default 41)")
    c.add_argument("--out", help="directory for report files")
    c.set_defaults(func=cmd_certify)

    s = sub.add_parser("simulate", help="integrate the Filippov or regularized system")
    s.add_argument("system")
    s.add_argument("--x0")
    s.add_argument("--tspan", default="0:5")
    s.add_argument("--eps", type=float, help="regularize with this eps instead of Filippov sliding")
    s.add_argument("--phi", default="sat", choices=["sat", "cubic"])
    s.add_argument("--input", action="append", help="input expression in t (repeat per channel)")
    common_sim(s)
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("decay", help="distance between two solutions against the exponential envelope")
    d.add_argument("system")
    d.add_argument("--x0")
    d.add_argument("--y0")
    d.add_argument("--rate", type=float)
    d.add_argument("--K", type=float, default=1.0)
    d.add_argument("--metric", default="l1", choices=["l1", "l2", "linf"])
    d.add_argument("--weight")
    d.add_argument("--tspan", default="0:5")
    d.add_argument("--tolerance", type=float, default=0.02, help="allowed relative envelope excess")
    d.add_argument("--input", action="append")
    common_sim(d)
    d.set_defaults(func=cmd_decay)

    w = sub.add_parser("sweep", help="regularized vs Filippov error over decreasing eps")
    w.add_argument("system")
    w.add_argument("--eps-list", default="1e-2,1e-3,1e-4")
    w.add_argument("--phi", default="sat", choices=["sat", "cubic"])
    w.add_argument("--x0")
    w.add_argument("--tspan", default="0:1")
    w.add_argument("--metric", default="l1", choices=["l1", "l2", "linf"])
    w.add_argument("--input", action="append")
    common_sim(w)
    w.set_defaults(func=cmd_sweep)

    e = sub.add_parser("entrain", help="convergence to a periodic orbit under periodic input")
    e.add_argument("system")
    e.add_argument("--period", type=float)
    e.add_argument("--ics", help="JSON file with a list of initial states")
    e.add_argument("--tspan", default="0:10")
    e.add_argument("--metric", default="l1", choices=["l1", "l2", "linf"])
    e.add_argument("--tolerance", type=float, default=1e-3)
    e.add_argument("--input", action="append")
    common_sim(e)
    e.set_defaults(func=cmd_entrain)

    m = sub.add_parser("search-metric", help="search a weight that certifies the system")
    m.add_argument("system")
    m.add_argument("--family", default="l1-diag", choices=["l1-diag", "l2-factor", "linf-diag", "l1", "l2", "linf"])
    m.add_argument("--box")
    m.add_argument("--samples", type=int, default=21)
    m.add_argument("--budget", type=int, default=200)
    m.add_argument("--out")
    m.set_defaults(func=cmd_search_metric)

    x = sub.add_parser("examples", help="list built-in systems or dump one as JSON")
    x.add_argument("--dump", metavar="NAME")
    x.add_argument("--out")
    x.set_defaults(func=cmd_examples)
    return p


_NEGATIVE_VALUE = re.compile(r"^-[0-9.]")


def _join_negative_values(argv: Sequence[str]) -> List[str]:
    # argparse reads "--box -5:5" as two options; glue such values on with "="
    out: List[str] = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a.startswith("--") and "=" not in a and i + 1 < len(argv) and _NEGATIVE_VALUE.match(argv[i + 1]):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_join_negative_values(argv))
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required (certify, simulate, decay, sweep, entrain, search-metric, examples)")
        return args.func(args)
    except UsageError as exc:
        print(f"filcert: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, MetricError, CertificationError, SimulationError, KernelError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"filcert: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
