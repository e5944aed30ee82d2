"""Batch command-line front end.

One study per invocation (``--case`` plus optional ``--devices``), or a
``--batch`` file fanning independent studies across worker threads.  Exit
codes: 0 converged, 2 diverged, 1 bad input.
"""

from __future__ import annotations

import argparse
import cmath
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .devices import DeviceConfigError, load_devices
from .network import ParseError, TopologyError, parse_case
from .newton import ConvergenceError
from .report import METHODS, StudyError, StudyOptions, StudyReport, run_study

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DIVERGED = 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ffheflow",
        description="Holomorphic-embedding AC load flow with series VSC "
                    "FACTS devices")
    p.add_argument("--case", type=Path, help="case file (MATPOWER-style)")
    p.add_argument("--devices", type=Path,
                   help="JSON series-device configuration")
    p.add_argument("--method", choices=METHODS, default="nr-warm-ffhe")
    p.add_argument("--tol", type=float, default=1e-8,
                   help="convergence tolerance on the mismatch (p.u.)")
    p.add_argument("--max-terms", type=int, default=60,
                   help="series orders per embedding stage")
    p.add_argument("--warm-iters", type=int, default=3,
                   help="Newton iterations before the series expansion")
    p.add_argument("--pade", action="store_true",
                   help="evaluate the series with Padé acceleration")
    p.add_argument("--report", choices=("text", "json"), default="text")
    p.add_argument("--batch", type=Path,
                   help="JSON list of studies run on worker threads")
    return p


def _options(args) -> StudyOptions:
    return StudyOptions(method=args.method, tol=args.tol,
                        max_terms=args.max_terms,
                        warm_iters=args.warm_iters, pade=args.pade)


def _run_one(case_path: Path, devices_path, opts: StudyOptions) -> StudyReport:
    net = parse_case(case_path.read_text(), name=case_path.stem)
    devices = ()
    if devices_path is not None:
        devices = tuple(load_devices(Path(devices_path).read_text()))
    return run_study(net, devices, opts)


def report_dict(rep: StudyReport) -> dict:
    net = rep.system.net
    buses = {}
    for b, bus in enumerate(net.buses):
        v = rep.V[b]
        buses[str(bus.ext_id)] = {
            "kind": bus.kind.value,
            "v_mag": abs(v),
            "v_deg": float(np.degrees(cmath.phase(v))),
        }
    devices = {
        dev_id: [out.as_dict() for out in outs]
        for dev_id, outs in rep.device_outputs.items()
    }
    stats = {
        name: {"iterations": st.iterations, "terms": st.terms,
               "mismatch": st.mismatch, "runtime_s": st.runtime_s}
        for name, st in rep.stats.items()
    }
    return {
        "converged": rep.converged,
        "method": rep.method,
        "case": net.name,
        "mismatch": rep.mismatch,
        "runtime_s": rep.runtime_s,
        "clamped_generators": {str(k): v
                               for k, v in rep.clamped_generators.items()},
        "relaxed_branches": [list(rb) for rb in rep.relaxed_branches],
        "frozen_q": {str(k): v for k, v in rep.frozen_q.items()},
        "buses": buses,
        "devices": devices,
        "stats": stats,
        "comparison": rep.comparison,
    }


def format_text(rep: StudyReport) -> str:
    net = rep.system.net
    lines = [f"case {net.name or '<unnamed>'}: "
             f"{'converged' if rep.converged else 'DIVERGED'} "
             f"(method {rep.method}, mismatch {rep.mismatch:.3e}, "
             f"{rep.runtime_s:.3f} s)"]
    if rep.clamped_generators:
        pairs = ", ".join(f"{b} at {q:.4f}"
                          for b, q in sorted(rep.clamped_generators.items()))
        lines.append(f"generators at reactive limit: {pairs}")
    if rep.frozen_q:
        pairs = ", ".join(f"{b} at {q:.4f}"
                          for b, q in sorted(rep.frozen_q.items()))
        lines.append(f"displaced regulators held at constant Q: {pairs}")
    if rep.relaxed_branches:
        pairs = ", ".join(f"{d}[{b}]" for d, b in rep.relaxed_branches)
        lines.append(f"injected-voltage limits reached on: {pairs}")
    lines.append(f"{'bus':>6} {'type':>6} {'V (p.u.)':>10} {'angle (deg)':>12}")
    for b, bus in enumerate(net.buses):
        v = rep.V[b]
        lines.append(f"{bus.ext_id:>6} {bus.kind.value:>6} "
                     f"{abs(v):>10.4f} {np.degrees(cmath.phase(v)):>12.4f}")
    for dev_id, outs in rep.device_outputs.items():
        for k, out in enumerate(outs):
            x_eq = "inf" if not np.isfinite(out.x_eq) else f"{out.x_eq:.4f}"
            lines.append(
                f"device {dev_id} branch {k}: "
                f"V_se {abs(out.v_se):.4f} /_{np.degrees(cmath.phase(out.v_se)):.4f} deg, "
                f"I_se {abs(out.i_se):.4f} /_{np.degrees(cmath.phase(out.i_se)):.4f} deg, "
                f"S_se {out.s_se.real:+.4f}{out.s_se.imag:+.4f}j, "
                f"S_line {out.s_line.real:+.4f}{out.s_line.imag:+.4f}j, "
                f"X_eq {x_eq}")
    for name, st in rep.stats.items():
        lines.append(f"method {name}: {st.iterations} Newton iterations, "
                     f"{st.terms} series terms, mismatch {st.mismatch:.3e}, "
                     f"{st.runtime_s:.4f} s")
    if rep.comparison:
        lines.append(
            f"series-vs-Newton voltage gap {rep.comparison['voltage_gap']:.3e} "
            f"p.u., error improvement {rep.comparison['delta_e_pct']:.2f}%, "
            f"runtime improvement {rep.comparison['delta_t_pct']:.2f}%")
    return "\n".join(lines)


def _emit(rep: StudyReport, kind: str) -> None:
    if kind == "json":
        print(json.dumps(report_dict(rep), indent=2))
    else:
        print(format_text(rep))


def _run_batch(batch_path: Path, args) -> int:
    try:
        entries = json.loads(batch_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read batch file: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not isinstance(entries, list):
        print("error: batch file must hold a JSON list", file=sys.stderr)
        return EXIT_INPUT

    def one(entry):
        case = Path(entry["case"])
        devices = entry.get("devices")
        opts = StudyOptions(
            method=entry.get("method", args.method),
            tol=float(entry.get("tol", args.tol)),
            max_terms=int(entry.get("max_terms", args.max_terms)),
            warm_iters=int(entry.get("warm_iters", args.warm_iters)),
            pade=bool(entry.get("pade", args.pade)))
        return _run_one(case, devices, opts)

    worst = EXIT_OK
    with ThreadPoolExecutor() as pool:
        futures = [pool.submit(one, e) for e in entries]
        for entry, fut in zip(entries, futures):
            label = entry.get("label", entry.get("case", "?"))
            try:
                rep = fut.result()
            except (KeyError, TypeError, ValueError, OSError, ParseError,
                    TopologyError, DeviceConfigError) as exc:
                print(f"[{label}] input error: {exc}", file=sys.stderr)
                worst = max(worst, EXIT_INPUT)
                continue
            except (ConvergenceError, StudyError) as exc:
                print(f"[{label}] diverged: {exc}", file=sys.stderr)
                worst = max(worst, EXIT_DIVERGED)
                continue
            print(f"=== {label}")
            _emit(rep, args.report)
    return worst


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.batch is not None:
        return _run_batch(args.batch, args)
    if args.case is None:
        print("error: --case (or --batch) is required", file=sys.stderr)
        return EXIT_INPUT
    try:
        rep = _run_one(args.case, args.devices, _options(args))
    except (OSError, ParseError, TopologyError, DeviceConfigError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, StudyError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    _emit(rep, args.report)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
