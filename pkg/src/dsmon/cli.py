"""Command-line entry points.

Exit codes: 0 = success / nothing detected, 2 = attack detected or
identified (so scripts can branch on it), 1 = error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import scenarios
from .core import Trajectory, simulate
from .detection import (
    Partition,
    WaveformConfig,
    certify_block_dominance,
    certify_small_gain,
    design_centralized,
    design_decentralized,
    run_detector,
    run_waveform_relaxation,
)
from .errors import DsmonError
from .identification import identify, l1_counterexample
from .numeric import DEFAULT_POLICY
from .regional import check_decoupled_limitations, build_region_model, cooperative_round, local_identify

__all__ = ["cli_dispatch", "main"]


def _load_scenario(path):
    if path == "-":
        return scenarios.load_scenario(sys.stdin)
    return scenarios.load_scenario(path)


def _apply_overrides(scn, args):
    if getattr(args, "attack_set", None) is not None:
        ids = [int(v) for v in args.attack_set.split(",") if v.strip()]
        scn.attack["set"] = ids
        if ids:
            scn.attack.setdefault("signal", {"kind": "constant", "values": [1.0] * len(ids)})
            sig = scn.attack["signal"]
            if sig.get("kind") == "constant" and len(sig.get("values", [])) != len(ids):
                sig["values"] = [1.0] * len(ids)
    if getattr(args, "horizon", None):
        scn.sim["horizon"] = float(args.horizon)
    if getattr(args, "dt", None):
        scn.sim["dt"] = float(args.dt)
    if getattr(args, "partition", None):
        with open(args.partition) as fh:
            scn.partition = json.load(fh)
    return scn


def _simulate_scenario(scn):
    system = scn.build_system()
    scenario = scn.build_attack_scenario()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        x, y = simulate(system, scenario)
    return system, scenario, x, y


def _write_report(text, path=None):
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_example(args) -> int:
    params = {}
    if args.name == "consensus8":
        params = {"epsilon": args.epsilon}
    elif args.name == "tworegion16":
        params = {"seed": args.seed}
    elif args.name == "ring":
        params = {"regions": args.regions, "size": args.size,
                  "coupling": args.coupling, "seed": args.seed}
    scn = scenarios.generate_example(args.name, **params)
    if args.out:
        scenarios.save_scenario(scn, args.out)
    else:
        sys.stdout.write(scn.dumps() + "\n")
    return 0


def cmd_simulate(args) -> int:
    scn = _apply_overrides(_load_scenario(args.scenario), args)
    _, _, x, y = _simulate_scenario(scn)
    x.to_csv(args.out_x)
    y.to_csv(args.out_y)
    _write_report(f"simulated {x.t.size} samples over [0, {x.t[-1]:g}] s; "
                  f"wrote {args.out_x} and {args.out_y}")
    return 0


def cmd_detect(args) -> int:
    scn = _apply_overrides(_load_scenario(args.scenario), args)
    system, scenario, x, y = _simulate_scenario(scn)
    filt = design_centralized(system)
    r, verdict = run_detector(filt, y, scenario.x0, threshold=args.threshold)
    r.to_csv(args.out)
    _write_report(
        "attack detected" if verdict.attacked else "no attack detected",
        args.report,
    )
    _write_report(f"max residual {verdict.max_residual:.6e} "
                  f"(threshold {verdict.threshold:.6e}); residual CSV: {args.out}")
    return 2 if verdict.attacked else 0


def cmd_detect_distributed(args) -> int:
    scn = _apply_overrides(_load_scenario(args.scenario), args)
    system = scn.build_system()
    part = scn.build_partition(system)
    if part is None:
        print("error: scenario has no partition", file=sys.stderr)
        return 1
    filt = design_decentralized(system, part)
    cert = certify_small_gain(system, part, filt.G)
    dom = certify_block_dominance(system, part, filt.G)
    lines = [
        f"small-gain certificate: max rho = {cert.max_value:.6f} at "
        f"omega = {cert.argmax_omega:.4g} rad/s -> {'PASS' if cert.passed else 'FAIL'}",
        "block-dominance certificate: "
        + ", ".join(f"region {i + 1}: {v:.4f}" for i, (v, _) in enumerate(dom.per_region))
        + f" -> {'PASS' if dom.passed else 'FAIL'}",
    ]
    if args.certify_only:
        _write_report("\n".join(lines), args.report)
        return 0 if cert.passed else 1
    scenario = scn.build_attack_scenario()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, y = simulate(system, scenario)
    cfg = WaveformConfig(k_max=args.iterations, force=not cert.passed)
    run = run_waveform_relaxation(system, part, filt.G, y, scenario.x0, cfg)
    run.residual.to_csv(args.out)
    if args.errors_out and run.iteration_errors.size:
        data = np.column_stack([np.arange(1, run.iteration_errors.size + 1),
                                run.iteration_errors])
        np.savetxt(args.errors_out, data, delimiter=",", header="k,error",
                   comments="", fmt="%.17g")
    thr = args.threshold if args.threshold is not None else \
        DEFAULT_POLICY.residual_rtol * (1.0 + y.sup_norm())
    attacked = run.residual.sup_norm() > thr
    lines.append(f"ran {run.rounds} waveform rounds; "
                 f"max residual {run.residual.sup_norm():.6e} (threshold {thr:.6e})")
    lines.append("attack detected" if attacked else "no attack detected")
    _write_report("\n".join(lines), args.report)
    return 2 if attacked else 0


def cmd_identify(args) -> int:
    scn = _apply_overrides(_load_scenario(args.scenario), args)
    system, scenario, x, y = _simulate_scenario(scn)
    kwargs = {}
    if args.max_cardinality is not None:
        kwargs["max_cardinality"] = args.max_cardinality
    else:
        kwargs["cardinality"] = args.cardinality
    verdict = identify(system, y, scenario.x0, budget=args.budget,
                       threshold=args.threshold, **kwargs)
    with open(args.out, "w") as fh:
        fh.write("candidate_set,max_residual,flag\n")
        for K, (mx, flag) in sorted(verdict.candidate_results.items()):
            fh.write(f"{';'.join(map(str, K))},{mx:.17g},{'zero' if flag else 'nonzero'}\n")
    est = verdict.estimate
    if est:
        _write_report(f"identified attack set: {{{', '.join(map(str, est))}}}"
                      f" (from {len(verdict.identified_sets)} zero-residual candidates)",
                      args.report)
        return 2
    if verdict.identified_sets:
        _write_report("zero-residual candidates found but intersection is empty "
                      "(consistent with no attack)", args.report)
        return 0
    _write_report("inconclusive: no candidate produced a zero residual", args.report)
    return 0


def cmd_identify_regional(args) -> int:
    scn = _apply_overrides(_load_scenario(args.scenario), args)
    system = scn.build_system()
    part = scn.build_partition(system)
    if part is None:
        print("error: scenario has no partition", file=sys.stderr)
        return 1
    scenario = scn.build_attack_scenario()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, y = simulate(system, scenario)
    verdict = cooperative_round(system, part, y, scenario.x0,
                                threshold_rel=args.threshold_rel)
    k = args.cardinality
    local = {}
    for reg in verdict.suspect_regions:
        loc = local_identify(system, part, reg, verdict.estimates, y, scenario.x0,
                             cardinality=k, budget=args.budget,
                             threshold=args.local_threshold)
        local[reg] = loc
    with open(args.out, "w") as fh:
        fh.write("region,max_residual,threshold,classification,local_set\n")
        for i in sorted(verdict.residual_sup):
            cls = verdict.criteria[i]
            lset = ""
            if i in local and local[i].estimate:
                lset = ";".join(map(str, local[i].estimate))
            fh.write(f"{i},{verdict.residual_sup[i]:.17g},"
                     f"{verdict.thresholds[i]:.17g},{cls},{lset}\n")
    if args.messages:
        with open(args.messages, "w") as fh:
            for (rnd, snd, rcv, kind, nbytes) in verdict.messages:
                fh.write(f"{rnd},{snd},{rcv},{kind},{nbytes}\n")
    found = {reg: loc.estimate for reg, loc in local.items() if loc.estimate}
    lines = [f"suspect regions: {list(verdict.suspect_regions) or 'none'}"]
    for reg, est in found.items():
        lines.append(f"region {reg}: local attack set {{{', '.join(map(str, est))}}}")
    _write_report("\n".join(lines), args.report)
    return 2 if found else 0


def cmd_check_partition(args) -> int:
    scn = _apply_overrides(_load_scenario(args.scenario), args)
    system = scn.build_system()
    try:
        part = scn.build_partition(system)
    except DsmonError as exc:
        _write_report(f"partition check FAILED: {exc}", args.report)
        return 1
    if part is None:
        _write_report("no partition in scenario", args.report)
        return 1
    lines = [f"partition: {part.n_regions} regions, A4 block-diagonality OK"]
    try:
        filt = design_decentralized(system, part)
        lines.append("A5: every region admits a Hurwitz injection")
        cert = certify_small_gain(system, part, filt.G)
        lines.append(f"small-gain: max rho = {cert.max_value:.6f} -> "
                     f"{'PASS' if cert.passed else 'FAIL'}")
        ok = cert.passed
    except DsmonError as exc:
        lines.append(f"A5 check FAILED: {exc}")
        ok = False
    for i in range(part.n_regions):
        model = build_region_model(system, part, i + 1)
        lines.append(f"region {i + 1}: nodes {model.nodes}, "
                     f"boundary {model.boundary or '()'}, "
                     f"{model.B_b.shape[1]} coupling inputs")
    _write_report("\n".join(lines), args.report)
    return 0 if ok else 1


def cmd_l1_demo(args) -> int:
    rep = l1_counterexample(args.epsilon, horizon=args.horizon, dt=args.dt)
    if args.out:
        rep.u_bar.to_csv(args.out)
    lines = [
        f"epsilon = {rep.epsilon:g}, horizon = {args.horizon:g} s",
        "per-channel max of the equivalent attack on {2,4,7}: "
        + ", ".join(f"{v:.6f}" for v in rep.channel_max),
        f"bound |u_i| < 1/3: {'satisfied' if rep.bound_satisfied else 'VIOLATED'}",
        f"output match residual: {rep.match_residual:.3e}",
        "pointwise norm margins (||u||_p - ||u_bar||_p): "
        + ", ".join(f"p={p}: {m:.4f}" for p, m in rep.norm_margins.items()),
    ]
    _write_report("\n".join(lines), args.report)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dsmon",
                                 description="attack monitors for descriptor systems")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", default="-",
                           help="scenario JSON file ('-' for stdin)")
            p.add_argument("--attack-set", help="override attack channels, e.g. '3' or '1,9'")
            p.add_argument("--horizon", type=float, help="override sim horizon [s]")
            p.add_argument("--dt", type=float, help="override sim step [s]")
            p.add_argument("--partition", help="partition JSON file (overrides scenario)")
        p.add_argument("--report", help="also write the text report to this file")

    p = sub.add_parser("example", help="emit a built-in scenario")
    p.add_argument("name", choices=["consensus8", "tworegion16", "ring"])
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--regions", type=int, default=5)
    p.add_argument("--size", type=int, default=4)
    p.add_argument("--coupling", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_example)

    p = sub.add_parser("simulate", help="integrate the scenario, write x/y CSV")
    add_common(p)
    p.add_argument("--out-x", default="x.csv")
    p.add_argument("--out-y", default="y.csv")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("detect", help="centralized detection filter")
    add_common(p)
    p.add_argument("--out", default="residual.csv")
    p.add_argument("--threshold", type=float)
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("detect-distributed", help="waveform-relaxation detection")
    add_common(p)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--certify-only", action="store_true")
    p.add_argument("--out", default="residual.csv")
    p.add_argument("--errors-out", default="iteration_errors.csv")
    p.add_argument("--threshold", type=float)
    p.set_defaults(fn=cmd_detect_distributed)

    p = sub.add_parser("identify", help="combinatorial attack identification")
    add_common(p)
    p.add_argument("--cardinality", type=int, default=1)
    p.add_argument("--max-cardinality", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", default="verdict.csv")
    p.set_defaults(fn=cmd_identify)

    p = sub.add_parser("identify-regional", help="cooperative regional identification")
    add_common(p)
    p.add_argument("--cardinality", type=int, default=1)
    p.add_argument("--budget", type=int)
    p.add_argument("--threshold-rel", type=float, default=1e-3)
    p.add_argument("--local-threshold", type=float)
    p.add_argument("--out", default="verdict.csv")
    p.add_argument("--messages", default="messages.log")
    p.set_defaults(fn=cmd_identify_regional)

    p = sub.add_parser("check-partition", help="validate partition assumptions")
    add_common(p)
    p.set_defaults(fn=cmd_check_partition)

    p = sub.add_parser("l1-demo", help="equivalent low-magnitude attack demo")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--horizon", type=float, default=20.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(fn=cmd_l1_demo)
    return ap


def cli_dispatch(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except DsmonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
