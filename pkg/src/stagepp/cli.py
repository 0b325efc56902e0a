"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 failed golden comparison.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import codim2 as c2
from .continuation import ContinuationConfig, continue_equilibrium, stability_profile, write_curve_csv, write_specials_csv
from .equilibria import all_equilibria, existence_report, find, interior_equilibria
from .errors import ConfigError, NumericalError
from .model import PARAM_NAMES, PRESETS, Params, jacobian, load_preset
from .normalform import hopf_normal_form, verify_saddle_node, verify_transcritical
from .reproduce import FIGURES, reproduce
from .simulate import IntegratorConfig, settle, write_trajectory_csv
from .stability import char_coeffs, classify_prey_only, eigenvalues, routh_hurwitz
from .svg import Plot

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_GOLDEN = 2, 3, 4


class GoldenFailure(Exception):
    pass


# -- option parsing helpers ------------------------------------------------------------------


def _parse_assignment(text: str) -> tuple[str, float]:
    if "=" not in text:
        raise ConfigError(f"expected NAME=VALUE, got {text!r}")
    name, value = text.split("=", 1)
    name = name.strip()
    if name not in PARAM_NAMES:
        raise ConfigError(f"unknown parameter {name!r}")
    try:
        return name, float(value)
    except ValueError as exc:
        raise ConfigError(f"value of {name} is not a number: {value!r}") from exc


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"expected LO:HI, got {text!r}") from exc
    if not lo < hi:
        raise ConfigError("range needs LO < HI")
    return lo, hi


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def build_params(args, cfg: dict) -> Params:
    """Preset (or explicit ``params`` table) with ``--set`` overrides applied in order."""
    if args.preset is not None:
        p = load_preset(args.preset)
    elif "params" in cfg:
        if not isinstance(cfg["params"], dict):
            raise ConfigError("config params must be an object")
        p = Params.from_mapping(cfg["params"])
    else:
        p = load_preset(cfg.get("preset", "table1"))
    changes = dict(_parse_assignment(s) for s in (args.set or []))
    return p.replace(**changes) if changes else p


def _formats(args) -> set[str]:
    out: set[str] = set()
    for f in args.format or ["csv"]:
        out.update(v.strip() for v in f.split(",") if v.strip())
    bad = out - {"csv", "json", "svg"}
    if bad:
        raise ConfigError(f"unknown format(s): {', '.join(sorted(bad))}")
    return out


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_block(args, cfg: dict, command: str) -> None:
    """Fill options not given on the command line from the config's per-command block."""
    block = cfg.get(command, {})
    if not isinstance(block, dict):
        raise ConfigError(f"config block {command!r} must be an object")
    for k, v in block.items():
        key = k.replace("-", "_")
        if not hasattr(args, key):
            raise ConfigError(f"unknown option {k!r} in config block {command!r}")
        if getattr(args, key) in (None, [], False):
            setattr(args, key, v)


def _seed(p: Params, which: str | None):
    eqs = all_equilibria(p)
    order = [which] if which else ["E4", "E3", "E2"]
    for lbl in order:
        e = find(eqs, lbl)
        if e is not None:
            return e
    raise ConfigError(f"no equilibrium {which or 'E4/E3/E2'} to seed from")


def _fmt_state(s) -> str:
    return "(" + ", ".join(f"{v:.9g}" for v in s) + ")"


# -- commands ------------------------------------------------------------------------------------


def cmd_simulate(args, cfg) -> int:
    p = build_params(args, cfg)
    if not args.init:
        args._parser.print_usage(sys.stderr)
        raise ConfigError("simulate needs --init x,y1,y2,y3 or near-E2/near-E3/near-E4")
    init = str(args.init)
    if init.startswith("near-"):
        e = find(all_equilibria(p), init[5:])
        if e is None:
            raise ConfigError(f"{init[5:]} does not exist for these parameters")
        s0 = e.as_array() * 1.01 + np.array([0.0, 1e-3, 1e-3, 1e-3]) * (e.label == "E2")
    else:
        try:
            s0 = np.array([float(v) for v in init.split(",")])
        except ValueError as exc:
            raise ConfigError(f"bad --init {init!r}") from exc
        if s0.shape != (4,):
            raise ConfigError("--init needs four comma-separated values")
    icfg = IntegratorConfig(rtol=args.rtol, atol=args.atol, tmax=args.tmax)
    out, tr = settle(s0, p, icfg, t_limit=max(args.tmax, args.t_limit))
    od, fmts = _outdir(args), _formats(args)
    if "csv" in fmts:
        write_trajectory_csv(tr, od / "trajectory.csv")
    if "svg" in fmts:
        plot = Plot(title="trajectory", xlabel="t", ylabel="density")
        for k, n in enumerate(("x", "y1", "y2", "y3")):
            plot.line(tr.times, tr.states[:, k], label=n)
        plot.save(od / "trajectory.svg")
    if "json" in fmts:
        (od / "simulate.json").write_text(
            json.dumps({"verdict": out.verdict, "t_end": out.t_end, "mean": out.mean.tolist(), "amplitude": out.amplitude.tolist(), "period": out.period}, indent=2)
            + "\n"
        )
    print(f"verdict: {out.verdict}")
    print(f"t_end = {out.t_end:.9g}, final mean = {_fmt_state(out.mean)}")
    if out.period is not None:
        print(f"period = {out.period:.9g}, amplitude = {_fmt_state(out.amplitude)}")
    return 0


def _analysis(p: Params) -> dict:
    der, _ = interior_equilibria(p)
    rep = existence_report(p)
    e2 = classify_prey_only(p)
    result = {
        "params": p.as_dict(),
        "mu_squared": der.mu2,
        "existence": {"d2_bound_holds": rep.d2_bound_holds, "case": rep.case},
        "prey_only": {"class": e2.klass, "case": e2.case_id, "det": e2.det, "trace": e2.trace, "a2_threshold": e2.a2_threshold},
        "equilibria": [],
    }
    for e in all_equilibria(p):
        J = jacobian(e.as_array(), p)
        cc = char_coeffs(J)
        v = routh_hurwitz(cc)
        ev = eigenvalues(J)
        result["equilibria"].append(
            {
                "label": e.label,
                "kind": e.kind,
                "state": list(e.state),
                "residual": e.residual,
                "eps": list(cc.as_array()),
                "routh_hurwitz": {"eps1": cc.rh[0], "eps4": cc.rh[1], "eps1eps2-eps3": cc.rh[2], "Delta": cc.rh[3]},
                "verdict": v.verdict,
                "eigenvalues": [{"re": float(z.real), "im": float(z.imag)} for z in ev],
            }
        )
    return result


def cmd_analyze(args, cfg) -> int:
    p = build_params(args, cfg)
    res = _analysis(p)
    print(f"existence: d2 bound {'holds' if res['existence']['d2_bound_holds'] else 'fails'}, case {res['existence']['case']}")
    po = res["prey_only"]
    print(f"E2 classification: {po['class']}" + (f", case {po['case']}" if po["case"] != "n/a" else "") + f" (a2 threshold {po['a2_threshold']:.6g})")
    labels = [e["label"] for e in res["equilibria"]]
    if "E3" not in labels and "E4" not in labels:
        print("no interior equilibria")
    for e in res["equilibria"]:
        rh = e["routh_hurwitz"]
        ev = ", ".join(f"{z['re']:.6g}{z['im']:+.6g}i" for z in e["eigenvalues"])
        print(f"{e['label']} {_fmt_state(e['state'])}: {e['verdict']}")
        print(f"    eps1={rh['eps1']:.6g} eps4={rh['eps4']:.6g} eps1eps2-eps3={rh['eps1eps2-eps3']:.6g} Delta={rh['Delta']:.6g}")
        print(f"    eigenvalues: {ev}")
    fmts = _formats(args)
    if "json" in fmts:
        od = _outdir(args)
        (od / "analyze.json").write_text(json.dumps(res, indent=2) + "\n")
    return 0


def _print_special(sp, free: str) -> None:
    l1 = "" if sp.l1 is None else f" l1={sp.l1:.6e}"
    print(f"{sp.kind} {free}={sp.param:.10g}{l1}")


def cmd_continue(args, cfg) -> int:
    p = build_params(args, cfg)
    if not args.free:
        raise ConfigError("continue needs --free NAME")
    if args.free not in PARAM_NAMES:
        raise ConfigError(f"unknown parameter {args.free!r}")
    lo, hi = _parse_range(args.range) if args.range else (None, None)
    seed = _seed(p, args.seed)
    ccfg = ContinuationConfig(ds0=args.ds, ds_max=max(args.ds, ContinuationConfig().ds_max))
    res = continue_equilibrium(p, args.free, lo, hi, seed=seed, cfg=ccfg)
    for sp in res.specials:
        _print_special(sp, args.free)
    for seg in stability_profile(res):
        print(f"{'stable' if seg.stable else 'unstable'} on [{min(seg.param_start, seg.param_end):.9g}, {max(seg.param_start, seg.param_end):.9g}]")
    od, fmts = _outdir(args), _formats(args)
    if "csv" in fmts:
        write_curve_csv(res, od / "branch.csv")
        write_specials_csv(res.specials, od / "specials.csv")
    if "json" in fmts:
        (od / "specials.json").write_text(
            json.dumps([{"kind": s.kind, "param": s.param, "state": list(s.state), "l1": s.l1} for s in res.specials], indent=2) + "\n"
        )
    if "svg" in fmts:
        from .reproduce import _branch_plot

        _branch_plot(res, 0, f"free {args.free}").save(od / "branch.svg")
    return 0


def cmd_codim2(args, cfg) -> int:
    p = build_params(args, cfg)
    for n in (args.p1, args.p2):
        if n not in PARAM_NAMES:
            raise ConfigError(f"unknown parameter {n!r}")
    bounds = None
    if args.bounds:
        parts = args.bounds.split(",")
        if len(parts) != 2:
            raise ConfigError("--bounds expects LO1:HI1,LO2:HI2")
        bounds = tuple(_parse_range(s) for s in parts)
    seed_free = args.seed_free or args.p2
    res1 = continue_equilibrium(p, seed_free, seed=_seed(p, args.seed))
    kind = "LP" if args.curve == "fold" else "H"
    seeds = res1.of_kind(kind)
    if not seeds:
        raise ConfigError(f"no {kind} point found in {seed_free} to seed the {args.curve} curve")
    run = c2.continue_fold if args.curve == "fold" else c2.continue_hopf
    out = run(p, args.p1, args.p2, seeds[0], bounds=bounds)
    for q in out.points:
        print(f"{q.kind} {args.p1}={q.p1:.9g} {args.p2}={q.p2:.9g}")
    od, fmts = _outdir(args), _formats(args)
    if "csv" in fmts:
        c2.write_curve_csv(out.curve, od / f"{args.curve}_curve.csv")
        c2.write_points_csv(out.points, od / "codim2_points.csv")
    if args.region:
        rb = bounds or ((min(r.p1 for r in out.curve.points), max(r.p1 for r in out.curve.points)),
                        (min(r.p2 for r in out.curve.points), max(r.p2 for r in out.curve.points)))
        try:
            n1, n2 = (int(v) for v in args.resolution.lower().split("x"))
        except ValueError as exc:
            raise ConfigError("--resolution expects N1xN2") from exc
        rm = c2.region_classify(p, args.p1, args.p2, rb, (n1, n2), jobs=args.jobs)
        c2.write_region_csv(rm, od / "regions.csv")
        print(f"region map {n1}x{n2} written ({rm.failures} numerical failures)")
    if "svg" in fmts:
        plot = Plot(title=f"{args.curve} curve", xlabel=args.p1, ylabel=args.p2)
        plot.line([r.p1 for r in out.curve.points], [r.p2 for r in out.curve.points], label=args.curve)
        for q in out.points:
            plot.mark(q.p1, q.p2, q.kind)
        plot.save(od / f"{args.curve}_curve.svg")
    return 0


def cmd_normal_form(args, cfg) -> int:
    p = build_params(args, cfg)
    if not args.at:
        raise ConfigError("normal-form needs --at NAME=VALUE")
    name, value = _parse_assignment(args.at)
    q = p.with_value(name, value)
    eq = _seed(q, args.seed)
    nf = hopf_normal_form(q, eq, name, orientation=args.orientation)
    data = nf.to_json()
    print(json.dumps(data, indent=2))
    if "json" in _formats(args) or "csv" in _formats(args):
        (_outdir(args) / "normal_form.json").write_text(json.dumps(data, indent=2) + "\n")
    return 0


def cmd_verify(args, cfg) -> int:
    p = build_params(args, cfg)
    if args.transcritical:
        tc = verify_transcritical(p)
        print(f"q0={tc.q0:.3g} q1={tc.q1:.9g} q2={tc.q2:.9g} null_residual={tc.null_residual:.3g}")
        ok = tc.matches and tc.transversal
        print(f"a2t={tc.a2t:.6g} {'PASS' if ok else 'FAIL'}")
        if not ok:
            raise GoldenFailure("transcritical conditions not met")
        return 0
    if args.saddle_node:
        free = args.free or "b"
        v = getattr(p, free)
        res = continue_equilibrium(p, free, seed=_seed(p, args.seed), lyapunov=False)
        lps = res.of_kind("LP")
        if not lps:
            raise ConfigError(f"no fold found in {free}")
        lp = min(lps, key=lambda s: abs(s.param - v))
        sn = verify_saddle_node(res.params_at(lp), lp.state, free)
        print(f"LP {free}={lp.param:.10g}")
        print(f"degeneracy={sn.degeneracy:.3g} s0={sn.s0:.6g} s1={sn.s1:.6g} (raw s0={sn.s0_raw:.6g} s1={sn.s1_raw:.6g})")
        ok = abs(sn.degeneracy) < 1e-6 and sn.transversal
        print("PASS" if ok else "FAIL")
        if not ok:
            raise GoldenFailure("saddle-node conditions not met")
        return 0
    raise ConfigError("verify needs --transcritical or --saddle-node")


def cmd_reproduce(args, cfg) -> int:
    m = reproduce(args.figure, args.out, jobs=args.jobs, formats=_formats(args) | {"csv"})
    for line in m.lines():
        print(line)
    print(f"manifest: {Path(args.out) / (args.figure + '_manifest.json')}")
    if not m.passed:
        raise GoldenFailure(f"{args.figure}: golden comparison failed")
    return 0


# -- parser ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", choices=PRESETS, help="parameter table (default table1)")
    common.add_argument("--config", help="JSON config with keys params, preset and per-command blocks")
    common.add_argument("--set", action="append", metavar="NAME=VALUE", help="override a parameter (repeatable)")
    common.add_argument("--out", default="stagepp_out", help="output directory")
    common.add_argument("--format", action="append", help="csv, json, svg (repeatable or comma separated)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for grid work")

    ap = argparse.ArgumentParser(prog="stagepp", description="Stage-structured predator-prey bifurcation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="integrate a trajectory and report the attractor")
    s.add_argument("--init", help="x,y1,y2,y3 or near-E2/near-E3/near-E4")
    s.add_argument("--tmax", type=float, default=5000.0)
    s.add_argument("--t-limit", type=float, default=1e5, help="horizon cap when the verdict is undecided")
    s.add_argument("--rtol", type=float, default=1e-8)
    s.add_argument("--atol", type=float, default=1e-10)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", parents=[common], help="equilibria, existence and stability")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("continue", parents=[common], help="one-parameter equilibrium continuation")
    s.add_argument("--free", help="free parameter")
    s.add_argument("--range", help="LO:HI")
    s.add_argument("--seed", choices=("E2", "E3", "E4"), help="equilibrium to start from (default E4)")
    s.add_argument("--ds", type=float, default=2e-3, help="initial arclength step")
    s.set_defaults(func=cmd_continue)

    s = sub.add_parser("codim2", parents=[common], help="two-parameter fold or Hopf curve")
    s.add_argument("--curve", choices=("fold", "hopf"), required=True)
    s.add_argument("--p1", required=True)
    s.add_argument("--p2", required=True)
    s.add_argument("--seed-free", help="parameter of the one-parameter run that finds the seed (default p2)")
    s.add_argument("--seed", choices=("E2", "E3", "E4"))
    s.add_argument("--bounds", help="LO1:HI1,LO2:HI2")
    s.add_argument("--region", action="store_true", help="also classify a grid of cells")
    s.add_argument("--resolution", default="20x20")
    s.set_defaults(func=cmd_codim2)

    s = sub.add_parser("normal-form", parents=[common], help="Hopf normal form at a parameter value")
    s.add_argument("--at", help="NAME=VALUE of the Hopf parameter")
    s.add_argument("--seed", choices=("E3", "E4"))
    s.add_argument("--orientation", type=int, choices=(1, -1), default=1)
    s.set_defaults(func=cmd_normal_form)

    s = sub.add_parser("verify", parents=[common], help="transcritical or saddle-node conditions")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--transcritical", action="store_true")
    g.add_argument("--saddle-node", action="store_true")
    s.add_argument("--free", help="fold parameter for --saddle-node (default b)")
    s.add_argument("--seed", choices=("E3", "E4"))
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("reproduce", parents=[common], help="regenerate one figure's data with a golden manifest")
    s.add_argument("figure", choices=FIGURES)
    s.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    args._parser = ap._subparsers._group_actions[0].choices[args.command]
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = _load_config(args.config)
        _apply_block(args, cfg, args.command)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GoldenFailure as exc:
        print(f"golden comparison failed: {exc}", file=sys.stderr)
        return EXIT_GOLDEN


if __name__ == "__main__":
    sys.exit(main())
