"""Command-line front end: ``pshflow {check,run,maxtime,report}``.

Exit codes: 0 ok, 2 invariant violation, 3 singular time reached when not
expected, 4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_state, save_state, write_checkpoint
from .config import load_config
from .errors import ConfigError, InvariantViolation, NonFinite, PositivityLost, PshflowError, SingularTimeReached
from .estimates import SCHEMA_VERSION, EstimateReport

EXIT_OK, EXIT_INVARIANT, EXIT_SINGULAR, EXIT_CONFIG = 0, 2, 3, 4
logger = logging.getLogger("pshflow")


def _out_dir(args, cfg) -> Path:
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    cfg = load_config(Path(args.config))
    if args.threads:
        cfg.grid.workers = args.threads
    return cfg


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_check(args) -> int:
    from .checks import run_all

    cfg = _load(args)
    rows = run_all(cfg.problem, tol=cfg.check_tolerance, seed=cfg.seed)
    failed = [r for r in rows if not r.passed]
    print("suite,check,value,threshold,status")
    for r in rows:
        print(f"{r.suite},{r.name},{r.value:.3e},{r.threshold:.1e},{'pass' if r.passed else 'FAIL'}")
    out = _out_dir(args, cfg)
    _write_json(out / "check.json", {
        "schema_version": SCHEMA_VERSION,
        "checks": [{"suite": r.suite, "name": r.name, "value": r.value, "threshold": r.threshold,
                    "passed": r.passed} for r in rows]})
    if failed:
        for r in failed:
            print(f"error: check.{r.suite}: invariant '{r.name}' residual {r.value:.3e} "
                  f"exceeds {r.threshold:.1e}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_run(args) -> int:
    from .flow import initial_state, run

    cfg = _load(args)
    p, ctrl = cfg.problem, cfg.control
    out = _out_dir(args, cfg)
    ckdir = out / "checkpoints"
    ckdir.mkdir(exist_ok=True)
    csv_path = out / "estimates.csv"

    previous = []
    if args.resume:
        state = load_state(args.resume, p, ctrl)
        if csv_path.exists():
            old = EstimateReport.read_csv(csv_path)
            previous = [r for r in old.rows if r["t"] < state.t - 1e-12 * max(1.0, state.t)]
        logger.info("resuming from %s at t=%.12g", args.resume, state.t)
    else:
        state = initial_state(p, ctrl)

    counter = {"k": 0}

    def checkpoint(s):
        k = counter["k"]
        if k % cfg.checkpoint_every == 0:
            save_state(ckdir / f"state_t{s.t:.9f}.pshf", p, s)
        save_state(out / "latest.pshf", p, s)
        counter["k"] = k + 1

    result = run(p, cfg.t_end, ctrl, cadence=cfg.cadence, state=state, callbacks=[checkpoint],
                 monitor=cfg.estimates_enabled)
    report = result.report or EstimateReport(p)
    report.ceilings = cfg.ceilings
    report.rows = previous + report.rows
    report.to_csv(csv_path)
    extra = {"t_end": cfg.t_end, "singular": None}
    if result.singular is not None:
        extra["singular"] = {"t": result.singular.t, "dt": result.singular.dt, "message": str(result.singular)}
    report.to_json(out / "summary.json", extra)
    print(f"run: reached t={result.final.t:.9g} in {result.final.step_count} steps "
          f"({result.final.rejected_count} rejected); outputs in {out}")
    if result.singular is not None:
        print(f"run: singular time reached: {result.singular}", file=sys.stderr if not cfg.expect_singular else sys.stdout)
        if not cfg.expect_singular:
            return EXIT_SINGULAR
    return EXIT_OK


def cmd_maxtime(args) -> int:
    from .maxtime import predicted_T, singular_time

    cfg = _load(args)
    q = cfg.maxtime_query()
    out = _out_dir(args, cfg)
    est = predicted_T(q, tol=cfg.maxtime_tol)
    certs = []
    for k, c in enumerate(est.certificates):
        path = out / f"certificate_{k}.pshf"
        write_checkpoint(path, q.grid.n, q.grid.N, c.t, 0.0, c.psi)
        certs.append({"t": c.t, "lam": c.lam, "psi": str(path)})
    data = {"schema_version": SCHEMA_VERSION, "T_lo": est.T_lo, "T_hi": est.T_hi,
            "advisory": est.advisory, "certificates": certs,
            "probes": [{"t": t, "lam": lam, "feasible": bool(ok)} for t, lam, ok in est.probes],
            "t_sing": None, "diagnostics": {}}
    print("quantity,value")
    print(f"T_lo,{est.T_lo:.6g}")
    print(f"T_hi,{'inf' if est.T_hi is None else format(est.T_hi, '.6g')}")
    if est.advisory:
        print(f"advisory: {est.advisory}", file=sys.stderr)
    if cfg.maxtime_run_flow:
        st = singular_time(cfg.problem, cfg.maxtime_t_end, cfg.control)
        data["t_sing"] = st.t_sing
        data["diagnostics"] = {"last_t": st.last_t, "reason": st.reason,
                               "first_diverged": st.first_diverged, "diverged_at": st.diverged_at,
                               "steps": st.steps}
        print(f"t_sing,{'none' if st.t_sing is None else format(st.t_sing, '.6g')}")
        print(f"first_diverged,{st.first_diverged}")
    _write_json(out / "maxtime.json", data)
    return EXIT_OK


def cmd_report(args) -> int:
    from . import plotting

    out = Path(args.out) if args.out else (load_config(Path(args.config)).out_dir if args.config else Path("out"))
    if not out.is_dir():
        raise ConfigError(f"output directory {out} does not exist", "output.dir")
    figures = []
    csv_path = out / "estimates.csv"
    if csv_path.exists():
        rep = EstimateReport.read_csv(csv_path)
        print("t\tsup_u\tsup_udot\tvol_ratio_min\tvol_ratio_max\ttrace_ratio\ttrace_identity")
        for r in rep.rows:
            print("\t".join(f"{r[c]:.6g}" for c in ("t", "sup_u", "sup_udot", "vol_ratio_min",
                                                     "vol_ratio_max", "trace_ratio", "trace_identity")))
        if rep.rows:
            figures += [plotting.plot_estimates(rep, out), plotting.plot_residuals(rep, out)]
    mt_path = out / "maxtime.json"
    if mt_path.exists():
        data = json.loads(mt_path.read_text())
        print(f"T_lo\t{data['T_lo']}\nT_hi\t{data['T_hi']}\nt_sing\t{data['t_sing']}")
        figures.append(plotting.plot_maxtime(data, out))
    if not figures:
        print(f"report: nothing to plot in {out}", file=sys.stderr)
        return EXIT_CONFIG
    for f in figures:
        print(f"figure\t{f}")
    return EXIT_OK


COMMANDS = {"check": cmd_check, "run": cmd_run, "maxtime": cmd_maxtime, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pshflow", description="Simulate and verify the (n-1)-plurisubharmonic flow on flat tori.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, metavar="N", help="FFT worker threads")
    common.add_argument("--verbose", "-v", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="run the identity suites")
    r = sub.add_parser("run", parents=[common], help="integrate the flow")
    r.add_argument("--resume", metavar="CHECKPOINT", help="continue from a binary checkpoint")
    sub.add_parser("maxtime", parents=[common], help="estimate the maximal existence time")
    sub.add_parser("report", parents=[common], help="render figures from an output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else (logging.INFO if args.verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularTimeReached as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except (InvariantViolation, PositivityLost, NonFinite) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        # malformed checkpoints and similar input problems
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PshflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
