"""Command-line entry point.

Examples::

    mlav simulate --scenario threelane --out runs/threelane --figures
    mlav simulate --scenario my.cfg --out runs/my --dx 0.01 --tau 0.1
    mlav relax-study --scenario relax-c1 --taus 1,0.5,0.1,0.05 --out runs/relax
    mlav mb-compare --ic ic3 --out runs/ic3
    mlav traces --scenario mb-ic3
    mlav converge --scenario relax-c1 --dxs 0.04,0.02,0.01,0.005 --out runs/conv

Exit status: 0 on success, 1 on invalid input, 2 when a simulation fails.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .analysis import StudyReport, convergence_study, mb_comparison_study, relaxation_study
from .model import DomainError
from .multilane import ConfigError, SimulationError, run
from .output import OutputBundle, emit_plot_script, fmt, report_rows, write_outputs, write_report
from .scalar import LimitSpec, mb_traces
from .scenarios import load_scenario, with_grid

log = logging.getLogger("mlav")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _print_report(report: StudyReport) -> None:
    for row in report_rows(report):
        print(",".join(fmt(v) for v in row))


def _figures(report: StudyReport, out: Path) -> None:
    from .plotting import profile_figure

    path = profile_figure(report, out)
    if path:
        log.info("wrote %s", path)


def cmd_simulate(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.dx is not None:
        cfg = with_grid(cfg, dx=args.dx)
    if args.tau is not None:
        cfg = replace(cfg, tau=args.tau)
    if args.tfinal is not None:
        kept = tuple(t for t in cfg.outputs if t < args.tfinal)
        cfg = replace(cfg, t_final=args.tfinal, outputs=kept + (args.tfinal,))
    result = run(cfg.initial_state(), cfg.grid, cfg.lanes, cfg.coupling, cfg.tau, cfg.t_final, cfg.outputs)
    bundle = OutputBundle.from_run(result, cfg.grid.centers)
    out = Path(args.out)
    for path in write_outputs(bundle, out):
        log.info("wrote %s", path)
    if args.emit_plot_scripts:
        emit_plot_script(out)
    if args.figures:
        from .plotting import density_figures

        density_figures(bundle, out / "figures", [s.R for s in cfg.lanes])
    print(f"{cfg.name}: {result.n_steps} steps to t={result.final.t:.6g}, "
          f"max invariant-domain excursion {result.max_excursion:.3e}")
    return 0


def cmd_relax(args) -> int:
    report = relaxation_study(load_scenario(args.scenario), args.taus, dx=args.dx, t_final=args.tfinal)
    out = Path(args.out)
    write_report(report, out)
    if args.figures:
        _figures(report, out / "figures")
    _print_report(report)
    return 0


def cmd_mb(args) -> int:
    report = mb_comparison_study(args.ic, tau=args.tau, dx=args.dx, t_final=args.tfinal, u=args.u,
                                 window=args.window)
    out = Path(args.out)
    write_report(report, out)
    if args.figures:
        _figures(report, out / "figures")
    _print_report(report)
    return 0


def cmd_converge(args) -> int:
    report = convergence_study(load_scenario(args.scenario), args.dxs, t_final=args.tfinal)
    write_report(report, Path(args.out), with_series=False)
    _print_report(report)
    return 0


def cmd_traces(args) -> int:
    cfg = load_scenario(args.scenario)
    print("av,lane,u,hat_rho")
    for i, av in enumerate(cfg.avs):
        spec = cfg.lanes[av.lane]
        u = av.schedule(0.0)
        print(f"{i + 1},{av.lane + 1},{fmt(u)},{fmt(spec.hat_rho(min(u, spec.V)))}")
    if len(cfg.lanes) == 2 and cfg.lanes[0] == cfg.lanes[1] and cfg.avs:
        tr = mb_traces(LimitSpec(2, cfg.lanes[0]), cfg.avs[0].schedule(0.0))
        print("u,F_half,r_check,r_hat,rho_star,r_star")
        print(",".join(fmt(v) for v in (tr.u, tr.f_alpha, tr.r_check, tr.r_hat, tr.rho_star, tr.r_star)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log written files")
    parser = argparse.ArgumentParser(prog="mlav", description="Multi-lane LWR traffic with moving bottlenecks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write CSV output", parents=[common])
    p.add_argument("--scenario", required=True, help="catalog name or scenario file")
    p.add_argument("--out", required=True)
    p.add_argument("--dx", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--tfinal", type=float)
    p.add_argument("--emit-plot-scripts", action="store_true")
    p.add_argument("--figures", action="store_true", help="render PNG heat maps into OUT/figures")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("relax-study", help="distance to the relaxation limit for several tau", parents=[common])
    p.add_argument("--scenario", required=True)
    p.add_argument("--taus", type=_floats, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dx", type=float)
    p.add_argument("--tfinal", type=float)
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("mb-compare", parents=[common],
                       help="two-lane model with AV vs the scalar moving-bottleneck model")
    p.add_argument("--ic", required=True, choices=[f"ic{k}" for k in range(1, 6)])
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float)
    p.add_argument("--dx", type=float)
    p.add_argument("--tfinal", type=float)
    p.add_argument("--u", type=float)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_mb)

    p = sub.add_parser("converge", help="self-convergence over nested grids", parents=[common])
    p.add_argument("--scenario", required=True)
    p.add_argument("--dxs", type=_floats, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tfinal", type=float)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("traces", help="characteristic densities of a scenario's AVs", parents=[common])
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_traces)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SimulationError, OSError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
