"""Command-line entry point.

Subcommands: ``trial`` (in-silico protocol with report artifacts and
figures), ``safety-mc`` (Monte Carlo check of the safety guarantee),
``cohort`` (screened virtual-patient generation), ``serve`` (HTTP guidance
service). Exit codes: 0 success, 1 configuration problem, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import config as cfgmod
from . import safety_mc as mcmod
from . import trial as trialmod
from .errors import ConfigError, DoseGuideError
from .simulator import cohort_from_text, cohort_to_text, generate_cohort

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="doseguide",
        description="Safe Bayesian-optimization insulin dose guidance",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="override the output directory")

    p_trial = sub.add_parser(
        "trial", parents=[common], help="run the closed-loop in-silico trial"
    )
    p_trial.add_argument("--days", type=int, help="override protocol length")
    p_trial.add_argument("--patients", type=int, help="override cohort size")
    p_trial.add_argument(
        "--workers", type=int, help="parallel patient workers (default: logical cores)"
    )

    p_mc = sub.add_parser(
        "safety-mc", parents=[common], help="Monte Carlo safety verification"
    )
    p_mc.add_argument("--seeds", type=int, help="override the number of sampled truths")
    p_mc.add_argument("--iterations", type=int, help="override iterations per truth")

    p_cohort = sub.add_parser(
        "cohort", parents=[common], help="generate a screened virtual cohort file"
    )
    p_cohort.add_argument("--n", type=int, help="cohort size")
    p_cohort.add_argument("--spread", type=float, help="parameter variability")

    p_serve = sub.add_parser(
        "serve", parents=[common], help="run the HTTP guidance service"
    )
    p_serve.add_argument("--host", help="bind address")
    p_serve.add_argument("--port", type=int, help="bind port")

    return parser


def _load(args, **extra) -> cfgmod.RunConfig:
    cfg = cfgmod.load_config(args.config)
    return cfgmod.apply_overrides(
        cfg, seed=args.seed, out_dir=getattr(args, "out", None), **extra
    )


def _resolve_cohort(cfg: cfgmod.RunConfig):
    if cfg.cohort.file:
        return cohort_from_text(Path(cfg.cohort.file).read_text())
    return generate_cohort(cfg.cohort.n, seed=cfg.seed, variability=cfg.cohort.variability)


def cmd_trial(args) -> int:
    cfg = _load(
        args, days=args.days, patients=args.patients, workers=args.workers
    )
    cohort = _resolve_cohort(cfg)
    workers = cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)
    report = trialmod.run_trial(
        cohort,
        cfg.protocol,
        cfg.advisor,
        cfg.cgm,
        seed=cfg.seed,
        workers=workers,
        metrics_on_cgm=cfg.metrics_on_cgm,
    )

    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "effective_config.yaml").write_text(cfgmod.effective_config_yaml(cfg))
    (outdir / "summary.txt").write_text(trialmod.summary_text(report))
    (outdir / "cohort.params").write_text(cohort_to_text(cohort))
    (outdir / "episodes.csv").write_text(trialmod.episodes_csv(report))
    (outdir / "plotdata.csv").write_text(trialmod.plotdata_csv(report))
    for p in report.patients:
        (outdir / f"patient_{p.index:02d}.csv").write_text(trialmod.patient_csv(p))

    from .figures import render_trial_figures

    render_trial_figures(report, outdir / "figures")
    print(trialmod.summary_text(report), end="")
    print(f"artifacts written to {outdir}")
    return EXIT_OK


def cmd_safety_mc(args) -> int:
    cfg = _load(args, mc_seeds=args.seeds, mc_iterations=args.iterations)
    report = mcmod.run_safety_mc(cfg.safety_mc)

    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "effective_config.yaml").write_text(cfgmod.effective_config_yaml(cfg))
    (outdir / "summary.txt").write_text(mcmod.summary_text(report))
    (outdir / "safety_mc.csv").write_text(mcmod.report_csv(report))

    from .figures import render_safety_mc_figure

    render_safety_mc_figure(report, outdir / "figures")
    print(mcmod.summary_text(report), end="")
    print(f"artifacts written to {outdir}")
    return EXIT_OK


def cmd_cohort(args) -> int:
    cfg = _load(args)
    n = args.n if args.n is not None else cfg.cohort.n
    spread = args.spread if args.spread is not None else cfg.cohort.variability
    cohort = generate_cohort(n, seed=cfg.seed, variability=spread)
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "cohort.params"
    path.write_text(cohort_to_text(cohort))
    print(f"wrote {n} screened patients to {path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load(args)
    host = args.host or cfg.server.host
    port = args.port if args.port is not None else cfg.server.port
    if not (0 <= port <= 65535):
        raise ConfigError("server.port", f"must be in [0, 65535], got {port}")
    app = create_app(cfg)
    print(f"serving on http://{host}:{port} (sessions are in-memory only)")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return EXIT_OK


_COMMANDS = {
    "trial": cmd_trial,
    "safety-mc": cmd_safety_mc,
    "cohort": cmd_cohort,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DoseGuideError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
