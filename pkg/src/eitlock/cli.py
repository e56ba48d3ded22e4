"""Command-line front end: a thin client over the service layer.

Subcommands map one-to-one onto service endpoints; results are written as
CSV artifacts plus a manifest. `serve` starts the HTTP service itself.
Failures print a machine-readable error record to stderr and exit nonzero
(2 for configuration errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .client import ServiceClient
from .errors import ConfigError, EitlockError
from .runner import SUBCOMMANDS, persist_response
from .scenario import (ScenarioConfig, dump_effective_config, load_config,
                       validate_config)

OUTPUT_DIR_ENV = "EITLOCK_OUT"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eitlock",
        description="Simulate locking a laser to an excited-state transition "
                    "via the ladder response of a thermal vapor.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    run_help = {
        "spectrum": "coupling-scan transmission spectrum of the modulated probe",
        "error-signal": "demodulated error signal over a coupling scan",
        "lock": "closed-loop lock simulation with stochastic laser noise",
        "beat": "beat-note linewidth versus averaging time",
        "fit": "synthesize and fit a stationary-ensemble spectrum",
        "validate": "validate a configuration and echo the effective one",
    }
    for name in (*SUBCOMMANDS, "validate"):
        p = sub.add_parser(name, help=run_help[name])
        p.add_argument("--config", metavar="PATH",
                       help="scenario YAML (omit to run the built-in defaults)")
        p.add_argument("--seed", type=int, metavar="U64",
                       help="override the root seed")
        p.add_argument("--out", metavar="DIR",
                       help="output directory (default: env "
                            f"{OUTPUT_DIR_ENV}, then config outputs.dir, "
                            "then ./eitlock-out)")
        p.add_argument("--quiet", action="store_true",
                       help="suppress the summary line")
        p.add_argument("--server", metavar="URL",
                       help="send the request to a running service instead "
                            "of computing in-process")
        p.add_argument("--decimation", type=int, metavar="N",
                       help="keep every Nth sample of emitted time series")

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _load(args) -> ScenarioConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = validate_config(None)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "decimation", None) is not None:
        payload = config.model_dump(mode="json")
        payload["outputs"]["decimation"] = args.decimation
        config = validate_config(payload)
    if overrides:
        payload = config.model_dump(mode="json")
        payload.update(overrides)
        config = validate_config(payload)
    return config


def _outdir(args, config: ScenarioConfig) -> str:
    if args.out:
        return args.out
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return env
    if config.outputs.dir:
        return config.outputs.dir
    return os.path.join(".", "eitlock-out", args.subcommand)


def _emit_error(exc: Exception) -> None:
    record = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    if isinstance(exc, ConfigError):
        record["error"]["violations"] = exc.violations
    print(json.dumps(record), file=sys.stderr)


def _summary(subcommand: str, response, manifest: RunManifest) -> str:
    extra = ""
    if subcommand == "spectrum":
        peaks = ", ".join(f"{p:+.2f}" for p in response.peaks_mhz[:5])
        extra = f"peaks at {peaks} MHz"
    elif subcommand == "error-signal":
        extra = (f"{len(response.crossings)} crossings, carrier slope "
                 + next((f"{c.slope_v_per_mhz * 1e3:.2f} mV/MHz"
                         for c in response.crossings
                         if abs(c.detuning_mhz) < 1), "n/a"))
    elif subcommand == "lock":
        state = "locked" if not response.unlock_events else \
            f"{len(response.unlock_events)} unlock events"
        extra = (f"{state}, linewidth estimate "
                 f"{response.linewidth.value_hz / 1e3:.1f} kHz")
    elif subcommand == "beat":
        if response.estimates:
            e = response.estimates[-1]
            extra = (f"FWHM {e.value_hz / 1e3:.1f} kHz at "
                     f"{e.window_s:.3g} s averaging")
    elif subcommand == "fit":
        extra = (f"converged={response.converged}, linewidth "
                 f"{response.linewidth.value_hz / 1e3:.1f} "
                 f"+/- {response.linewidth.uncertainty_hz / 1e3:.1f} kHz")
    return (f"eitlock {subcommand}: {extra} | digest "
            f"{manifest.config_digest[:12]} | "
            f"{len(manifest.artifacts)} artifacts")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.subcommand == "serve":
        import uvicorn

        from .service import app
        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    try:
        config = _load(args)
    except (ConfigError, OSError) as exc:
        _emit_error(exc)
        return 2

    try:
        with ServiceClient(base_url=args.server) as client:
            t0 = time.monotonic()
            response = client.run(args.subcommand, config)
            elapsed = time.monotonic() - t0
        if args.subcommand == "validate":
            if not args.quiet:
                print(dump_effective_config(response.effective_config), end="")
                print(f"# digest {response.config_digest}")
            return 0
        outdir = _outdir(args, config)
        manifest = persist_response(response, config, outdir,
                                    compute_time=elapsed)
        if not args.quiet:
            print(_summary(args.subcommand, response, manifest))
            print(f"wrote {outdir}")
        return 0
    except ConfigError as exc:
        _emit_error(exc)
        return 2
    except EitlockError as exc:
        _emit_error(exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
