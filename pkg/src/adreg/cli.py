"""Command-line interface: scenario runs, parameter sweeps, identifier
verification, and config validation.

Exit codes: 0 success, 1 config error, 2 integration failure,
3 acceptance-threshold failure (with --assert).
"""

import argparse
import json
import sys

import numpy as np

from .errors import IntegrationBlowupError, InvalidConfigError, InvalidInputError
from .harness import CoreProcessRun, format_report, verify_identifier_requirement
from .hybrid import ClockConfig
from .plant import ExoSpec
from .scenario import ScenarioConfig, run_scenario, run_sweep
from .scenario import build_synthetic_linear_plant, _build_identifier
from .regulator import default_internal_model, InternalModelConfig

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INTEGRATION = 2
EXIT_THRESHOLD = 3


def _load_config(path):
    return ScenarioConfig.from_json(path)


def cmd_simulate(args):
    cfg = _load_config(args.config)
    result = run_scenario(cfg)
    print(json.dumps(result.summary, indent=2, sort_keys=True))
    if args.assert_max_y is not None:
        if result.summary["steady_state_max_y"] > args.assert_max_y:
            print(
                f"steady_state_max_y {result.summary['steady_state_max_y']:.6g} "
                f"exceeds threshold {args.assert_max_y:.6g}",
                file=sys.stderr,
            )
            return EXIT_THRESHOLD
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args.config)
    values = [float(v) for v in args.values.split(",")]
    rows = run_sweep(cfg, args.axis, values)
    print("value,steady_state_max_y,settling_time_s,error")
    for row in rows:
        if "error" in row:
            print(f"{row['value']:.17g},,,{row['error']}")
        else:
            print(
                f"{row['value']:.17g},{row['steady_state_max_y']:.17g},"
                f"{row['settling_time_s']:.17g},"
            )
    return EXIT_OK


def cmd_check_identifier(args):
    """Verify the configured identifier on the synthetic core process."""
    cfg = _load_config(args.config)
    if cfg.identifier.get("kind", "none") == "none":
        raise InvalidConfigError("check-identifier needs an identifier kind != none")
    d_eta = int(cfg.regulator.get("d_eta", 6))
    if "F" in cfg.regulator:
        im = InternalModelConfig(np.asarray(cfg.regulator["F"]),
                                 np.asarray(cfg.regulator["G"]))
    else:
        im = default_internal_model(d_eta)
    rho = float(cfg.plant.get("rho", 2.0))
    plant = build_synthetic_linear_plant(rho, im.F, im.G)
    ident, _ = _build_identifier(cfg.identifier, im.d_eta)
    clock = ClockConfig(
        t_low=float(cfg.clock.get("t_low", 0.1)),
        t_high=float(cfg.clock.get("t_high", 0.1)),
        strategy=cfg.clock.get("strategy", "periodic"),
        period=cfg.clock.get("period"),
        seed=int(cfg.clock.get("seed", 0)),
    )
    run = CoreProcessRun(
        clock=clock,
        exo=ExoSpec(d_w=2, eval_s=plant.eval_s),
        w0=np.asarray(cfg.plant.get("w0", [1.0, 0.0]), dtype=float),
        tau_eval=plant.extras["tau"],
        ustar_eval=plant.extras["ustar"],
    )
    report = verify_identifier_requirement(ident, run, horizon=10.0)
    print(format_report(report))
    ok = report["optimality"] and report["stability"] and report["regularity"]
    return EXIT_OK if ok else EXIT_THRESHOLD


def cmd_validate(args):
    cfg = _load_config(args.config)
    print(f"config ok: {args.config}")
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="adreg",
        description="Adaptive internal-model regulation: scenario runner and sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one closed-loop scenario")
    p.add_argument("config")
    p.add_argument("--assert-max-y", type=float, default=None,
                   help="exit 3 if steady_state_max_y exceeds this threshold")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep ell or the regressor order N")
    p.add_argument("config")
    p.add_argument("--axis", choices=("ell", "N"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check-identifier",
                       help="verify the identifier requirement on a test process")
    p.add_argument("config")
    p.set_defaults(func=cmd_check_identifier)

    p = sub.add_parser("validate", help="validate a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfigError, InvalidInputError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationBlowupError as exc:
        print(f"integration failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION


if __name__ == "__main__":
    sys.exit(main())
