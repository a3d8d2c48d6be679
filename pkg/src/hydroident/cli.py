"""Command line front end; a thin client over the HTTP service.

By default every subcommand runs the service in process, so no server is
needed. --server http://host:port sends the same requests to a remote
instance instead. Exit codes: 0 success, 1 usage error, 2 data error
(parse or validation), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .client import ServiceClient, ServiceError
from .dynamics import DEFAULT_DT
from .errors import DataError, NumericalError, ParseError
from .schemas import TrajectoryPayload, payload_to_trajectory, trajectory_to_payload
from .trajectory import load_calibration, load_trajectory, save_trajectory


class UsageError(Exception):
    pass


MODEL_SCHEMA = """\
model JSON: {schema_version, base_pose: [x, y, theta], links: [{length,
  com_offset, mass, inertia_com, semi_axes: [rx, ry, rz], overlap_radius}],
  joints: [{damping, friction_loss, limits?}], actuators: [{joint_index,
  kind: none|velocity_servo, kv, force_range: [min, max], schedule:
  [[t_start, t_end, v_ref], ...]}], fluid: {density, viscosity, gravity},
  initial_state: {q, qdot}}. SI units, radians. An optional capture
  {duration, sample_rate} block supplies --duration / --rate defaults."""
COEFFS_SCHEMA = """\
coeffs JSON: {schema_version, per_link_coeffs: [[c0..c4] per link]}.
  An identify result JSON is accepted anywhere a coeffs file is."""
TRAJ_SCHEMA = """\
trajectory CSV: header t,P0x,P0y,P1x,P1y,...; one row per sample with
  strictly increasing times; coordinates in meters (or pixels + --calib)."""
RESULT_SCHEMA = """\
result JSON: {schema_version, best_x, per_link_coeffs, best_loss,
  normalized_error, eval_count, stop_reason, wall_time_s, joint_params?}."""
HISTORY_SCHEMA = "history CSV: header generation,evals,best,median."
SCORE_SCHEMA = """\
score JSON: {schema_version, trajectory_mse, normalized_error,
  per_keypoint_error}."""
CALIB_SCHEMA = "calibration JSON: {meters_per_pixel, origin_px: [x, y], flip_y}."


class _Formatter(argparse.ArgumentDefaultsHelpFormatter,
                 argparse.RawDescriptionHelpFormatter):
    pass


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _epilog(*blocks) -> str:
    return "file schemas:\n" + "\n".join(blocks)


def build_parser() -> _Parser:
    parser = _Parser(prog="hydroident",
                     description="Simulate and identify planar articulated "
                                 "mechanisms under a five-coefficient "
                                 "hydrodynamic force model.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p):
        p.add_argument("--model", required=True,
                       help="mechanism config JSON")
        p.add_argument("--server", default=None, metavar="URL",
                       help="send requests to a running service instead of "
                            "executing in process")

    p = sub.add_parser("simulate", formatter_class=_Formatter,
                       help="simulate a mechanism and write keypoint tracks",
                       epilog=_epilog(MODEL_SCHEMA, COEFFS_SCHEMA, TRAJ_SCHEMA))
    common(p)
    p.add_argument("--coeffs", required=True, help="coefficient JSON")
    p.add_argument("--duration", type=float, default=None,
                   help="simulated seconds (default: model capture block)")
    p.add_argument("--dt", type=float, default=DEFAULT_DT,
                   help="integrator step in seconds")
    p.add_argument("--rate", type=float, default=None,
                   help="samples per second (default: model capture block)")
    p.add_argument("--out", required=True, help="output trajectory CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", formatter_class=_Formatter,
                       help="fit coefficients to a recorded trajectory",
                       epilog=_epilog(MODEL_SCHEMA, TRAJ_SCHEMA, CALIB_SCHEMA,
                                      RESULT_SCHEMA, HISTORY_SCHEMA))
    common(p)
    p.add_argument("--target", required=True, help="target trajectory CSV")
    p.add_argument("--calib", default=None,
                   help="pixel-to-world calibration JSON for the target")
    p.add_argument("--max-evals", type=int, default=5000,
                   help="simulation budget")
    p.add_argument("--sigma0", type=float, default=1.0,
                   help="initial search step size")
    p.add_argument("--seed", type=int, default=0, help="search seed")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel candidate evaluations")
    p.add_argument("--dt", type=float, default=DEFAULT_DT,
                   help="integrator step used for candidate simulations")
    p.add_argument("--out", required=True, help="output result JSON")
    p.add_argument("--history", default=None,
                   help="optional per-generation loss CSV")
    p.add_argument("--include-joint-params", action="store_true",
                   help="also identify per-joint damping and friction")
    p.add_argument("--loss-keypoints", default=None, metavar="P1,P2,P3",
                   help="restrict the loss to these keypoint labels")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("evaluate", formatter_class=_Formatter,
                       help="score coefficients against a trajectory",
                       epilog=_epilog(MODEL_SCHEMA, COEFFS_SCHEMA, TRAJ_SCHEMA,
                                      SCORE_SCHEMA))
    common(p)
    p.add_argument("--coeffs", required=True, help="coefficient JSON")
    p.add_argument("--target", required=True, help="target trajectory CSV")
    p.add_argument("--out", required=True, help="output score JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", formatter_class=_Formatter,
                       help="generate a synthetic target with optional noise",
                       epilog=_epilog(MODEL_SCHEMA, COEFFS_SCHEMA, TRAJ_SCHEMA))
    common(p)
    p.add_argument("--coeffs", required=True, help="coefficient JSON")
    p.add_argument("--duration", type=float, default=None,
                   help="simulated seconds (default: model capture block)")
    p.add_argument("--rate", type=float, default=None,
                   help="samples per second (default: model capture block)")
    p.add_argument("--noise-std", type=float, default=0.0,
                   help="keypoint noise standard deviation in meters")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--dt", type=float, default=DEFAULT_DT,
                   help="integrator step in seconds")
    p.add_argument("--out", required=True, help="output trajectory CSV")
    p.set_defaults(func=cmd_synth)

    return parser


def _read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return doc


def _write_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_history(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("generation,evals,best,median\n")
        for gen, evals, best, median in rows:
            fh.write(f"{int(gen)},{int(evals)},{best:.17g},{median:.17g}\n")


def _capture_value(args, model_doc: dict, attr: str, flag: str) -> float:
    value = getattr(args, attr)
    if value is not None:
        return value
    capture = model_doc.get("capture") or {}
    key = {"duration": "duration", "rate": "sample_rate"}[attr]
    if key in capture:
        return float(capture[key])
    raise UsageError(f"{flag} not given and {args.model} has no capture.{key}")


def _save_payload_csv(payload: dict, path) -> None:
    traj = payload_to_trajectory(TrajectoryPayload(**payload))
    save_trajectory(traj, path)


def cmd_simulate(args) -> int:
    model_doc = _read_json(args.model)
    coeffs_doc = _read_json(args.coeffs)
    duration = _capture_value(args, model_doc, "duration", "--duration")
    rate = _capture_value(args, model_doc, "rate", "--rate")
    with ServiceClient(args.server) as client:
        payload = client.simulate(model_doc, coeffs_doc, duration, rate,
                                  args.dt)
    _save_payload_csv(payload, args.out)
    return 0


def cmd_synth(args) -> int:
    model_doc = _read_json(args.model)
    coeffs_doc = _read_json(args.coeffs)
    duration = _capture_value(args, model_doc, "duration", "--duration")
    rate = _capture_value(args, model_doc, "rate", "--rate")
    with ServiceClient(args.server) as client:
        payload = client.synth(model_doc, coeffs_doc, duration, rate,
                               args.noise_std, args.seed, args.dt)
    _save_payload_csv(payload, args.out)
    return 0


def _parse_keypoints(raw):
    if raw is None:
        return None
    labels = [part.strip() for part in raw.split(",") if part.strip()]
    if not labels:
        raise UsageError("--loss-keypoints needs at least one label")
    return labels


def cmd_identify(args) -> int:
    model_doc = _read_json(args.model)
    calib = load_calibration(args.calib) if args.calib else None
    target = load_trajectory(args.target, calib)
    payload = trajectory_to_payload(target).model_dump()
    with ServiceClient(args.server) as client:
        resp = client.identify(
            model_doc, payload, max_evals=args.max_evals, sigma0=args.sigma0,
            seed=args.seed, workers=args.workers, dt=args.dt,
            include_joint_params=args.include_joint_params,
            loss_keypoints=_parse_keypoints(args.loss_keypoints))
    _write_json(resp["result"], args.out)
    if args.history is not None:
        _write_history(resp["history"], args.history)
    return 0


def cmd_evaluate(args) -> int:
    model_doc = _read_json(args.model)
    coeffs_doc = _read_json(args.coeffs)
    target = load_trajectory(args.target)
    payload = trajectory_to_payload(target).model_dump()
    with ServiceClient(args.server) as client:
        score = client.evaluate(model_doc, coeffs_doc, payload)
    _write_json(score, args.out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hydroident: error: {exc}", file=sys.stderr)
        return 1
    except ServiceError as exc:
        print(f"hydroident: error: {exc}", file=sys.stderr)
        return 2 if exc.error_type == "data" else 3
    except NumericalError as exc:
        print(f"hydroident: error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"hydroident: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"hydroident: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
