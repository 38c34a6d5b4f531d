"""Command-line entry point: ``perchsim {run,montecarlo,fit-weights,pnp-check,kf-demo}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from perchsim.angles import angle_diff_deg
from perchsim.fusion import LmsSample, fit_weights_lms, least_squares_weights
from perchsim.geometry import CameraIntrinsics, RelPose, project_points, solve_pnp
from perchsim.sim.config import InvalidConfig, ScenarioConfig, load_config
from perchsim.sim.montecarlo import monte_carlo
from perchsim.sim.scenario import EXIT_CODES, run_scenario
from perchsim.sim.trace import write_trace

log = logging.getLogger("perchsim")

EXIT_INVALID_CONFIG = 64


def _emit(data: dict) -> None:
    sys.stdout.write(yaml.safe_dump(data, sort_keys=False))


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, seed=args.seed)
    outcome, trace = run_scenario(cfg)
    if args.trace:
        write_trace(trace, args.trace)
    _emit(
        {
            "result": outcome.result.value,
            "final_lateral_error_cm": outcome.final_lateral_error_cm,
            "ticks_elapsed": outcome.ticks_elapsed,
            "perch_attempts_used": outcome.perch_attempts_used,
            "seed": cfg.seed,
        }
    )
    return EXIT_CODES[outcome.result]


def cmd_montecarlo(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    base = args.base_seed if args.base_seed is not None else cfg.seed
    t0 = time.perf_counter()
    summary = monte_carlo(cfg, args.runs, base, workers=args.workers)
    out = summary.as_dict()
    out["base_seed"] = base
    out["wall_time_s"] = round(time.perf_counter() - t0, 3)
    _emit(out)
    return 0


def read_samples(path: str | Path) -> list[LmsSample]:
    """One sample per non-blank line: est_m1, est_m2, truth as ``x y z yaw`` each."""
    samples = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        vals = [float(v) for v in line.replace(",", " ").split()]
        if len(vals) != 12:
            raise ValueError(f"{path}:{lineno}: expected 12 numbers, got {len(vals)}")
        samples.append(LmsSample(RelPose(*vals[0:4]), RelPose(*vals[4:8]), RelPose(*vals[8:12])))
    return samples


def cmd_fit_weights(args: argparse.Namespace) -> int:
    samples = read_samples(args.samples)
    fit = fit_weights_lms(samples, step=args.step, epochs=args.epochs)
    w = fit.weights
    section = {"weights": {"w_x": w.w_x, "w_y": w.w_y, "w_z": w.w_z, "w_psi": w.w_psi}}
    if args.out:
        path = Path(args.out)
        data = yaml.safe_load(path.read_text()) if path.exists() else None
        data = data or {}
        data.update(section)
        path.write_text(yaml.safe_dump(data, sort_keys=False))
    ls = least_squares_weights(samples)
    _emit(
        {
            **section,
            "n_samples": len(samples),
            "initial_cost": fit.initial_cost,
            "final_cost": fit.final_cost,
            "degenerate": list(fit.degenerate),
            "least_squares_oracle": [None if v is None else float(v) for v in ls],
        }
    )
    return 0


def pnp_round_trip(n: int, seed: int, intr: CameraIntrinsics | None = None) -> dict:
    """Noiseless project/solve round trip over random poses with ``z`` in [5, 120] cm."""
    intr = intr or CameraIntrinsics()
    cfg = ScenarioConfig()
    markers = (cfg.target.large, cfg.target.small)
    rng = np.random.default_rng(seed)
    max_t = max_yaw = 0.0
    t0 = time.perf_counter()
    for i in range(n):
        z = rng.uniform(5.0, 120.0)
        x, y = rng.uniform(-0.5, 0.5, 2) * z
        yaw = 180.0 - rng.uniform(0.0, 360.0)  # (-180, 180]
        truth = RelPose(x, y, z, yaw)
        spec = markers[i % 2]
        est = solve_pnp(intr, spec, project_points(intr, truth, spec))
        max_t = max(max_t, abs(est.x - x), abs(est.y - y), abs(est.z - z))
        max_yaw = max(max_yaw, abs(angle_diff_deg(est.yaw, truth.yaw)))
    return {
        "n": n,
        "seed": seed,
        "max_translation_error_cm": max_t,
        "max_yaw_error_deg": max_yaw,
        "runtime_s": time.perf_counter() - t0,
    }


def cmd_pnp_check(args: argparse.Namespace) -> int:
    report = pnp_round_trip(args.n, args.seed)
    report["pass"] = report["max_translation_error_cm"] <= 1e-6 and report["max_yaw_error_deg"] <= 1e-6
    _emit(report)
    return 0 if report["pass"] else 1


def cmd_kf_demo(args: argparse.Namespace) -> int:
    from perchsim.sim.kfdemo import gap_demo

    cfg = load_config(args.config, seed=args.seed)
    result = gap_demo(cfg, gap_start=args.gap_start, gap_ticks=args.gap_ticks, speed=args.speed, ticks=args.ticks)
    if args.out:
        write_trace(result.trace, args.out)
    _emit(result.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perchsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--config", help="YAML scenario file")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--trace", help="write the per-tick trace CSV here")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("montecarlo", help="seeded sweep over randomized starts")
    m.add_argument("--config")
    m.add_argument("--runs", type=int, default=200)
    m.add_argument("--base-seed", "--seed", dest="base_seed", type=int)
    m.add_argument("--workers", type=int, default=1)
    m.set_defaults(func=cmd_montecarlo)

    f = sub.add_parser("fit-weights", help="fit merge weights from a sample table")
    f.add_argument("samples", help="text file, 12 numbers per line")
    f.add_argument("--step", type=float, default=0.01)
    f.add_argument("--epochs", type=int, default=50)
    f.add_argument("--out", help="YAML config to create or update with the fitted weights")
    f.set_defaults(func=cmd_fit_weights)

    c = sub.add_parser("pnp-check", help="noiseless PnP round-trip report")
    c.add_argument("--n", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_pnp_check)

    k = sub.add_parser("kf-demo", help="estimation through an injected detection gap")
    k.add_argument("--config")
    k.add_argument("--seed", type=int)
    k.add_argument("--gap-start", type=int, default=90)
    k.add_argument("--gap-ticks", type=int, default=30)
    k.add_argument("--speed", type=float, default=1.0, help="lateral drift of the drone, cm/s")
    k.add_argument("--ticks", type=int, default=240)
    k.add_argument("--out", help="write the trace CSV here")
    k.set_defaults(func=cmd_kf_demo)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except InvalidConfig as exc:
        log.error("invalid config: %s", exc)
        return EXIT_INVALID_CONFIG


if __name__ == "__main__":
    sys.exit(main())
