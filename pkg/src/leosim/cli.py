"""Command-line interface.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import sys

from .cells import slant_range_km
from .config import SimConfig, load_config, resolve, serialize
from .linkbudget import noise_power, path_loss
from .orbits import ConfigurationError


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leosim",
                                description="LEO mega-constellation system-level simulator")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a config file and echo the resolved form")
    v.add_argument("config")

    r = sub.add_parser("run", help="full simulation run")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default="run_out")
    r.add_argument("--snapshots", type=int, default=None)
    r.add_argument("--workers", type=int, default=1)

    rep = sub.add_parser("report", help="regenerate the KPI report from persisted logs")
    rep.add_argument("run_dir")

    lb = sub.add_parser("linkbudget", help="single-point link budget calculator")
    lb.add_argument("--elev", type=float, required=True, help="elevation angle (deg)")
    lb.add_argument("--freq", type=float, default=None, help="carrier frequency (GHz)")
    lb.add_argument("--alt", type=float, default=None, help="satellite altitude (km)")
    lb.add_argument("--beam", choices=("service", "broadcast"), default="service")

    c = sub.add_parser("coverage", help="geometry-only N-asset coverage run")
    c.add_argument("config")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--out", default="coverage_out")
    c.add_argument("--snapshots", type=int, default=None)
    c.add_argument("--workers", type=int, default=1)
    return p


def _load_with_overrides(path, seed=None, snapshots=None) -> SimConfig:
    cfg = load_config(path)
    values = dict(cfg.values)
    if seed is not None:
        values["run.master_seed"] = seed
    if snapshots is not None:
        old = cfg.plan
        values["time.snapshot_count"] = snapshots
        values["time.total_duration_s"] = snapshots * old.snapshot_duration_s
    return resolve(values)


def _cmd_linkbudget(args) -> int:
    cfg = resolve({})
    freq = args.freq if args.freq is not None else cfg["link.carrier_frequency_ghz"]
    alt = args.alt if args.alt is not None else cfg["walker.altitude_km"]
    if not -90.0 <= args.elev <= 90.0:
        raise ConfigurationError("elevation must be in [-90, 90] degrees")
    params = cfg.link_params
    arr = cfg.array_config(args.beam)
    d_km = slant_range_km(alt, args.elev)
    fspl = path_loss(d_km, freq)
    total_pl = fspl + params.extra_loss_db
    # beam steered at the ground point: off-nadir angle from the satellite
    from .constants import R_EARTH_KM
    sin_theta = R_EARTH_KM * math.cos(math.radians(args.elev)) / (R_EARTH_KM + alt)
    from .linkbudget import element_gain_db
    scan = float(element_gain_db(math.sqrt(max(0.0, 1 - sin_theta ** 2)), arr)
                 - element_gain_db(1.0, arr))
    eirp = (arr.boresight_eirp_density_dbw_mhz
            + 10.0 * math.log10(params.system_bandwidth_mhz) + scan)
    n0 = noise_power(params.noise_temperature_k, params.system_bandwidth_mhz)
    rx = eirp + params.ue_rx_gain_dbi - total_pl
    print(f"elevation_deg      {args.elev:.2f}")
    print(f"slant_range_km     {d_km:.2f}")
    print(f"fspl_db            {fspl:.2f}")
    print(f"extra_loss_db      {params.extra_loss_db:.2f}")
    print(f"eirp_dbw           {eirp:.2f}")
    print(f"rx_power_dbw       {rx:.2f}")
    print(f"noise_dbw          {n0:.2f}")
    print(f"snr_db             {rx - n0:.2f}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            sys.stdout.write(serialize(cfg))
            return 0
        if args.command == "linkbudget":
            return _cmd_linkbudget(args)
        if args.command == "run":
            from .engine import run
            cfg = _load_with_overrides(args.config, args.seed, args.snapshots)
            manifest = run(cfg, args.out, workers=args.workers)
            print(f"run complete: {args.out} ({len(manifest.file_checksums)} files)")
            return 0
        if args.command == "coverage":
            from .engine import coverage_run
            cfg = _load_with_overrides(args.config, args.seed, args.snapshots)
            manifest = coverage_run(cfg, args.out, workers=args.workers)
            print(f"coverage run complete: {args.out}")
            return 0
        if args.command == "report":
            from .engine import regenerate_report
            regenerate_report(args.run_dir)
            print(f"report regenerated in {args.run_dir}")
            return 0
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
