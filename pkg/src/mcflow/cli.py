"""Command line front end.

Exit codes: 0 success (including a clean extinction), 1 a check failed,
2 bad configuration or input, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    RadiusLaw,
    compare_to_law,
    random_lipschitz_field,
    redistance_oracle_violations,
    strip_equivalence,
)
from .errors import McflowError
from .grid import GridGeometry, disk_mask
from .io import field_to_pgm, file_digest, load_mask, read_field_csv, write_field_csv
from .kernels import KernelReport, kernel_from_spec, validate_kernel
from .redistance import RedistanceConfig, redistance
from .scheme import SchemeConfig, run

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

_VARIANT_ALIASES = {"plus": "plus", "minus": "minus", "avg": "average",
                    "average": "average", "split": "split"}


class ConfigError(Exception):
    pass


def _positive(text):
    val = float(text)
    if not val > 0 or not math.isfinite(val):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return val


def _nonneg(text):
    val = float(text)
    if val < 0 or not math.isfinite(val):
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return val


def _add_redistance_args(p):
    p.add_argument("--redistance", default="plus", choices=sorted(_VARIANT_ALIASES),
                   help="redistancing variant (default plus)")
    p.add_argument("--strip", type=_positive, default=None, metavar="M",
                   help="restrict sources to strips of width M (length units)")
    p.add_argument("--dbar", type=_positive, default=None,
                   help="saturation level (default 30 cells)")


def _add_kernel_args(p, default="explicit"):
    p.add_argument("--kernel", default=default,
                   help="builtin name (explicit, implicit, heat) or JSON spec file/text")
    p.add_argument("--theta", type=float, default=1.0, help="explicit kernel CFL fraction")
    p.add_argument("--tau", type=_positive, default=None, help="spectral kernel time step")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mcflow {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap on worker threads used inside the operators")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="evolve a mask and write the trace")
    p.add_argument("--mask", required=True, help="PGM or 0/1 text mask")
    p.add_argument("--spacing", type=_positive, default=1.0)
    _add_kernel_args(p)
    _add_redistance_args(p)
    p.add_argument("--gamma-cap", type=_positive, default=15.0,
                   help="distance cap of the nonlinear scheme (<= 15)")
    p.add_argument("--scheme", default="linear", choices=["linear", "nonlinear", "multiphase"])
    stop = p.add_mutually_exclusive_group()
    stop.add_argument("--T", type=_nonneg, default=None, dest="final_time")
    stop.add_argument("--steps", type=int, default=None)
    p.add_argument("--snap-every", type=int, default=0)
    p.add_argument("--check-lipschitz", action="store_true",
                   help="run the Lipschitz check on every iterate")
    p.add_argument("--debug", action="store_true",
                   help="assert the discrete sub/supersolution inequalities")
    p.add_argument("--out", required=True)

    p = sub.add_parser("validate-kernel", help="print the kernel report as JSON")
    _add_kernel_args(p)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--size", type=int, default=64, help="box extent per axis")
    p.add_argument("--spacing", type=_positive, default=1.0)
    p.add_argument("--out", default=None, help="directory for the manifest")

    p = sub.add_parser("redistance", help="redistance a field CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True, help="output field CSV")
    p.add_argument("--spacing", type=_positive, default=1.0)
    _add_redistance_args(p)

    p = sub.add_parser("benchmark-disk", help="disk runs compared with the exact law")
    p.add_argument("--R", type=float, default=50.0)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--kernels", default="explicit",
                   help="comma list: explicit, implicit, heat")
    p.add_argument("--tau", default="5,10,20", help="comma list of spectral time steps")
    p.add_argument("--theta", type=float, default=1.0)
    _add_redistance_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="quick self-checks of kernels and redistancing")
    p.add_argument("--fields", type=int, default=20)
    p.add_argument("--out", default=None)
    return parser


def _rcfg(args, cap=15.0) -> RedistanceConfig:
    return RedistanceConfig(_VARIANT_ALIASES[args.redistance], args.strip, args.dbar, cap)


def _write_manifest(out_dir, payload) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    return str(obj)


def _kernel(args, geom):
    spec = args.kernel
    if spec in ("explicit", "implicit", "heat"):
        spec = {"type": spec, "theta": args.theta, "tau": args.tau}
    elif not spec.lstrip().startswith("{") and not Path(spec).exists():
        raise ConfigError(f"kernel spec not found: {spec}")
    try:
        return kernel_from_spec(spec, geom)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad kernel spec: {exc}") from exc


def cmd_evolve(args) -> int:
    mask_path = Path(args.mask)
    if not mask_path.exists():
        raise ConfigError(f"mask file not found: {mask_path}")
    try:
        mask = load_mask(mask_path, args.spacing)
        rcfg = _rcfg(args, args.gamma_cap)
        kernel = _kernel(args, mask.geometry)
        cfg = SchemeConfig(kernel=kernel, redistance=rcfg, final_time=args.final_time,
                           max_steps=args.steps, snapshot_every=args.snap_every,
                           variant=args.scheme, check_lipschitz=args.check_lipschitz,
                           debug=args.debug)
    except McflowError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = validate_kernel(kernel)
    t0 = time.perf_counter()
    trace = run(mask, cfg)
    wall = time.perf_counter() - t0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.csv").write_text(trace.to_csv(), newline="\n")
    if trace.snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        from .grid import ScalarField
        for step, fields in sorted(trace.snapshots.items()):
            for l, vals in enumerate(fields):
                f = ScalarField(mask.geometry, vals, rcfg.saturation)
                stem = f"step{step:06d}" + (f"_phase{l}" if len(fields) > 1 else "")
                write_field_csv(snap_dir / f"{stem}.csv", f)
                if mask.geometry.dim == 2:
                    field_to_pgm(snap_dir / f"{stem}.pgm", f)
    manifest = {
        "command": "evolve",
        "config": {
            "mask": str(mask_path), "spacing": args.spacing, "kernel": args.kernel,
            "theta": args.theta, "tau": args.tau, "scheme": args.scheme,
            "redistance": asdict(rcfg), "final_time": args.final_time, "steps": args.steps,
            "snap_every": args.snap_every,
        },
        "kernel_report": report.to_dict(),
        "warnings": [str(w.message) for w in caught],
        "inputs": {str(mask_path): file_digest(mask_path)},
        "trace": trace.summary(),
        "timings": {**trace.timings, "wall": wall},
    }
    path = _write_manifest(out, manifest)
    errored = any(e["event"] == "error" for e in trace.events)
    last = trace.records[-1]
    status = "extinct" if trace.extinction_step is not None else ("error" if errored else "done")
    print(f"evolve: {status} after {last.step} steps (t={last.time:g}), "
          f"radius {last.radius:.4g}; manifest {path}")
    return EXIT_RUNTIME if errored else EXIT_OK


def cmd_validate_kernel(args) -> int:
    if args.dim < 1 or args.size < 3:
        raise ConfigError("need --dim >= 1 and --size >= 3")
    geom = GridGeometry((args.size,) * args.dim, args.spacing)
    kernel = _kernel(args, geom)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report: KernelReport = validate_kernel(kernel)
    print(json.dumps(report.to_dict(), indent=2, default=_json_default))
    tail = ""
    if args.out:
        tail = f"; manifest {_write_manifest(args.out, {'command': 'validate-kernel', 'report': report.to_dict()})}"
    verdict = "pass" if report.ok else "FAIL"
    print(f"validate-kernel: {report.name} {verdict}, h={report.derived_h:g}{tail}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_redistance(args) -> int:
    src = Path(args.infile)
    if not src.exists():
        raise ConfigError(f"field file not found: {src}")
    try:
        field = read_field_csv(src, args.spacing, args.dbar)
        rcfg = _rcfg(args)
        out = redistance(field, rcfg, check=True)
    except McflowError as exc:
        print(f"redistance: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if "one_phase_empty" in out.flags:
        print("redistance: warning: one sign class is empty, output saturated", file=sys.stderr)
    write_field_csv(args.out, out)
    manifest = _write_manifest(Path(args.out).parent, {
        "command": "redistance", "inputs": {str(src): file_digest(src)},
        "config": asdict(rcfg), "flags": sorted(out.flags),
    })
    print(f"redistance: {rcfg.variant} on {field.geometry.shape}, wrote {args.out}; "
          f"manifest {manifest}")
    return EXIT_OK


def cmd_benchmark_disk(args) -> int:
    if not args.R > 0:
        raise ConfigError(f"--R must be positive, got {args.R}")
    if args.size < 2 * args.R + 3:
        raise ConfigError(f"--size {args.size} too small for a disk of radius {args.R}")
    kernels = [k.strip() for k in args.kernels.split(",") if k.strip()]
    bad = [k for k in kernels if k not in ("explicit", "implicit", "heat")]
    if bad:
        raise ConfigError(f"unknown kernels: {bad}")
    try:
        taus = [float(t) for t in args.tau.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --tau list: {exc}") from exc
    geom = GridGeometry((args.size, args.size))
    mask = disk_mask(geom, args.R)
    law = RadiusLaw(args.R, 2)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for name in kernels:
        for tau in ([None] if name == "explicit" else taus):
            cfg = SchemeConfig(kernel=name, theta=args.theta, tau=tau, redistance=_rcfg(args),
                               check_lipschitz=False)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                t0 = time.perf_counter()
                trace = run(mask, cfg)
                wall = time.perf_counter() - t0
            cmp = compare_to_law(trace, law, geom.spacing)
            tag = name if tau is None else f"{name}_h{tau:g}"
            (out / f"trace_{tag}.csv").write_text(trace.to_csv(), newline="\n")
            rec = {"run": tag, "h": trace.h, "extinction_step": trace.extinction_step,
                   **cmp.to_dict(), "status": "pass" if cmp.ok else "degraded",
                   "wall": wall}
            results.append(rec)
    report = out / "report.json"
    report.write_text(json.dumps(results, indent=2, default=_json_default) + "\n")
    manifest = _write_manifest(out, {"command": "benchmark-disk", "config": vars(args),
                                     "results": results})
    summary = ", ".join(f"{r['run']}: ext {r['extinction_time']} ({r['status']})" for r in results)
    print(f"benchmark-disk: {summary}; manifest {manifest}")
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = {}
    geom = GridGeometry((64, 64))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, spec in (("explicit", {"type": "explicit", "theta": 1.0}),
                           ("implicit", {"type": "implicit", "tau": 5.0}),
                           ("heat", {"type": "heat", "tau": 1.0})):
            checks[f"kernel_{name}"] = validate_kernel(kernel_from_spec(spec, geom)).ok
    small = GridGeometry((32, 32))
    viol = 0
    for seed in range(args.fields):
        n, _ = redistance_oracle_violations(random_lipschitz_field(small, seed))
        viol += n
    checks["redistance_oracle"] = viol == 0
    strip_bad = 0
    for seed in range(max(1, args.fields // 4)):
        for c in strip_equivalence(random_lipschitz_field(small, 1000 + seed), [5, 10, 20]):
            strip_bad += c.violations_one + c.violations_two
    checks["strip_bounds"] = strip_bad == 0
    ok = all(checks.values())
    tail = ""
    if args.out:
        tail = f"; manifest {_write_manifest(args.out, {'command': 'verify', 'checks': checks})}"
    for k, v in checks.items():
        print(f"{k}: {'pass' if v else 'FAIL'}")
    print(f"verify: {sum(checks.values())}/{len(checks)} checks passed{tail}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "evolve": cmd_evolve,
    "validate-kernel": cmd_validate_kernel,
    "redistance": cmd_redistance,
    "benchmark-disk": cmd_benchmark_disk,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.threads is not None:
        import numba

        if args.threads < 1:
            print("mcflow: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"mcflow {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"mcflow {args.command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
