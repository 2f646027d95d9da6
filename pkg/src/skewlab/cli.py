"""Batch front-end: certify, forge, cascade, analyze, export.

Exit codes: 0 success, 1 failed certification or verification, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, RunConfig
from .control import certify_controlled
from .measures import (
    Partition,
    TestFunctionSet,
    cascade_diagnostics,
    orbit_measure,
    write_diagnostics_csv,
)
from .orbits import (
    ForgeError,
    Neighborhood,
    PeriodicOrbit,
    ShadowReport,
    cascade,
    forge,
    seed_orbit,
    verify_forge,
)
from .symbolic import CylinderSpec, word_array

log = logging.getLogger("skewlab")

MANIFEST = "manifest.json"
CONFIG_COPY = "config.toml"


# --- file helpers -----------------------------------------------------------------


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load(path: Path):
    return json.loads(path.read_text())


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, cfg: RunConfig, step: str, status: str, timings: dict) -> None:
    """Merge this step into the manifest and re-hash every file in the output directory."""
    path = out / MANIFEST
    old = _load(path) if path.exists() else {}
    if old.get("config_sha256") != cfg.digest():
        old = {}
    steps = dict(old.get("steps", {}))
    steps[step] = status
    times = dict(old.get("timings", {}))
    times.update(timings)
    files = {p.name: _sha256(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != MANIFEST}
    _dump(
        path,
        {
            "tool": "skewlab",
            "version": __version__,
            "config_sha256": cfg.digest(),
            "seed": cfg.seed,
            "steps": steps,
            "files": files,
            "timings": times,
        },
    )


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_COPY).write_text(cfg.to_toml(with_out=False))
    return out


# --- subcommands -----------------------------------------------------------------------


def cmd_certify(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg)
    t0 = time.perf_counter()
    sys_ = cfg.build_system()
    c = cfg.certify
    cert = certify_controlled(
        sys_, cfg.constants, cfg.seed, c.holder_samples, c.m_max, c.trials, c.completions, c.seed_word
    )
    _dump(out / "certificate.json", cert)
    status = "pass" if cert["passed"] else "fail: " + ",".join(cert["failed"])
    log.info("certify: %s", status)
    _write_manifest(out, cfg, "certify", status, {"certify": time.perf_counter() - t0})
    return 0 if cert["passed"] else 1


def cmd_forge(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg)
    t0 = time.perf_counter()
    sys_ = cfg.build_system()
    X = PeriodicOrbit.from_json(_load(Path(args.orbit))) if args.orbit else seed_orbit(sys_, cfg.cascade.seed_word)
    try:
        U = Neighborhood(CylinderSpec(args.cylinder, args.start_index), args.center, args.radius)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    eps = args.eps if args.eps is not None else cfg.constants.delta2 / 2
    try:
        Y, rep = forge(sys_, X, U, eps, cfg.constants, cfg.forge)
    except (ForgeError, ValueError) as e:
        log.error("forge failed: %s", e)
        _write_manifest(out, cfg, "forge", f"fail: {e}", {"forge": time.perf_counter() - t0})
        return 1
    v = verify_forge(sys_, X, Y, rep, cfg.constants, [U])
    i = args.index
    _dump(out / f"orbit_{i}.json", Y.to_json())
    _dump(out / f"shadow_{i}.json", {**rep.to_json(), "verdict": v.to_json(), "neighborhoods": [U.to_json()]})
    status = "pass" if v.passed else "fail: " + ",".join(v.failed())
    log.info("forge: period %d, lambda %.6g, kappa %.4f, %s", Y.period, Y.exponent, rep.kappa, status)
    _write_manifest(out, cfg, "forge", status, {"forge": time.perf_counter() - t0})
    return 0 if v.passed else 1


def _partition(cfg: RunConfig) -> Partition:
    return Partition(cfg.cascade.base_depth, cfg.cascade.arcs)


def cmd_cascade(cfg: RunConfig, args) -> int:
    out = _prepare_out(cfg)
    t0 = time.perf_counter()
    sys_ = cfg.build_system()
    cells = cfg.cascade.neighborhoods()
    try:
        C = cascade(
            sys_,
            cells,
            cfg.cascade.stages,
            cfg.constants,
            cfg.cascade.eps0,
            seed_orbit(sys_, cfg.cascade.seed_word),
            cfg.forge,
        )
    except (ForgeError, ValueError) as e:
        log.error("cascade failed: %s", e)
        _write_manifest(out, cfg, "cascade", f"fail: {e}", {"cascade": time.perf_counter() - t0})
        return 1
    t1 = time.perf_counter()
    ok = True
    for i, Y in enumerate(C.orbits, start=1):
        _dump(out / f"orbit_{i}.json", Y.to_json())
    for i, rep in enumerate(C.reports, start=2):
        U = C.assignments[i - 1]
        v = verify_forge(sys_, C.orbits[i - 2], C.orbits[i - 1], rep, cfg.constants, U)
        ok &= v.passed
        log.info("stage %d: period %d, lambda %.6g, kappa %.4f, verify %s", i, C.orbits[i - 1].period,
                 C.orbits[i - 1].exponent, rep.kappa, "pass" if v.passed else v.failed())
        _dump(out / f"shadow_{i}.json", {**rep.to_json(), "verdict": v.to_json(), "neighborhoods": [u.to_json() for u in U]})
    diag = cascade_diagnostics(
        sys_, C.orbits, [None] + [r.kappa for r in C.reports], _partition(cfg), TestFunctionSet(), C.assignments
    )
    write_diagnostics_csv(diag["rows"], out / "diagnostics.csv")
    _dump(out / "neighborhood_masses.json", diag["neighborhood_masses"])
    status = "pass" if ok else "fail: verification"
    _write_manifest(out, cfg, "cascade", status, {"cascade": t1 - t0, "verify": time.perf_counter() - t1})
    return 0 if ok else 1


def _stored_stages(out: Path) -> int:
    n = 0
    while (out / f"orbit_{n + 1}.json").exists():
        n += 1
    return n


def cmd_analyze(cfg: RunConfig, args) -> int:
    """Re-derive every invariant from the raw orbit words and the system spec."""
    out = Path(cfg.out)
    sys_ = cfg.build_system()
    n = _stored_stages(out)
    if n == 0:
        log.error("no orbit files in %s", out)
        return 1
    violations = []
    orbits = []
    for i in range(1, n + 1):
        d = _load(out / f"orbit_{i}.json")
        try:
            Y = PeriodicOrbit(d["word"], float(d["fiber_x"]), 0.0)
        except (KeyError, ValueError) as e:
            violations.append(f"orbit_{i}: {e}")
            continue
        xs, x_end, logd = sys_.word_orbit(word_array(Y.word), Y.fiber_x)
        Y = PeriodicOrbit(Y.word, Y.fiber_x, float(logd))
        gap = abs(((x_end - Y.fiber_x) + 0.5) % 1.0 - 0.5)
        if gap > 1e-10:
            violations.append(f"orbit_{i}: fiber point is not periodic (gap {gap:.3g})")
        if "lambda" in d and abs(float(d["lambda"]) - Y.exponent) > 1e-9:
            violations.append(f"orbit_{i}: stored lambda {d['lambda']} differs from recomputed {Y.exponent}")
        if not Y.exponent < 0:
            violations.append(f"orbit_{i}: not attracting")
        orbits.append(Y)
    if violations:
        for v in violations:
            log.error(v)
        return 1

    kappas: list = [None]
    assignments: list = [[]]
    for i in range(2, n + 1):
        path = out / f"shadow_{i}.json"
        if not path.exists():
            violations.append(f"shadow_{i}.json missing")
            kappas.append(None)
            assignments.append([])
            continue
        d = _load(path)
        rep = ShadowReport.from_json(d)
        U = [Neighborhood.from_json(u) for u in d.get("neighborhoods", [])]
        v = verify_forge(sys_, orbits[i - 2], orbits[i - 1], rep, cfg.constants, U)
        if not v.passed:
            violations.append(f"stage {i}: " + ",".join(v.failed()))
        kappas.append(rep.tilde.size / orbits[i - 1].period)
        assignments.append(U)

    diag = cascade_diagnostics(sys_, orbits, kappas, _partition(cfg), TestFunctionSet(), assignments)
    for r, Y in zip(diag["rows"], orbits):
        if abs(r["lambda"] - Y.exponent) > 1e-9:
            violations.append(f"stage {r['stage']}: Birkhoff integral {r['lambda']} vs exponent {Y.exponent}")
    for m in diag["neighborhood_masses"]:
        if m["min_mass"] is not None and not m["min_mass"] > 0:
            violations.append(f"neighbourhood {m['neighborhood']} of stage {m['stage']} loses its mass")
    _dump(
        out / "analysis.json",
        {"stages": n, "rows": diag["rows"], "violations": violations, "passed": not violations},
    )
    for v in violations:
        log.error(v)
    log.info("analyze: %d stages, %d violations", n, len(violations))
    return 0 if not violations else 1


def cmd_export(cfg: RunConfig, args) -> int:
    out = Path(cfg.out)
    sys_ = cfg.build_system()
    n = _stored_stages(out)
    if n == 0:
        log.error("no orbit files in %s", out)
        return 1
    orbits = [PeriodicOrbit.from_json(_load(out / f"orbit_{i}.json")) for i in range(1, n + 1)]
    kappas = [None] + [
        _load(out / f"shadow_{i}.json")["kappa"] if (out / f"shadow_{i}.json").exists() else None for i in range(2, n + 1)
    ]
    for i, Y in enumerate(orbits, start=1):
        if args.max_period is not None and Y.period > args.max_period:
            continue
        orbit_measure(Y, sys_).to_csv(out / f"measure_{i}.csv", word_labels={0: f"orbit_{i}"})
    diag = cascade_diagnostics(sys_, orbits, kappas, _partition(cfg))
    write_diagnostics_csv(diag["rows"], out / "diagnostics.csv")
    _write_manifest(out, cfg, "export", "pass", {})
    return 0


COMMANDS = {
    "certify": cmd_certify,
    "forge": cmd_forge,
    "cascade": cmd_cascade,
    "analyze": cmd_analyze,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration (defaults if omitted)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="RNG seed for sampling and the perturbation tail")
    common.add_argument("--stages", type=int, help="number of cascade stages")
    common.add_argument("--delta-pert", type=float, help="size of the perturbation tail")
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="skewlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"skewlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="certify the control properties")
    f = sub.add_parser("forge", parents=[common], help="one forge step")
    f.add_argument("--orbit", help="orbit JSON to start from (seed orbit if omitted)")
    f.add_argument("--cylinder", default="0", help="base word of the target neighbourhood")
    f.add_argument("--start-index", type=int, default=0)
    f.add_argument("--center", type=float, default=0.5)
    f.add_argument("--radius", type=float, default=0.1)
    f.add_argument("--eps", type=float, help="shadowing tolerance (delta2/2 if omitted)")
    f.add_argument("--index", type=int, default=1, help="suffix of the written files")
    sub.add_parser("cascade", parents=[common], help="seed orbit plus forges")
    sub.add_parser("analyze", parents=[common], help="recheck stored artifacts")
    e = sub.add_parser("export", parents=[common], help="plot-ready CSV from stored artifacts")
    e.add_argument("--max-period", type=int, help="skip measure CSVs of longer orbits")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(name)s: %(message)s")
    try:
        if args.config is not None:
            cfg = RunConfig.load(args.config)
        elif args.command in ("analyze", "export") and args.out and (Path(args.out) / CONFIG_COPY).exists():
            cfg = RunConfig.load(Path(args.out) / CONFIG_COPY)
        else:
            cfg = RunConfig()
        cfg = cfg.with_overrides(seed=args.seed, out=args.out, stages=args.stages, delta_pert=args.delta_pert)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        log.error("configuration error: %s", e)
        return 2


def main() -> None:
    sys.exit(run())
