"""Command-line runner: ``lattice-she <subcommand> [config.yaml] [--output DIR]``.

Artifacts go to a staging directory and are moved into place only when the
whole run succeeds, so a failed run leaves nothing behind. Exit codes: 0 on
success, 2 for invalid input or violated preconditions, 3 when a numerical
guard trips.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, content_hash, load
from .errors import NumericalGuardError, PreconditionError

log = logging.getLogger("lattice_she")

SUBCOMMANDS = ("simulate", "polymer", "llt-check", "coupling-check", "moments", "acceptance")

COLUMNS = {
    "simulate_samples": ("replica", "t", "x", "value"),
    "simulate_moments": ("t", "x", "replicas", "excluded", "mean", "second_moment", "stderr_second_moment"),
    "polymer_environments": ("n", "environment", "M_n"),
    "polymer_endpoint": ("n", "environment", "x_scaled", "scaled_probability"),
    "polymer_moments": ("n", "beta", "environments", "mean_M", "stderr_M", "second_moment_mc",
                        "second_moment_exact", "second_moment_continuum"),
    "llt": ("n", "t", "b", "sup_error", "bound_term_1", "bound_term_2", "fitted_rate"),
    "coupling": ("n", "theta", "gamma", "order", "measured_error", "bound_value", "ratio", "stderr", "exact_error",
                 "time_block", "space_block"),
    "moments": ("n", "t", "beta", "discrete_m", "continuum_m", "rel_err"),
}


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(value)


def write_csv(path: Path, table: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS[table])
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# builders from resolved config


def _kernel(cfg):
    from .walk_kernel import named_kernel

    return named_kernel(cfg["kernel"])


def _noise(params):
    from .noise import NoiseModel

    params = dict(params)
    return NoiseModel(params.pop("family"), **params)


def _nonlin(params):
    from .she_solver import Nonlinearity

    return None if params is None else Nonlinearity(**params)


def _initial(params):
    from .she_solver import InitialProfile

    params = dict(params)
    if "eta" in params:
        params["eta"] = _noise(params["eta"])
    return InitialProfile(**params)


# ---------------------------------------------------------------------------
# subcommands


def run_simulate(cfg, out: Path) -> None:
    from .she_solver import SHEConfig, scaled_index, solve_ensemble

    s = cfg["simulate"]
    kernel = _kernel(cfg)
    window = None if s["window"] is None else tuple(s["window"])
    config = SHEConfig(kernel, _noise(cfg["noise"]), _nonlin(s["sigma"]), _nonlin(s["drift"]), s["n"], s["T"],
                       _initial(s["initial"]), window, cfg["seed"], "simulate")
    points = [(t, x, *scaled_index(config.n, kernel.alpha, kernel.mu, t, x)) for t in s["times"] for x in s["xs"]]
    if any(p[2] > config.steps for p in points):
        raise PreconditionError("requested time beyond T")
    ens = solve_ensemble(config, cfg["replicas"], [p[2] for p in points], sorted({p[3] for p in points}),
                         cfg["threads"])
    ok = np.nonzero(ens.ok)[0]
    samples, moments = [], []
    for t, x, i, k in points:
        vals = ens.at(i, k)
        for r, v in zip(ok, vals):
            samples.append((int(r), t, x, float(v)))
        sq = vals ** 2
        se = float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else float("nan")
        moments.append((t, x, int(vals.size), ens.excluded, float(vals.mean()), float(sq.mean()), se))
    samples.sort(key=lambda row: (row[1], row[2], row[0]))
    write_csv(out / "samples.csv", "simulate_samples", samples)
    write_csv(out / "moments.csv", "simulate_moments", moments)


def run_polymer(cfg, out: Path) -> None:
    from .continuum_ref import pam_second_moment
    from .polymer import (PolymerEnvironment, partition_ensemble, polymer_window, second_moment_exact,
                          transfer_solve)
    from .stable_density import StableLaw

    p = cfg["polymer"]
    kernel, noise, beta = _kernel(cfg), _noise(cfg["noise"]), p["beta"]
    continuum = pam_second_moment(StableLaw(kernel.alpha, kernel.nu), beta, 1.0).value if kernel.nu > 0 else None
    env_rows, end_rows, mom_rows = [], [], []
    for n in p["ns"]:
        values, excluded = partition_ensemble(noise, kernel, beta, n, cfg["replicas"], cfg["seed"],
                                              threads=cfg["threads"])
        if excluded:
            raise NumericalGuardError(f"{excluded} polymer environments overflowed at n={n}")
        env_rows += [(n, r, float(v)) for r, v in enumerate(values)]
        se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else float("nan")
        mom_rows.append((n, beta, int(values.size), float(values.mean()), se, float((values ** 2).mean()),
                         second_moment_exact(kernel, noise, beta, n),
                         float("nan") if continuum is None else continuum))
        window = polymer_window(kernel, n)
        for r in range(p["endpoint_environments"]):
            env = PolymerEnvironment.sample(noise, beta, n, kernel.alpha, window, cfg["seed"], r, "endpoint")
            res = transfer_solve(env, kernel, n)
            scale = n ** (1.0 / kernel.alpha)
            law = res.quenched_law
            end_rows += [(n, r, float(x / scale), float(scale * q)) for x, q in zip(res.sites, law)]
    write_csv(out / "environments.csv", "polymer_environments", env_rows)
    write_csv(out / "endpoint.csv", "polymer_endpoint", end_rows)
    write_csv(out / "moments.csv", "polymer_moments", mom_rows)


def run_llt_check(cfg, out: Path) -> None:
    from .llt import llt_rate

    c = cfg["llt_check"]
    reports, fit = llt_rate(_kernel(cfg), c["ns"], c["t"], c["b"], c["c"])
    write_csv(out / "llt.csv", "llt", [(r.n, r.t, r.b, r.sup_error, *r.predicted_bound_terms, -fit.slope)
                                       for r in reports])
    write_json(out / "llt_fit.json", {"slope": fit.slope, "stderr": fit.stderr, "ns": list(map(int, fit.ns))})


def run_coupling_check(cfg, out: Path) -> None:
    from .coarse_coupling import BlockGrid, coupling_error

    c = cfg["coupling_check"]
    kernel, noise = _kernel(cfg), _noise(cfg["noise"])
    rows = []
    for n in c["ns"]:
        grid = BlockGrid.admissible(n, kernel, c["theta"], c["gamma"])
        e = coupling_error(grid, noise, c["order"], c["samples"], cfg["seed"])
        rows.append((n, c["theta"], c["gamma"], c["order"], e.measured, e.bound, e.measured / e.bound, e.stderr,
                     e.exact, grid.time_block, grid.space_block))
    write_csv(out / "coupling.csv", "coupling", rows)


def run_moments(cfg, out: Path) -> None:
    from .continuum_ref import discrete_pam_second_moment, pam_second_moment
    from .she_solver import lattice_floor
    from .stable_density import StableLaw

    m = cfg["moments"]
    kernel = _kernel(cfg)
    law = StableLaw(kernel.alpha, kernel.nu)
    rows = []
    for beta in m["betas"]:
        cont = pam_second_moment(law, beta, m["t"]).value
        for n in m["ns"]:
            steps = lattice_floor(n * m["t"])
            disc = float(discrete_pam_second_moment(kernel, n, beta, steps)[-1])
            rows.append((n, m["t"], beta, disc, cont, abs(disc - cont) / cont))
    write_csv(out / "moments.csv", "moments", rows)


def run_acceptance_cmd(cfg, out: Path) -> dict:
    from .acceptance import run_acceptance

    results = run_acceptance(cfg["acceptance"]["only"], cfg["seed"], cfg["threads"])
    for r in results:
        print(r.line(), file=sys.stderr)
    write_json(out / "acceptance.json", {
        "passed": all(r.passed for r in results),
        "criteria": [{"number": r.number, "title": r.title, "passed": r.passed, "metrics": r.metrics}
                     for r in results]})
    return {f"criterion_{r.number}": round(r.runtime, 3) for r in results}


RUNNERS = {
    "simulate": run_simulate,
    "polymer": run_polymer,
    "llt-check": run_llt_check,
    "coupling-check": run_coupling_check,
    "moments": run_moments,
    "acceptance": run_acceptance_cmd,
}


def execute(subcommand: str, cfg: dict, outdir: str | Path) -> Path:
    """Run one subcommand and atomically publish its artifacts plus a manifest into ``outdir``."""
    if subcommand not in RUNNERS:
        raise PreconditionError(f"unknown subcommand {subcommand!r}")
    outdir = Path(outdir)
    outdir.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=outdir.parent))
    try:
        timings = RUNNERS[subcommand](cfg, stage) or {}
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "package_version": __version__,
            "subcommand": subcommand,
            "config": cfg,
            "config_sha256": content_hash(cfg),
            "artifacts": {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(stage.iterdir())},
            "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
            "runtimes": timings,
        }
        write_json(stage / "manifest.json", manifest)
        outdir.mkdir(parents=True, exist_ok=True)
        for p in sorted(stage.iterdir()):
            shutil.move(str(p), outdir / p.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return outdir


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lattice-she", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config", nargs="?", help="YAML configuration (defaults apply when omitted)")
    parser.add_argument("--output", help="output directory (overrides output_dir and LATTICE_SHE_OUTDIR)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config)
        if args.output:
            cfg["output_dir"] = args.output
        out = execute(args.subcommand, cfg, cfg["output_dir"])
    except PreconditionError as exc:
        print(f"lattice-she: {exc}", file=sys.stderr)
        return 2
    except NumericalGuardError as exc:
        print(f"lattice-she: numerical guard: {exc}", file=sys.stderr)
        return 3
    log.info("artifacts written to %s", out)
    if args.subcommand == "acceptance":
        payload = json.loads((out / "acceptance.json").read_text(encoding="utf-8"))
        return 0 if payload["passed"] else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
