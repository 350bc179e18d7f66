"""Command-line front end: single runs, the four Monte Carlo studies, the
comparison-ODE checks, and the hypothesis probes.

Every invocation writes its outputs plus a manifest.txt next to them; the
manifest is itself a valid config (all defaults explicit), so re-running the
same command with --config manifest.txt reproduces the outputs byte for byte.
Output files are written to a temporary name and atomically renamed, so a
crash never leaves a partial file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import comparison as tc
from . import experiments as tx
from . import models as tm
from . import noise as tn
from . import spectral as sp
from .config import ConfigError, ResolvedConfig, parse_config
from .experiments import PlanError, StudyPlan, build_initial_field, parse_ic
from .integrate import NoiseSetup, load_trajectory_csv, run
from .models import ModelError
from .noise import NoiseError

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "scaling-limit", "delayed-blowup", "relaxation",
            "triviality", "ode-check", "probe-hypotheses")

STUDY_COMMANDS = {
    "scaling-limit": tx.scaling_limit_study,
    "delayed-blowup": tx.delayed_blowup_mc,
    "relaxation": tx.relaxation_enhancing_study,
    "triviality": tx.triviality_study,
}

_USER_ERRORS = (ConfigError, PlanError, ModelError, NoiseError,
                tc.ComparisonError, sp.FieldError, ValueError)


def _atomic_write(path: Path, writer) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _write_manifest(outdir: Path, command: str, cfg: ResolvedConfig,
                    outputs, started: str, extra=None) -> Path:
    finished = _now()
    text = "[manifest]\n"
    text += f"command = {command}\n"
    text += f"version = {__version__}\n"
    text += f"started = {started}\n"
    text += f"finished = {finished}\n"
    text += "outputs = " + " ".join(p.name for p in outputs) + "\n"
    for key, val in (extra or {}).items():
        text += f"{key} = {val}\n"
    text += "\n" + cfg.echo()
    path = outdir / "manifest.txt"
    _atomic_write(path, lambda p: p.write_text(text))
    return path


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _noise_setup(cfg: ResolvedConfig, d: int, N: int, seed: int) -> NoiseSetup:
    band = cfg.require("noise", "band")
    basis_K = cfg.get("noise", "basis_K") or band
    if band > N:
        raise ConfigError("noise band exceeds the spectral cutoff")
    basis = tn.build_basis(d, basis_K)
    family = cfg.get("noise", "family")
    if family == "shell":
        theta = tn.theta_shell(basis, band)
    elif family == "flat":
        theta = tn.theta_flat(basis, band)
    else:
        raise ConfigError(f"unknown theta family {family!r}")
    return NoiseSetup(basis, theta, tn.NoiseDriver(seed, basis))


def _study_plan(cfg: ResolvedConfig) -> StudyPlan:
    if not cfg.has_noise():
        raise ConfigError("noise required")
    model = cfg.model()
    solver = cfg.solver()
    ic = parse_ic(cfg.require("solver", "u0"))
    bands = cfg.require("study", "theta_bands")
    return StudyPlan(
        model=model, solver=solver, ic=ic,
        nu_grid=cfg.require("study", "nu_grid"),
        theta_family=cfg.get("noise", "family"),
        theta_bands=bands,
        paths=cfg.get("study", "paths"),
        base_seed=cfg.get("study", "base_seed"),
        basis_K=cfg.get("noise", "basis_K"),
        success_delta=cfg.get("study", "success_delta"),
    )


def _cmd_simulate(cfg: ResolvedConfig, outdir: Path, threads: int):
    model = cfg.model()
    solver = cfg.solver()
    u0 = build_initial_field(parse_ic(cfg.require("solver", "u0")),
                             model.d, solver.N)
    noise = None
    if cfg.has_noise():
        noise = _noise_setup(cfg, model.d, solver.N,
                             cfg.get("study", "base_seed"))
    traj = run(u0, model, solver, noise)
    outputs = []
    p = outdir / "trajectory.csv"
    _atomic_write(p, traj.to_csv)
    outputs.append(p)
    p = outdir / "trajectory_meta.txt"
    _atomic_write(p, traj.write_metadata)
    outputs.append(p)
    p = outdir / "final_field.ttnf"
    if traj.final_field.is_finite():
        _atomic_write(p, lambda q: sp.save_field(traj.final_field, q))
        outputs.append(p)
    if traj.blowup:
        logger.info("blow-up detected at tau = %.6g", traj.tau)
        return outputs, {"blowup": "1", "tau": f"{traj.tau:.17g}"}
    return outputs, {"blowup": "0"}


def _cmd_study(command: str, cfg: ResolvedConfig, outdir: Path, threads: int):
    plan = _study_plan(cfg)
    table = STUDY_COMMANDS[command](plan, threads=threads)
    p = outdir / f"{command.replace('-', '_')}.csv"
    _atomic_write(p, table.write_csv)
    return [p]


def _cmd_ode_check(cfg: ResolvedConfig, outdir: Path, threads: int):
    system = cfg.require("study", "system")
    outputs = []
    traj_path = cfg.get("study", "trajectory")
    if traj_path is not None:
        if system not in ("fkpp", "kse"):
            raise ConfigError("trajectory checks need system = fkpp or kse")
        traj = load_trajectory_csv(traj_path)
        lam = cfg.require("study", "lam")
        C = cfg.get("study", "C")
        C = (tc.C_FKPP_DEFAULT if system == "fkpp" else tc.C_KSE_DEFAULT) \
            if C is None else C
        report = tc.check_pde_inequality(traj, system, lam, C,
                                         cfg.get("study", "eps_tol"))
        p = outdir / "residuals.csv"
        _atomic_write(p, report.to_csv)
        return [p]

    dt = cfg.get("study", "ode_dt")
    T = cfg.get("study", "ode_T")
    n = max(1, int(round(T / dt)))
    rows = []
    if system == "riccati":
        y0 = cfg.require("study", "y0")
        sol, t0 = tc.riccati_blowup(y0)
        horizon = min(T, 0.95 * t0) if t0 is not None else T
        ts = np.linspace(0.0, horizon, n + 1)
        rows = [(t, float(sol(t))) for t in ts]
        header = ("t", "y")
        extra = {"blowup_t0": "" if t0 is None else f"{t0:.17g}"}
    elif system in ("fkpp", "kse"):
        lam = cfg.require("study", "lam")
        C = cfg.get("study", "C")
        C = (tc.C_FKPP_DEFAULT if system == "fkpp" else tc.C_KSE_DEFAULT) \
            if C is None else C
        step = tc.fkpp_system_step if system == "fkpp" else tc.kse_system_step
        s = tc.ComparisonState(cfg.get("study", "x0"), cfg.get("study", "y0"))
        rows = [(0.0, s.x, s.y)]
        for i in range(n):
            s = step(s, lam, C, dt)
            rows.append(((i + 1) * dt, s.x, s.y))
        header = ("t", "x", "y")
        extra = {}
    elif system == "mean_zero":
        lam = cfg.require("study", "lam")
        C = cfg.require("study", "C")
        beta = cfg.require("study", "beta_tilde")
        x = cfg.get("study", "x0")
        rows = [(0.0, x)]
        for i in range(n):
            x = tc.mean_zero_comparison_step(x, lam, C, beta, dt)
            rows.append(((i + 1) * dt, x))
        header = ("t", "x")
        extra = {}
    else:
        raise ConfigError(f"unknown comparison system {system!r}")

    def writer(p):
        with open(p, "w") as fh:
            for key, val in extra.items():
                fh.write(f"# {key} = {val}\n")
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    p = outdir / "ode_check.csv"
    _atomic_write(p, writer)
    outputs.append(p)
    return outputs


def _cmd_probe(cfg: ResolvedConfig, outdir: Path, threads: int):
    model = cfg.model()
    if model.kind == tm.LINEAR:
        raise ConfigError("hypothesis probes concern the nonlinear models")
    N = cfg.require("solver", "N")
    rng = np.random.default_rng(cfg.get("study", "seed"))
    count = cfg.get("study", "ensemble")
    if count < 1:
        raise ConfigError("ensemble must hold at least one field")
    band = min(cfg.get("study", "band"), N)
    amp = cfg.get("study", "amplitude")
    zero_mean = model.kind == tm.KELLER_SEGEL
    fields = [sp.SpectralField.random_real(model.d, N, rng, band, amp,
                                           zero_mean=zero_mean)
              for _ in range(count)]
    report = tm.hypothesis_probe(model, tm.default_hypothesis_params(model.kind),
                                 fields)
    p = outdir / "hypothesis_probe.csv"
    _atomic_write(p, report.to_csv)
    return [p]


def dispatch(command: str, cfg: ResolvedConfig, threads: int, outdir) -> int:
    """Run one command, write its outputs and manifest; returns the exit code."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    started = _now()
    extra = None
    try:
        if command == "simulate":
            outputs, extra = _cmd_simulate(cfg, outdir, threads)
        elif command in STUDY_COMMANDS:
            outputs = _cmd_study(command, cfg, outdir, threads)
        elif command == "ode-check":
            outputs = _cmd_ode_check(cfg, outdir, threads)
        elif command == "probe-hypotheses":
            outputs = _cmd_probe(cfg, outdir, threads)
        else:
            raise ConfigError(f"unknown command {command!r}")
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2
    _write_manifest(outdir, command, cfg, outputs, started, extra)
    for p in outputs:
        logger.info("wrote %s", p)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ttn",
        description="Pseudo-spectral simulation of torus PDEs with "
                    "divergence-free transport noise.  Time units are model "
                    "time; fields live on the unit torus.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="key = value config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the study base seed (u64)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes for path-parallel studies; "
                             "wall time only, outputs are identical "
                             "(fallback: env TTN_THREADS, then 1)")
    parser.add_argument("--out", default=".", help="output directory")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("TTN_THREADS", "1"))
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.values["study"]["base_seed"] = args.seed
            cfg.explicit.setdefault("study", set()).add("base_seed")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return dispatch(args.command, cfg, threads, args.out)


if __name__ == "__main__":
    sys.exit(main())
