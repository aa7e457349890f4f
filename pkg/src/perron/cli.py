"""Command-line entry point: validate configs, run experiments, emit results.

Exit codes: 0 = all checks passed (or a counterexample scenario confirmed its
expected non-convergence), 1 = a named check failed, 2 = invalid
configuration (the first message names the offending field)."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time as time_mod

import numpy as np

from . import ergodicity, finite, lyapunov, sigma
from .config import ConfigError, ExperimentConfig, load_config, validate_dict
from .grids import Grid1D
from .pde import PDESemigroup

ARTIFACT_VERSION = "0.1.0"


# ---------------------------------------------------------------------------
# output emission


class Emitter:
    """Atomic file writes (write-then-rename) plus an inventory for the
    manifest.  CSV numeric fields are printed with 12 significant digits."""

    def __init__(self, directory: str, quiet: bool = False):
        self.directory = directory
        self.quiet = quiet
        self.files: list[str] = []
        os.makedirs(directory, exist_ok=True)

    def _atomic(self, name: str, text: str) -> None:
        path = os.path.join(self.directory, name)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.files.append(name)

    def json(self, name: str, payload: dict) -> None:
        self._atomic(name, json.dumps(payload, indent=2, default=_jsonable) + "\n")

    def csv(self, name: str, columns: dict) -> None:
        keys = list(columns)
        rows = zip(*(columns[k] for k in keys))
        lines = [",".join(keys)]
        for row in rows:
            lines.append(",".join(f"{v:.12g}" for v in row))
        self._atomic(name, "\n".join(lines) + "\n")

    def say(self, message: str) -> None:
        if not self.quiet:
            print(message)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _profile_csv(em: Emitter, name: str, report) -> None:
    with np.errstate(divide="ignore"):
        log_r = np.log(report.residuals)
    em.csv(name, {
        "t": report.times,
        "residual_tv": report.residuals,
        "log_residual": log_r,
        "lambda_running": np.full(report.times.size, report.lam),
    })


# ---------------------------------------------------------------------------
# experiments; each returns (verdicts dict, summary dict)


def _chain_from_config(cfg: ExperimentConfig) -> finite.FiniteGenerator:
    if "generator" in cfg.chain:
        q = np.asarray(cfg.chain["generator"], dtype=float)
        off = q.copy()
        np.fill_diagonal(off, 0.0)
        extra = q.diagonal() + off.sum(axis=1)
        return finite.FiniteGenerator(off, diag_extra=extra)
    return finite.cycle_generator(int(cfg.chain["cycle_states"]))


def run_finite_h1h2(cfg: ExperimentConfig, em: Emitter):
    gen = _chain_from_config(cfg)
    n_time = int(cfg.chain.get("n_time", 256))
    h1 = finite.verify_h1(gen, cfg.tau, n_time=n_time)
    h2_margin = finite.verify_h2(h1.laws)
    em.json("report_h1.json", {
        "condition": "path_crossing", "pass": h1.verdict,
        "c": h1.constants.c, "worst_margin": h1.worst_margin,
        "global_bound": h1.constants.global_bound,
        "unreachable_pairs": h1.failures,
    })
    em.json("report_h2.json", {
        "condition": "crossing_law_overlap", "pass": bool(h2_margin > 1e-6),
        "h2_margin": h2_margin,
    })
    verdicts = {"h1": bool(h1.verdict), "h2": bool(h2_margin > 1e-6)}
    summary = {"c": h1.constants.c, "h1_margin": h1.worst_margin,
               "h2_margin": h2_margin, "n_states": gen.n_states}
    return verdicts, summary


def _build_pde(cfg: ExperimentConfig):
    model = cfg.build_model()
    grid = cfg.build_grid()
    return model, grid, PDESemigroup(model, grid)


def _triplet_and_profile(cfg: ExperimentConfig, S: PDESemigroup):
    oracle = ergodicity.PDESemigroupOracle(S, cfg.tau)
    triplet = ergodicity.power_triplet(
        oracle, tol=float(cfg.numeric("power_tol", 1e-12)),
        max_iter=int(cfg.numeric("max_iter", 2000)), strict=False)
    mu0 = np.zeros(S.grid.n_cells)
    mu0[S.grid.index_of(0.0)] = 1.0
    profile = ergodicity.convergence_profile(oracle, triplet, mu0,
                                             cfg.horizon, cfg.sample_dt)
    return triplet, profile


def run_pde_converge(cfg: ExperimentConfig, em: Emitter):
    _, _, S = _build_pde(cfg)
    triplet, profile = _triplet_and_profile(cfg, S)
    _profile_csv(em, "series_residuals.csv", profile)
    verdicts = {"power_iteration_converged": bool(triplet.converged),
                "exponential_convergence": profile.verdict == "exponential"}
    summary = {"lambda": triplet.lam, "lambda_left": triplet.lam_left,
               "omega": profile.omega, "C": profile.prefactor,
               "fit_quality": profile.fit_quality, "verdict": profile.verdict,
               "residual_h": triplet.res_h, "residual_gamma": triplet.res_gamma}
    return verdicts, summary


def _construction(cfg: ExperimentConfig, model, grid, S):
    return lyapunov.build_construction(
        model, grid, cfg.tau, S=S,
        x0_override=cfg.numeric("x0_override", None),
        R_override=cfg.numeric("R_override", None),
        R_safety=float(cfg.numeric("R_safety", 2.0)))


def run_lyapunov_audit(cfg: ExperimentConfig, em: Emitter):
    model, grid, S = _build_pde(cfg)
    con = _construction(cfg, model, grid, S)
    gen_report = lyapunov.check_generator_drift(model, con, S=S)
    semi_report = lyapunov.check_semigroup_drift(S, con)
    step3 = lyapunov.check_step3_bound(S, con, k_max=int(cfg.numeric("k_max", 20)))
    em.json("report_generator_drift.json", gen_report.to_dict())
    em.json("report_semigroup_drift.json", semi_report.to_dict())
    em.json("report_step3.json", step3.to_dict())
    verdicts = {"generator_drift": gen_report.passed,
                "semigroup_drift": semi_report.passed,
                "step3_bound": step3.passed,
                "alpha_lt_beta": con.alpha < con.beta}
    summary = {"constants": con.constants_dict()}
    return verdicts, summary


def run_sigma_audit(cfg: ExperimentConfig, em: Emitter):
    model, grid, S = _build_pde(cfg)
    con = _construction(cfg, model, grid, S)
    rep = sigma.verify_h1prime_h2prime(
        S, con, n_time=int(cfg.numeric("n_time", 26)),
        x_stride=int(cfg.numeric("x_stride", 4)),
        y_stride=int(cfg.numeric("y_stride", 32)),
        z_stride=int(cfg.numeric("z_stride", 4)),
        level_cap=int(cfg.numeric("level_cap", 16)))
    fam1 = sigma.build_family(model, cfg.tau, grid.centers[::4],
                              grid.centers[rep.y_sample], 1,
                              n_time=int(cfg.numeric("n_time", 26)))
    ineq = sigma.verify_inequality_5(fam1, S, int(cfg.numeric("trials", 100)),
                                     seed=cfg.seed)
    em.json("report_h1prime_h2prime.json", rep.to_dict())
    em.json("report_inequality5.json", ineq.to_dict())
    verdicts = {"crossing_inequality": ineq.passed,
                "h1prime_h2prime": rep.passed}
    summary = {"c": rep.c, "epsilon_overlap": rep.epsilon_overlap,
               "level": rep.level, "min_ratio": ineq.min_ratio}
    return verdicts, summary


def run_scenario_rotation(cfg: ExperimentConfig, em: Emitter):
    n_cells = int(cfg.grid.get("n_cells", 2000))
    grid = Grid1D(0.0, 1.0, n_cells)
    profile = ergodicity.scenario_rotation(grid, cfg.horizon)
    _profile_csv(em, "series_residuals.csv", profile)
    rot = ergodicity.RotationSemigroup(grid)
    mass_drift = float(np.max(np.abs(rot.apply_dual(np.ones(n_cells)) - 1.0)))
    period_ok = (profile.verdict == "periodic"
                 and abs(profile.dominant_period - 1.0) <= grid.dx)
    verdicts = {"mass_conserved": mass_drift <= 1e-14,
                "periodic_verdict": period_ok}
    summary = {"verdict": profile.verdict,
               "dominant_period": profile.dominant_period,
               "peak_ratio": profile.peak_ratio, "mass_drift": mass_drift}
    return verdicts, summary


def run_scenario_singular(cfg: ExperimentConfig, em: Emitter):
    model, grid, S = _build_pde(cfg)
    profile = ergodicity.scenario_singular_kernel(S, cfg.horizon, cfg.sample_dt)
    _profile_csv(em, "series_residuals.csv", profile)
    late = profile.times >= cfg.horizon / 4
    late_max = float(np.max(profile.residuals[late]))
    verdicts = {"nonconvergence_confirmed":
                profile.verdict in ("periodic", "stalled") and late_max >= 0.05}
    summary = {"verdict": profile.verdict,
               "dominant_period": profile.dominant_period,
               "late_window_max_residual": late_max,
               "peak_ratio": profile.peak_ratio}
    return verdicts, summary


def run_full_pipeline(cfg: ExperimentConfig, em: Emitter):
    model, grid, S = _build_pde(cfg)
    con = _construction(cfg, model, grid, S)
    gen_report = lyapunov.check_generator_drift(model, con, S=S)
    semi_report = lyapunov.check_semigroup_drift(S, con)
    step3 = lyapunov.check_step3_bound(S, con, k_max=int(cfg.numeric("k_max", 20)))
    h1p = sigma.verify_h1prime_h2prime(
        S, con, n_time=int(cfg.numeric("n_time", 26)),
        x_stride=int(cfg.numeric("x_stride", 4)),
        y_stride=int(cfg.numeric("y_stride", 32)),
        z_stride=int(cfg.numeric("z_stride", 4)),
        level_cap=int(cfg.numeric("level_cap", 16)))
    triplet, profile = _triplet_and_profile(cfg, S)
    minor = ergodicity.estimate_d_and_ctilde(
        S, con, h1p, sample_pairs=int(cfg.numeric("sample_pairs", 10)),
        seed=cfg.seed)

    em.json("report_generator_drift.json", gen_report.to_dict())
    em.json("report_semigroup_drift.json", semi_report.to_dict())
    em.json("report_step3.json", step3.to_dict())
    em.json("report_h1prime_h2prime.json", h1p.to_dict())
    em.json("report_minorization.json", {
        "condition": "minorization", "pass": minor.verdict, "d": minor.d,
        "c_tilde": minor.c_tilde, "epsilon_overlap": minor.epsilon_overlap,
        "ratio_bound": minor.ratio_bound, "pairs": minor.pair_margins,
    })
    _profile_csv(em, "series_residuals.csv", profile)

    verdicts = {
        "generator_drift": gen_report.passed,
        "semigroup_drift": semi_report.passed,
        "step3_bound": step3.passed,
        "h1prime_h2prime": h1p.passed,
        "power_iteration_converged": bool(triplet.converged),
        "exponential_convergence": profile.verdict == "exponential",
        "minorization": minor.verdict,
    }
    certified = all(verdicts.values())
    em.say("Hypotheses certified at grid level: " + ("yes" if certified else "no"))
    summary = {
        "certified": certified, "lambda": triplet.lam,
        "omega": profile.omega, "verdict": profile.verdict,
        "d": minor.d, "c_tilde": minor.c_tilde,
        "c": h1p.c, "epsilon_overlap": h1p.epsilon_overlap,
        "constants": con.constants_dict(),
        "residual_h": triplet.res_h, "residual_gamma": triplet.res_gamma,
    }
    return verdicts, summary


EXPERIMENTS = {
    "finite_h1h2": run_finite_h1h2,
    "pde_converge": run_pde_converge,
    "lyapunov_audit": run_lyapunov_audit,
    "sigma_audit": run_sigma_audit,
    "scenario_rotation": run_scenario_rotation,
    "scenario_singular": run_scenario_singular,
    "full_theorem2_pipeline": run_full_pipeline,
}


def run(cfg: ExperimentConfig, out_dir: str | None = None,
        quiet: bool = False) -> int:
    directory = out_dir or cfg.output.get("directory", f"out_{cfg.experiment}")
    em = Emitter(directory, quiet=quiet)
    start = time_mod.time()
    verdicts, summary = EXPERIMENTS[cfg.experiment](cfg, em)
    wall = time_mod.time() - start
    em.json("summary.json", summary)
    manifest = {
        "experiment": cfg.experiment,
        "config_hash": cfg.config_hash(),
        "artifact_version": ARTIFACT_VERSION,
        "wall_clock_seconds": wall,
        "verdicts": verdicts,
        "files": sorted(em.files + ["manifest.json"]),
    }
    em.json("manifest.json", manifest)
    failures = [k for k, v in verdicts.items() if not v]
    for name, ok in verdicts.items():
        em.say(f"  [{'pass' if ok else 'FAIL'}] {name}")
    if failures:
        em.say(f"failed checks: {', '.join(failures)}")
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="perron",
        description="Perron eigentriplets and ergodicity certificates for "
                    "nonconservative positive semigroups")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a JSON experiment config")
        if name == "run":
            p.add_argument("--out", default=None, help="output directory")
            p.add_argument("--seed", type=int, default=None,
                           help="override numerics.seed")
            p.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    if args.command == "validate":
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config unreadable: {exc}", file=sys.stderr)
            return 2
        diags = validate_dict(data)
        for d in diags:
            print(d, file=sys.stderr)
        return 2 if diags else 0

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config unreadable: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.numerics["seed"] = args.seed
    return run(cfg, out_dir=args.out, quiet=args.quiet)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
