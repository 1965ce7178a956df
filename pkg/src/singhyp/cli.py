"""Config-driven experiment runner.

One experiment per process invocation, driven by a JSON config::

    singhyp --config run.json --out results/ [--seed 42] [--threads 1]
    singhyp --suite --out results/

Exit status: 0 all verdicts pass, 2 invalid configuration (message names the
offending field), 3 numerical abort.  Every run writes ``manifest.json``
(resolved config, derived exponents, versions, wall time, run id) plus result
CSVs and, for check-type experiments, ``verdict.json``.  Identical config and
seed produce bit-identical CSV artifacts.

Config schema (unknown keys are rejected)::

    {
      "experiment": "solve" | "verify-counterexamples" | "check-cone" |
                    "check-energy" | "symbol-report" | "zones-dump",
      "grid":    {"L": 8.0, "N": 256, "k": 16.0},
      "mesh":    {"M": 2048, "kappa": null, "t_start": 0.0},
      "profile": {"p": 0.0, "q": 1.25, "r": 0.0, "sigma": 3.0, "T": 1.0,
                  "lambda": "fit"},
      "family":  {"id": "theorem", "params": {...}},
      "data":    {"kind": "bump", "width": 0.7, "center": 0.0,
                  "modes": 8, "seed": 42, "velocity": "dx",
                  "velocity_scale": -1.0},
      "output_times": [...],
      "zones":   {"nt": 16, "nx": 17, "nxi": 17, "N": 2.0}
    }

Family ids: ``theorem``, ``example11``, ``free-wave``, ``reference-wave``,
``counterexample-7.1`` ... ``counterexample-7.4`` (counterexamples take
``{"m": int}`` and use their oracle initial data).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (ConeSpec, GaussianBump, closed_form, cone_check,
                       counterexample_family, energy_monitor, fit_lambda, propagation_speed,
                       random_trig_poly, residual_check)
from .quantize import GridSpec, OverflowGuardError
from .runio import build_manifest, write_csv, write_json, write_trajectory
from .solver import CauchyProblem, SolverError, SupportError, graded_mesh, integrate
from .structure import ProfileError, classify_zone, constant_pair, make_profile, poly_pair
from .symbols import (EllipticityError, QuadratureError, char_root, excise,
                      fit_blowup_exponents, free_wave, reference_wave, root_estimate_report,
                      theorem_coefficient, example_coefficient)

__all__ = ["ConfigError", "RunConfig", "run", "suite", "main"]

EXPERIMENTS = ("solve", "verify-counterexamples", "check-cone", "check-energy",
               "symbol-report", "zones-dump")
_TOP_KEYS = {"experiment", "grid", "mesh", "profile", "family", "data", "output_times",
             "zones"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing field '{where}.{key}'")
    return section[key]


def _known(section: dict, allowed: set[str], where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown field '{where}.{sorted(unknown)[0]}'")


class RunConfig:
    """Validated experiment configuration (validation happens before any
    computation; unknown keys are rejected)."""

    def __init__(self, raw: dict):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        _known(raw, _TOP_KEYS, "config")
        self.raw = raw
        self.experiment = _require(raw, "experiment", "config")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"config.experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")

        g = raw.get("grid", {})
        _known(g, {"L", "N", "k"}, "grid")
        try:
            self.grid = GridSpec(L=float(g.get("L", 8.0)), N=int(g.get("N", 256)),
                                 k=float(g.get("k", 1.0)))
        except ValueError as e:
            raise ConfigError(f"grid: {e}") from e

        m = raw.get("mesh", {})
        _known(m, {"M", "kappa", "t_start"}, "mesh")
        self.mesh_m = int(m.get("M", 2048))
        if self.mesh_m < 8:
            raise ConfigError("mesh.M must be >= 8")
        self.mesh_kappa = m.get("kappa")
        if self.mesh_kappa is not None:
            self.mesh_kappa = float(self.mesh_kappa)
        self.t_start = float(m.get("t_start", 0.0))

        p = raw.get("profile", {})
        _known(p, {"p", "q", "r", "sigma", "T", "lambda"}, "profile")
        self.profile_params = {
            "p": float(p.get("p", 0.0)), "q": float(p.get("q", 1.25)),
            "r": float(p.get("r", 0.0)), "sigma": float(p.get("sigma", 3.0)),
            "T": float(p.get("T", 1.0)),
        }
        self.lam = p.get("lambda", "fit")
        if self.lam != "fit":
            self.lam = float(self.lam)
        try:
            self.profile = make_profile(**self.profile_params)
        except ProfileError as e:
            raise ConfigError(f"profile: {e}") from e

        f = raw.get("family", {"id": "theorem"})
        _known(f, {"id", "params"}, "family")
        self.family_id = _require(f, "id", "family")
        self.family_params = f.get("params", {})
        if not isinstance(self.family_params, dict):
            raise ConfigError("family.params must be an object")

        d = raw.get("data", {})
        _known(d, {"kind", "modes", "seed", "width", "center", "velocity",
                   "velocity_scale"}, "data")
        self.data = {
            "kind": d.get("kind", "bump"),
            "modes": int(d.get("modes", 8)),
            "seed": int(d.get("seed", 42)),
            "width": float(d.get("width", 0.7)),
            "center": float(d.get("center", 0.0)),
            "velocity": d.get("velocity", "zero"),
            "velocity_scale": float(d.get("velocity_scale", -1.0)),
        }
        if self.data["kind"] not in ("trig", "bump"):
            raise ConfigError("data.kind must be 'trig' or 'bump'")
        if self.data["velocity"] not in ("zero", "dx"):
            raise ConfigError("data.velocity must be 'zero' or 'dx'")

        self.output_times = raw.get("output_times")
        if self.output_times is not None:
            self.output_times = [float(t) for t in self.output_times]

        z = raw.get("zones", {})
        _known(z, {"nt", "nx", "nxi", "N"}, "zones")
        self.zones = {"nt": int(z.get("nt", 16)), "nx": int(z.get("nx", 17)),
                      "nxi": int(z.get("nxi", 17)), "N": float(z.get("N", 2.0))}

    # ------------------------------------------------------------------

    def build_family(self):
        pid = self.family_id
        pp = self.profile_params
        params = dict(self.family_params)
        if pid == "theorem":
            kappas = params.pop("pair", None)
            pair = poly_pair(*kappas) if kappas else constant_pair()
            return theorem_coefficient(pp["p"], pp["q"], r=pp["r"], sigma=pp["sigma"],
                                       T=pp["T"], k=self.grid.k, pair=pair, **params)
        if pid == "example11":
            return example_coefficient(params.get("kappa1", 0.5), params.get("kappa2", 0.5),
                                       T=pp["T"], k=self.grid.k)
        if pid == "free-wave":
            return free_wave(params.get("speed", 1.0), T=pp["T"], k=self.grid.k)
        if pid == "reference-wave":
            return reference_wave(T=pp["T"], k=self.grid.k)
        if pid.startswith("counterexample-"):
            ex = pid.removeprefix("counterexample-")
            return counterexample_family(ex, int(params.get("m", 0)), k=self.grid.k,
                                         T=pp["T"])
        raise ConfigError(f"family.id: unknown family {pid!r}")

    def build_profile_fn(self):
        if self.data["kind"] == "trig":
            return random_trig_poly(self.data["modes"], self.data["seed"])
        return GaussianBump(self.data["center"], self.data["width"])

    def build_data(self, family):
        if self.family_id.startswith("counterexample-"):
            ex = self.family_id.removeprefix("counterexample-")
            sol = closed_form(ex, int(self.family_params.get("m", 0)),
                              self.build_profile_fn())
            return sol.initial_data(self.grid, self.t_start)
        u0 = self.build_profile_fn()
        f1 = np.asarray(u0(self.grid.x), dtype=complex)
        if self.data["velocity"] == "zero":
            f2 = np.zeros_like(f1)
        else:
            f2 = self.data["velocity_scale"] * np.asarray(u0(self.grid.x, 1), dtype=complex)
        return f1, f2


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def _derived(cfg: RunConfig) -> dict:
    pr = cfg.profile
    return {"delta": pr.delta, "gamma": pr.gamma, "delta_star": pr.delta_star,
            "version": __version__}


def _exp_solve(cfg: RunConfig, out: Path, seed: int):
    family = cfg.build_family()
    f1, f2 = cfg.build_data(family)
    prob = CauchyProblem(family=family, f1=f1, f2=f2, t_start=cfg.t_start,
                         T=cfg.profile.T)
    mesh = graded_mesh(family, cfg.t_start, cfg.profile.T, cfg.mesh_m, cfg.mesh_kappa)
    outs = cfg.output_times or list(np.linspace(cfg.t_start, cfg.profile.T, 9))
    traj = integrate(prob, cfg.grid, mesh, outs)
    artifacts = write_trajectory(out, traj)
    stats = write_json(out / "solve_stats.json",
                       {"stats": traj.stats, "snapshot_times": list(traj.times)})
    return artifacts + [stats], []


def _exp_verify_counterexamples(cfg: RunConfig, out: Path, seed: int):
    grid = cfg.grid
    u0 = random_trig_poly(cfg.data["modes"], cfg.data["seed"])
    verdicts, rows = [], []
    for ex in ("7.1", "7.2", "7.3", "7.4"):
        ms = (0, 1, 2, 3) if ex == "7.1" else (0,)
        worst = max(residual_check(ex, m, u0, grid) for m in ms)
        verdicts.append({"name": f"counterexample-{ex}", "residual": worst,
                         "pass": bool(worst < 1e-6)})
        rows.append((f"counterexample-{ex}", worst))
    table = write_csv(out / "residuals.csv", ["example", "max_residual"], rows)
    return [table], verdicts


def _exp_check_cone(cfg: RunConfig, out: Path, seed: int):
    grid = cfg.grid
    bump = GaussianBump(cfg.data["center"], cfg.data["width"])
    verdicts, artifacts = [], []
    fam = counterexample_family("7.3", k=grid.k, T=max(3.0, cfg.profile.T))
    c_star = propagation_speed(fam, grid, np.linspace(1e-4, 3.0, 30001))
    f1 = np.asarray(bump(grid.x), dtype=complex)
    f2 = 2.0 * np.asarray(bump(grid.x, 1), dtype=complex)
    t_end = 0.2 * grid.L
    prob = CauchyProblem(family=fam, f1=f1, f2=f2, t_start=0.0, T=max(3.0, cfg.profile.T))
    traj = integrate(prob, grid, graded_mesh(fam, 0.0, t_end, cfg.mesh_m),
                     np.linspace(0.0, t_end, 13))
    rep = cone_check(traj, ConeSpec(cfg.data["center"], 0.0, speed=3.0, exponent=1.0,
                                    pair=constant_pair()))
    artifacts.append(write_csv(out / "cone_oscillating.csv",
                               ["t", "measured", "predicted"], rep.rows))
    verdicts.append({"name": "cone-oscillating-speed", "pass": bool(rep.passed),
                     "valid": rep.valid, "c_star": c_star})

    famw = free_wave(1.0, T=max(2.5, cfg.profile.T), k=grid.k)
    f2w = -np.asarray(bump(grid.x, 1), dtype=complex)
    probw = CauchyProblem(family=famw, f1=f1, f2=f2w, t_start=0.0,
                          T=max(2.5, cfg.profile.T))
    t_endw = min(2.0, 0.2 * grid.L)
    trajw = integrate(probw, grid, graded_mesh(famw, 0.0, t_endw, cfg.mesh_m),
                      np.linspace(0.0, t_endw, 9))
    repw = cone_check(trajw, ConeSpec(cfg.data["center"], 0.0, speed=1.0, exponent=1.0,
                                      pair=constant_pair()))
    artifacts.append(write_csv(out / "cone_wave.csv", ["t", "measured", "predicted"],
                               repw.rows))
    verdicts.append({"name": "cone-constant-wave", "pass": bool(repw.passed),
                     "valid": repw.valid})
    return artifacts, verdicts


def _exp_check_energy(cfg: RunConfig, out: Path, seed: int):
    family = cfg.build_family()
    if family.profile is None:
        raise ConfigError("family: check-energy needs an admissible profile")
    lam = fit_lambda(family, family.profile).value if cfg.lam == "fit" else cfg.lam
    f1, f2 = cfg.build_data(family)
    prob = CauchyProblem(family=family, f1=f1, f2=f2, t_start=cfg.t_start,
                         T=cfg.profile.T)
    traj = integrate(prob, cfg.grid, graded_mesh(family, cfg.t_start, cfg.profile.T,
                                                 cfg.mesh_m, cfg.mesh_kappa),
                     cfg.output_times or list(np.linspace(cfg.t_start, cfg.profile.T, 17)))
    trace = energy_monitor(traj, (0.0, 0.0), family.profile, family.pair, lam)
    rows = zip(trace.times, trace.norm_u, trace.norm_v, trace.lam_values,
               trace.data_bound, trace.support)
    table = write_csv(out / "energy_trace.csv",
                      ["t", "norm_u", "norm_v", "lambda_t", "data_bound", "support_radius"],
                      rows)
    verdicts = [{"name": "energy-bounded", "pass": bool(np.isfinite(trace.verdict)),
                 "verdict": trace.verdict, "lambda": lam}]
    return [table], verdicts


def _exp_symbol_report(cfg: RunConfig, out: Path, seed: int):
    family = cfg.build_family()
    if family.profile is None:
        raise ConfigError("family: symbol-report needs an admissible profile")
    rep = root_estimate_report(char_root(excise(family)), family.profile)
    p_fit, q_fit = fit_blowup_exponents(family)
    payload = {
        "interior_exponent": rep.interior_exponent,
        "exterior_exponent": rep.exterior_exponent,
        "dt_tau_flat_max": rep.dt_tau_flat_max,
        "p_fit": p_fit,
        "q_fit": q_fit,
        "fit_report": json.loads(rep.fit.to_json()),
    }
    art = write_json(out / "symbol_report.json", payload)
    p, q = family.p, family.q
    verdicts = [
        {"name": "root-interior-exponent", "pass": bool(abs(rep.interior_exponent) <= 0.1),
         "value": rep.interior_exponent},
        {"name": "root-exterior-exponent",
         "pass": bool(abs(rep.exterior_exponent - p / 2.0) <= 0.1),
         "value": rep.exterior_exponent},
        {"name": "dt-root-flat-zero", "pass": bool(rep.dt_tau_flat_max <= 1e-14),
         "value": rep.dt_tau_flat_max},
        {"name": "blowup-exponents",
         "pass": bool(abs(p_fit - p) <= 0.1 and abs(q_fit - q) <= 0.1),
         "p_fit": p_fit, "q_fit": q_fit},
    ]
    return [art], verdicts


def _exp_zones_dump(cfg: RunConfig, out: Path, seed: int):
    z = cfg.zones
    pair = constant_pair()
    ts = np.linspace(0.0, cfg.profile.T, z["nt"])
    xs = np.linspace(-cfg.grid.L, cfg.grid.L, z["nx"])
    xis = np.linspace(-cfg.grid.xi_max, cfg.grid.xi_max, z["nxi"])
    tt, xx, ww = np.meshgrid(ts, xs, xis, indexing="ij")
    codes = classify_zone(tt, xx, ww, z["N"], cfg.profile, pair, cfg.grid.k)
    rows = zip(tt.ravel(), xx.ravel(), ww.ravel(), codes.ravel())
    table = write_csv(out / "zones.csv", ["t", "x", "xi", "zone"], rows)
    frac = [(float(t), float(np.mean(codes[i] == 1))) for i, t in enumerate(ts)]
    table2 = write_csv(out / "interior_fraction.csv", ["t", "interior_fraction"], frac)
    fr = np.array([f for _, f in frac])
    verdicts = [{"name": "interior-fraction-decreasing",
                 "pass": bool(np.all(np.diff(fr) <= 1e-12)),
                 "values": [float(v) for v in fr]}]
    return [table, table2], verdicts


_RUNNERS = {
    "solve": _exp_solve,
    "verify-counterexamples": _exp_verify_counterexamples,
    "check-cone": _exp_check_cone,
    "check-energy": _exp_check_energy,
    "symbol-report": _exp_symbol_report,
    "zones-dump": _exp_zones_dump,
}


def run(raw_config: dict, out_dir, seed: int = 42, threads: int = 1) -> int:
    """Run one experiment; returns the process exit status (0 pass / 2 config /
    3 numerical).  ``threads`` is accepted for interface stability; all kernels
    are single-threaded and deterministic."""
    try:
        cfg = RunConfig(raw_config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        artifacts, verdicts = _RUNNERS[cfg.experiment](cfg, out, seed)
    except (ConfigError, SupportError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (SolverError, EllipticityError, QuadratureError, OverflowGuardError,
            ArithmeticError) as e:
        report = getattr(e, "report", None) or getattr(e, "witness", None)
        write_json(out / "abort.json", {"error": str(e), "report": report})
        print(f"numerical abort: {e}", file=sys.stderr)
        return 3
    if verdicts:
        artifacts.append(write_json(out / "verdict.json", {"verdicts": verdicts}))
    build_manifest(out, cfg.raw, _derived(cfg), artifacts,
                   wall_time=time.perf_counter() - t0, seed=seed)
    ok = all(v.get("pass", True) for v in verdicts)
    for v in verdicts:
        print(f"{'PASS' if v.get('pass', True) else 'FAIL'} {v['name']}")
    return 0 if ok else 1


def suite(out_dir, seed: int = 42) -> int:
    """Run the full acceptance battery plus a fault-injection check and write
    one aggregated verdict JSON."""
    from .acceptance import run_all

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results = run_all(echo=print)
    entries = [{"criterion": r.number, "name": r.name, "pass": r.passed,
                "runtime_s": r.runtime_s,
                "details": {k: v for k, v in r.details.items()
                            if isinstance(v, (int, float, bool, str))}}
               for r in results]

    # fault injection: an ellipticity-violating coefficient must surface a witness
    injected = {"name": "injected-ellipticity-fault", "pass": False}
    fam = theorem_coefficient(0.0, 1.25, k=2.0)
    broken = fam.__class__(**{**fam.__dict__, "a": lambda t, x, xi: -np.ones(
        np.broadcast(np.asarray(t), np.asarray(x), np.asarray(xi)).shape)})
    try:
        char_root(excise(broken))
    except EllipticityError as e:
        injected = {"name": "injected-ellipticity-fault", "pass": True,
                    "witness": list(e.witness)}
    entries.append(injected)

    passed = all(e["pass"] for e in entries)
    payload = {"passed": passed, "checks": entries, "seed": seed,
               "wall_time_s": time.perf_counter() - t0}
    write_json(out / "suite.json", payload)
    print(f"{'PASS' if passed else 'FAIL'} suite ({len(entries)} checks)")
    return 0 if passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="singhyp",
        description="Pseudospectral laboratory for singular hyperbolic Cauchy problems")
    parser.add_argument("--config", type=Path, help="experiment config (JSON)")
    parser.add_argument("--out", type=Path, default=Path("singhyp-out"),
                        help="output directory")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--threads", type=int, default=1,
                        help="reserved; kernels are single-threaded deterministic")
    parser.add_argument("--suite", action="store_true",
                        help="run the acceptance battery instead of a config")
    args = parser.parse_args(argv)

    if args.suite:
        return suite(args.out, seed=args.seed)
    if args.config is None:
        parser.error("--config is required unless --suite is given")
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: cannot read {args.config}: {e}", file=sys.stderr)
        return 2
    return run(raw, args.out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
