"""Command-line front end: one subcommand per experiment family."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, linkmodel, planner, quartic, simkit
from .errors import PbcoverError

log = logging.getLogger("pbcover")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRUNCATED = 3

BASE_COLUMNS = ["scenario", "M", "S", "d", "r_cov", "d_star", "method", "seed"]


def _fmt(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if v != v else f"{v:.10g}"
    if v is None:
        return ""
    return str(v)


def _git_hash() -> str | None:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None if out.returncode == 0 else None


class Run:
    """Collects rows for one subcommand and writes the CSV, sidecar and effective config."""

    def __init__(self, name: str, rc: cfgmod.RunConfig, args, extra_columns: list[str]):
        self.name = name
        self.rc = rc
        self.args = args
        self.columns = BASE_COLUMNS + extra_columns
        self.rows: list[dict] = []
        self.row_ms: list[float] = []
        self.truncated = False
        self.t0 = time.perf_counter()
        self._tick = self.t0

    def add(self, **row):
        now = time.perf_counter()
        self.row_ms.append(round(1000 * (now - self._tick), 3))
        self._tick = now
        row.setdefault("scenario", self.rc.scenario)
        row.setdefault("seed", self.rc.sim.seed)
        unknown = set(row) - set(self.columns)
        if unknown:
            raise KeyError(f"unexpected columns {sorted(unknown)}")
        if row.get("truncated"):
            self.truncated = True
        self.rows.append(row)

    def write(self, out: Path, extra_meta: dict | None = None) -> Path:
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.name}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(row.get(c)) for c in self.columns])
        eff = out / f"{self.name}.effective.yaml"
        eff.write_text(self.rc.dump())
        meta = {
            "subcommand": self.name,
            "version": __version__,
            "git_hash": _git_hash(),
            "seed": self.rc.sim.seed,
            "threads": self.args.threads,
            "tolerances": {
                "grid_step_r_m": self.rc.planner.grid_step_r_m,
                "grid_step_d_m": self.rc.planner.grid_step_d_m,
                "closed_vs_numeric_d_m": 2 * self.rc.planner.grid_step_d_m,
                "root_refine_m": 1e-3,
            },
            "conversions": self.rc.conversions(),
            "effective_config": eff.name,
            "config_sha256": hashlib.sha256(self.rc.dump().encode()).hexdigest(),
            "runtime_ms": round(1000 * (time.perf_counter() - self.t0), 3),
            "row_runtime_ms": self.row_ms,
            "truncated": self.truncated,
        }
        meta.update(extra_meta or {})
        (out / f"{self.name}.json").write_text(json.dumps(meta, indent=2) + "\n")
        return path


def _query(rc, cfg, m, s, d=0.0) -> planner.GcdQuery:
    p = rc.planner
    return planner.GcdQuery(cfg, linkmodel.Placement(m, d, s), rc.qos_spec(), rc.fading_spec(),
                            r_upper=p.r_upper_m, grid_step_r=p.grid_step_r_m, grid_step_d=p.grid_step_d_m,
                            threshold_method=p.threshold_method)


def cmd_solve_dstar(rc, args) -> Run:
    run = Run("solve-dstar", rc, args, ["path_agrees", "gap_detected", "truncated"])
    cfg = rc.rf_config()
    tol = 2 * rc.planner.grid_step_d_m
    for s in rc.sweep.s_values:
        for m in rc.sweep.m_values:
            if s > m:
                continue
            q = _query(rc, cfg, m, s)
            num = planner.optimize_d(q, threads=args.threads)
            ref = None
            if s <= 2 and cfg.circuit_power_watts == 0:
                d_c = quartic.theorem1_dstar(q.varsigma(), m)
                ref = (d_c, planner.closed_form_gcd(q, d_c), "ClosedForm")
            elif s == m and m > 2 and cfg.circuit_power_watts == 0:
                chi = planner.chi_approx_dstar(q)
                ref = (chi.d_star, chi.r_cov, "ChiApprox")
            agree = None if ref is None else abs(ref[0] - num.d_star) <= tol
            if agree is False:
                log.warning("M=%d S=%d: closed-form and numeric d* differ by %.3f m", m, s, abs(ref[0] - num.d_star))
            run.add(M=m, S=s, d=num.d_star, r_cov=num.r_cov, d_star=num.d_star, method="Numeric",
                    path_agrees=agree, gap_detected=num.gap_detected, truncated=num.truncated)
            if ref is not None:
                run.add(M=m, S=s, d=ref[0], r_cov=ref[1], d_star=ref[0], method=ref[2],
                        path_agrees=agree, gap_detected=False, truncated=False)
    return run


def cmd_gcd_curve(rc, args) -> Run:
    run = Run("gcd-curve", rc, args, ["d_inf", "r_cov_inf", "mc_r_cov", "gap_detected", "truncated"])
    cfg = rc.rf_config()
    sw = rc.sweep
    d_values = sw.d_min_m + sw.d_step_m * np.arange(int(round((sw.d_max_m - sw.d_min_m) / sw.d_step_m)) + 1)
    plan = _sim_plan(rc, args)
    for s in sw.s_values:
        for m in sw.m_values:
            if s > m:
                continue
            q = _query(rc, cfg, m, s)
            d_inf, r_inf = (quartic.corollary1_asymptotics(q.varsigma()) if s <= 2 and cfg.circuit_power_watts == 0
                            else (None, None))
            results = planner.gcd_batch(d_values, q, threads=args.threads)
            for d, res in zip(d_values, results):
                mc = None
                if rc.sim.mc_overlay:
                    mc = simkit.empirical_gcd(linkmodel.Placement(m, float(d), s), cfg, rc.fading_spec(),
                                              rc.qos_spec(), plan, q.r_upper_value)
                run.add(M=m, S=s, d=float(d), r_cov=res.r_cov, d_star=None, method="Numeric", d_inf=d_inf,
                        r_cov_inf=r_inf, mc_r_cov=mc, gap_detected=res.gap_detected, truncated=res.truncated)
    return run


def cmd_circuit_power(rc, args) -> Run:
    run = Run("circuit-power", rc, args, ["xi_dbm", "transmit_power_dbm", "zero_coverage", "truncated"])
    c = rc.circuit
    for xi in c.circuit_power_dbm:
        cfg = rc.rf_config(transmit_power_dbm=c.transmit_power_dbm, circuit_power_dbm=xi)
        for s in c.s_values:
            for m in c.m_values:
                if s > m:
                    continue
                res = planner.gcd_circuit_power(_query(rc, cfg, m, s))
                run.add(M=m, S=s, d=res.d_star, r_cov=res.r_cov, d_star=res.d_star, method=res.method.value,
                        xi_dbm=xi, transmit_power_dbm=c.transmit_power_dbm, zero_coverage=res.zero_coverage,
                        truncated=res.truncated)
    return run


def _sim_plan(rc, args, cell_size=None) -> simkit.SimPlan:
    s = rc.sim
    return simkit.SimPlan(trials_per_point=args.trials or s.trials_per_point, seed=s.seed,
                          cell_size=cell_size or s.cell_size_m, extent=s.extent_m, confidence_z=s.confidence_z)


def _scheme_tasks(rc):
    tasks = [("two_tier", m) for m in rc.schemes.two_tier_m_values]
    tasks += [("random", m) for m in rc.schemes.area_m_values]
    return tasks


def _scheme_task(rc, args, kind, m) -> list[dict]:
    cfg = rc.rf_config()
    spec, qos = rc.fading_spec(), rc.qos_spec()
    plan = _sim_plan(rc, args, rc.schemes.cell_size_m)
    if kind == "two_tier":
        rep = simkit.compare_two_tier(m, cfg, spec, qos, plan)
        adv = 100 * (rep.single_tier_gcd / rep.best_two_tier_gcd - 1) if rep.best_two_tier_gcd > 0 else None
        b = rep.best
        return [
            dict(M=m, S=1, d=None, r_cov=rep.single_tier_gcd, method="Numeric", scheme="single_tier",
                 metric="gcd_m", value=rep.single_tier_gcd, advantage_pct=adv),
            dict(M=m, S=1, d=b["d_outer"], r_cov=b["gcd"], method="Numeric", scheme="two_tier",
                 metric="gcd_m", value=b["gcd"], m_inner=b["m_inner"], d_inner=b["d_inner"],
                 rotation=b["rotation"], advantage_pct=adv),
        ]
    d_sym, sym = simkit.best_symmetric_area(m, cfg, spec, qos, plan)
    d_gcd = simkit.gcd_optimal_d(m, cfg, spec, qos)
    rad, stats = simkit.best_random_area(m, d_gcd, rc.schemes.n_realizations, cfg, spec, qos, plan,
                                         rc.schemes.n_radii)
    adv = 100 * (sym.total_area_m2 / stats.mean - 1)
    return [
        dict(M=m, S=1, d=d_sym, r_cov=sym.gcd_empirical, method="Numeric", scheme="symmetric",
             metric="area_m2", value=sym.total_area_m2, advantage_pct=adv),
        dict(M=m, S=1, d=rad, r_cov=None, method="Numeric", scheme="random", metric="area_m2",
             value=stats.mean, value_std=stats.std, advantage_pct=adv),
    ]


def cmd_compare_schemes(rc, args) -> Run:
    cols = ["scheme", "metric", "value", "value_std", "advantage_pct", "m_inner", "d_inner", "rotation"]
    run = Run("compare-schemes", rc, args, cols)
    out = Path(args.out or rc.output_dir)
    ckpt = out / "compare-schemes.checkpoint.json"
    key = hashlib.sha256((rc.dump() + str(args.trials)).encode()).hexdigest()
    done = {}
    if ckpt.exists():
        state = json.loads(ckpt.read_text())
        if state.get("config_sha256") == key:
            done = {int(k): v for k, v in state["tasks"].items()}
            log.info("resuming from %d finished tasks", len(done))
    for i, (kind, m) in enumerate(_scheme_tasks(rc)):
        if i not in done:
            done[i] = _scheme_task(rc, args, kind, m)
            out.mkdir(parents=True, exist_ok=True)
            ckpt.write_text(json.dumps({"config_sha256": key, "tasks": done}))
        for row in done[i]:
            run.add(**row)
    return run


COMMANDS = {
    "solve-dstar": cmd_solve_dstar,
    "gcd-curve": cmd_gcd_curve,
    "circuit-power": cmd_circuit_power,
    "compare-schemes": cmd_compare_schemes,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pbcover", description="PB placement and coverage experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run config (default: shipped baseline)")
        p.add_argument("--out", help="output directory (default: output_dir from the config)")
        p.add_argument("--seed", type=int, help="override sim.seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--strict", action="store_true", help="exit 3 if any search hit r_upper")
        p.add_argument("--trials", type=int, help="override sim.trials_per_point")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rc = cfgmod.load(args.config)
        if args.seed is not None:
            rc = dataclasses.replace(rc, sim=dataclasses.replace(rc.sim, seed=args.seed))
        if args.trials is not None and args.trials < 1000:
            raise cfgmod.ConfigError("--trials must be >= 1000")
        if args.threads < 1:
            raise cfgmod.ConfigError("--threads must be >= 1")
        run = COMMANDS[args.command](rc, args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PbcoverError as exc:
        if isinstance(exc, ValueError):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise
    path = run.write(Path(args.out or rc.output_dir))
    print(path)
    if run.truncated:
        log.warning("some searches reached r_upper; enlarge planner.r_upper_m")
        if args.strict:
            return EXIT_TRUNCATED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
