"""Experiment orchestration: spin-up, twin/sync/verify runs, artifacts."""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics as dg
from . import dynamics as dyn
from . import io as nio
from . import spectral as sp
from .config import ExperimentConfig
from .errors import ZeroForceError
from .estimator import EstimationTrace, run_estimation

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "NUDGEVISC_OUTPUT_DIR"


@dataclass
class RunSummary:
    """In-memory result of one experiment.

    ``wall_time`` is kept here for the caller but deliberately left out of
    the serialized summary so re-runs stay byte-identical.
    """

    mode: str
    grid_n: int
    seed: int
    nu_true: Optional[float] = None
    nu_final: Optional[float] = None
    final_abs_error: Optional[float] = None
    final_rel_error: Optional[float] = None
    betas: list = field(default_factory=list)
    n_accepted: int = 0
    n_skipped: int = 0
    condition_report: list = field(default_factory=list)
    bound_report: Optional[dg.BoundReport] = None
    force_stats: Optional[dg.ForceStats] = None
    inside_ball_after_spinup: Optional[bool] = None
    advective_cfl: Optional[float] = None
    invariant_suite: Optional[list] = None
    artifacts: dict = field(default_factory=dict)
    output_dir: Optional[Path] = None
    trace: Optional[EstimationTrace] = None
    records: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_json_dict(self) -> dict:
        stats = self.force_stats
        return {
            "format": "nudgevisc-summary",
            "version": nio.SNAPSHOT_VERSION,
            "mode": self.mode,
            "grid_n": self.grid_n,
            "seed": self.seed,
            "nu_true": self.nu_true,
            "nu_final": self.nu_final,
            "final_abs_error": self.final_abs_error,
            "final_rel_error": self.final_rel_error,
            "betas": list(self.betas),
            "n_accepted": self.n_accepted,
            "n_skipped": self.n_skipped,
            "inside_ball_after_spinup": self.inside_ball_after_spinup,
            "advective_cfl": self.advective_cfl,
            "condition_report": [
                {
                    "id": c.id,
                    "mu": c.mu,
                    "bound": c.bound,
                    "kind": c.kind,
                    "margin": c.margin,
                    "satisfied": c.satisfied,
                }
                for c in self.condition_report
            ],
            "bound_checks": nio.bound_report_to_dict(self.bound_report),
            "force_stats": (
                None
                if stats is None
                else {
                    "G": stats.G,
                    "G_tilde": stats.G_tilde,
                    "sigma": {str(k): v for k, v in sorted(stats.sigma.items())},
                    "R": {str(k): v for k, v in sorted(stats.R.items())},
                    "K0": stats.K0,
                    "K1": stats.K1,
                    "K2": stats.K2,
                }
            ),
            "invariant_suite": self.invariant_suite,
            "artifacts": dict(sorted(self.artifacts.items())),
        }


@dataclass(frozen=True)
class SuiteCheck:
    name: str
    worst: float
    tol: float
    passed: bool


def _initial_condition(cfg: ExperimentConfig, grid, g_field) -> sp.SpectralField:
    p = cfg.params
    rng = np.random.default_rng(cfg.run.seed)
    amp = cfg.run.ic_amplitude
    if amp is None:
        grash = sp.norm_hs(g_field, 0.0) / p.nu**2
        amp = 0.02 * p.nu * grash if grash > 0 else 0.05
    kmax = min(6, grid.dealias_cutoff)
    return sp.random_divergence_free(grid, rng, amplitude=amp, kmin=1, kmax=kmax, decay=1.0)


def resolve_output_dir(cfg: ExperimentConfig, override: Optional[str] = None) -> Path:
    """CLI flag beats the environment variable beats the config value."""
    if override:
        return Path(override)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(cfg.run.output_dir)


def run_experiment(cfg: ExperimentConfig, output_dir: Optional[str] = None) -> RunSummary:
    """Spin up, run the configured mode, and write all artifacts.

    Deterministic for a fixed config and seed: identical re-runs produce
    byte-identical CSV and JSON artifacts.
    """
    t_wall = time.perf_counter()
    out = resolve_output_dir(cfg, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    mode = cfg.run.mode
    summary = RunSummary(mode=mode, grid_n=cfg.grid_n, seed=cfg.run.seed)
    summary.output_dir = out

    if mode == "verify":
        suite = run_invariant_suite(cfg.grid_n, cfg.run.seed)
        summary.invariant_suite = [
            {"name": c.name, "worst": c.worst, "tol": c.tol, "passed": c.passed}
            for c in suite
        ]
        summary.artifacts["summary"] = "summary.json"
        nio.write_summary(summary.to_json_dict(), out / "summary.json")
        summary.wall_time = time.perf_counter() - t_wall
        return summary

    grid = sp.grid_create(cfg.grid_n)
    p = cfg.params
    p.validate_with_grid(grid)
    g_field = dyn.make_forcing(p.forcing, grid)
    summary.nu_true = p.nu

    try:
        stats = dg.force_stats(g_field, p)
    except ZeroForceError:
        stats = None
    summary.force_stats = stats
    if stats is not None:
        summary.condition_report = dg.verify_mu_conditions(p, stats)

    u0 = _initial_condition(cfg, grid, g_field)
    if cfg.run.t_spin > 0:
        u_spun = dyn.spin_up(u0, p, cfg.run.t_spin)
    else:
        u_spun = u0
    summary.inside_ball_after_spinup = dyn.inside_absorbing_ball(u_spun, p, g_field)

    pair0 = dyn.PairState(0.0, u_spun, sp.zero_field(grid))
    summary.advective_cfl = dyn.advective_cfl(pair0, p)
    recorder = dg.DiagnosticsRecorder(stride=cfg.run.record_stride, stats=stats)
    stepper = dyn.PairStepper(grid, p, g_field)

    trace = None
    if mode == "twin":
        trace = run_estimation(
            pair0, p, cfg.estimator, cfg.run.t_final, sink=recorder, stepper=stepper
        )
        final_state = trace.final_state
    else:  # sync_only
        final_state = dyn.integrate_window(
            pair0, p, cfg.run.t_final, sink=recorder, stepper=stepper
        )
    records = recorder.records
    dg.fill_fd_derivatives(records)
    summary.records = records
    summary.trace = trace

    if stats is not None and records:
        checks = ["observer_h1", "observer_h2", "observer_h3", "reference_ball"]
        if mode == "sync_only":
            checks.append("sensitivity_decay")
        summary.bound_report = dg.bound_checks(records, p, stats, checks=checks)

    if trace is not None:
        summary.n_accepted = len(trace.accepted)
        summary.n_skipped = len(trace.events) - summary.n_accepted
        summary.nu_final = trace.nu_final
        summary.betas = trace.betas
        if trace.nu_true is not None:
            summary.final_abs_error = abs(trace.nu_final - trace.nu_true)
            summary.final_rel_error = summary.final_abs_error / trace.nu_true

    nio.write_timeseries(records, out / "timeseries.csv")
    summary.artifacts["timeseries"] = "timeseries.csv"
    nio.write_plot_data(trace, records, out / "plotdata.csv")
    summary.artifacts["plotdata"] = "plotdata.csv"
    if trace is not None:
        nio.write_trace(trace, out / "trace.json")
        summary.artifacts["trace"] = "trace.json"
    if stats is not None:
        nio.write_force_stats(stats, summary.condition_report, out / "force_stats.json")
        summary.artifacts["force_stats"] = "force_stats.json"
    params_final = p
    if trace is not None and trace.nu_tilde_final is not None:
        from dataclasses import replace

        params_final = replace(p, nu_tilde=trace.nu_tilde_final)
    nio.save_checkpoint(out / "checkpoint.json", final_state, params_final)
    summary.artifacts["checkpoint"] = "checkpoint.json"
    summary.artifacts["summary"] = "summary.json"
    nio.write_summary(summary.to_json_dict(), out / "summary.json")
    summary.wall_time = time.perf_counter() - t_wall
    return summary


def run_invariant_suite(n: int, seed: int = 0, n_fields: int = 8) -> list[SuiteCheck]:
    """Self-test of the spectral operators on seeded random fields."""
    grid = sp.grid_create(n)
    rng = np.random.default_rng(seed)
    checks: list[SuiteCheck] = []

    def record(name: str, worst: float, tol: float) -> None:
        checks.append(SuiteCheck(name, float(worst), tol, bool(worst <= tol)))

    fields = [
        sp.random_divergence_free(grid, rng, amplitude=1.0 + 0.1 * i, decay=0.2)
        for i in range(n_fields)
    ]

    worst = 0.0
    for f in fields:
        worst = max(worst, sp.divergence_max(f) / max(f.max_coeff(), 1e-300))
        lp = sp.leray_project(f)
        worst = max(worst, float(np.max(np.abs(lp.coeffs - f.coeffs))) / max(f.max_coeff(), 1e-300))
    record("leray_idempotent_divfree", worst, 1e-12)

    x = sp.TWO_PI * np.arange(n) / n
    xx, yy = np.meshgrid(x, x, indexing="ij")
    gradient = np.stack((-np.sin(xx) * np.cos(yy), -np.cos(xx) * np.sin(yy)))
    gfield = sp.from_physical(grid, gradient)
    record(
        "leray_kills_gradients",
        sp.leray_project(gfield).max_coeff() / max(gfield.max_coeff(), 1e-300),
        1e-12,
    )

    worst1 = worst2 = 0.0
    for i in range(n_fields - 1):
        u, v = fields[i], fields[i + 1]
        o1 = abs(sp.inner_hs(sp.bilinear(u, v), v, 0.0))
        worst1 = max(worst1, o1 / (sp.norm_hs(u, 1.0) * sp.norm_hs(v, 1.0) ** 2))
        o2 = abs(sp.inner_hs(sp.bilinear(u, u), sp.stokes_apply(u, 2.0), 0.0))
        worst2 = max(worst2, o2 / (sp.norm_hs(u, 1.0) ** 2 * sp.norm_hs(u, 2.0)))
    record("bilinear_orthogonality_energy", worst1, 1e-10)
    record("bilinear_orthogonality_enstrophy", worst2, 1e-10)

    worst = 0.0
    worst_n = 0.0
    dx = sp.TWO_PI / n
    for f in fields[:3]:
        phys = sp.to_physical(f)
        back = sp.from_physical(grid, phys)
        worst = max(worst, float(np.max(np.abs(back.coeffs - f.coeffs))) / max(f.max_coeff(), 1e-300))
        l2_phys = math.sqrt(float(np.sum(phys**2)) * dx * dx)
        worst_n = max(worst_n, abs(l2_phys - sp.norm_hs(f, 0.0)) / sp.norm_hs(f, 0.0))
    record("plancherel_roundtrip", worst, 1e-12)
    record("plancherel_l2_match", worst_n, 1e-10)

    worst = 0.0
    for f in fields[:3]:
        for s in (0.0, 1.0, 2.0):
            hom = sp.norm_hs(f, s) ** 2
            inhom = float(
                np.sum(
                    (1.0 + grid.k2) ** s
                    * (np.abs(f.coeffs[0]) ** 2 + np.abs(f.coeffs[1]) ** 2)
                )
            ) * sp.PLANCHEREL
            ok = hom <= inhom * (1 + 1e-12) and inhom <= 2.0**s * hom * (1 + 1e-12)
            worst = max(worst, 0.0 if ok else 1.0)
    record("norm_equivalence", worst, 0.5)

    worst = 0.0
    n_cut = max(grid.dealias_cutoff // 2, 1)
    for f in fields[:3]:
        low = sp.lowpass(f, n_cut)
        high = f - low
        worst = max(worst, float(np.max(np.abs((low + high).coeffs - f.coeffs))))
        worst = max(worst, abs(sp.inner_hs(low, high, 0.0)))
        worst = max(worst, abs(sp.inner_hs(low, high, 1.0)))
        worst = max(
            worst, float(np.max(np.abs(sp.lowpass(low, n_cut).coeffs - low.coeffs)))
        )
    record("lowpass_decomposition", worst, 1e-12)

    u, v = fields[0], fields[1]
    ref = sp.bilinear(u, v)
    scaled = sp.bilinear(u * 2.5, v * (-1.25))
    defect = float(np.max(np.abs(scaled.coeffs - (2.5 * -1.25) * ref.coeffs)))
    record("bilinearity_scaling", defect / max(ref.max_coeff(), 1e-300), 1e-12)

    return checks
