"""File formats: field snapshots, checkpoints, CSV time series, JSON artifacts.

All writers are bit-stable: floats are serialized with ``repr`` (shortest
round-trip form), dictionary orders are fixed, and nothing derived from wall
time or absolute paths enters the files, so identical runs produce identical
bytes. Non-finite values become ``null`` in JSON (documented lossy corner:
only advisory quantities like the mu = 0 modified Grashof can be infinite).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict
from typing import Optional, Sequence

import numpy as np

from .diagnostics import (
    CONDITION_IDS,
    BoundReport,
    ConditionCheck,
    DiagnosticsRecord,
    ForceStats,
)
from .dynamics import ForcingSpec, PairState, SystemParams
from .errors import IncompatibleGridsError
from .estimator import EstimationTrace
from .spectral import GridSpec, SpectralField, from_coeffs, grid_create

SNAPSHOT_VERSION = 1

TIMESERIES_COLUMNS = (
    ("t", "nu_tilde", "E", "E_N", "Z", "Z_N", "P", "P_N", "Edot_N", "Edot_N_fd")
    + ("J1", "J2", "D", "denominator", "nondegen_margin")
    + tuple(f"{f}_h{s}" for f in ("u", "ut", "w") for s in range(4))
    + tuple(f"cond_{cid}" for cid in CONDITION_IDS)
)


def _fmt(x: float) -> str:
    return repr(float(x))


def snapshot_field(field: SpectralField) -> dict:
    """Textual snapshot: (n, list of (k1, k2, Re u1, Im u1, Re u2, Im u2)).

    Only nonzero modes are listed, in lexicographic (k1, k2) order; floats
    round-trip exactly through repr, so restore is bit-exact.
    """
    grid = field.grid
    c1, c2 = field.coeffs
    nz = np.argwhere((c1 != 0) | (c2 != 0))
    modes = []
    for i, j in nz:
        k1 = int(grid.k1[i])
        k2 = int(grid.k1[j])
        a, b = c1[i, j], c2[i, j]
        modes.append((k1, k2, a.real, a.imag, b.real, b.imag))
    modes.sort(key=lambda m: (m[0], m[1]))
    return {"n": grid.n, "modes": [list(m) for m in modes]}


def restore_field(snap: dict, grid: Optional[GridSpec] = None) -> SpectralField:
    n = int(snap["n"])
    if grid is None:
        grid = grid_create(n)
    elif grid.n != n:
        raise IncompatibleGridsError(f"snapshot has n={n}, grid has n={grid.n}")
    coeffs = np.zeros((2, n, n), dtype=np.complex128)
    for k1, k2, re1, im1, re2, im2 in snap["modes"]:
        i, j = int(k1) % n, int(k2) % n
        coeffs[0, i, j] = complex(re1, im1)
        coeffs[1, i, j] = complex(re2, im2)
    return from_coeffs(grid, coeffs)


def params_to_dict(p: SystemParams) -> dict:
    forcing = {
        "kind": p.forcing.kind,
        "amplitude": p.forcing.amplitude,
        "wavevector": list(p.forcing.wavevector) if p.forcing.wavevector else None,
        "band": list(p.forcing.band) if p.forcing.band else None,
        "phase": p.forcing.phase,
    }
    return {
        "nu": p.nu,
        "nu_tilde": p.nu_tilde,
        "mu": p.mu,
        "n_obs": p.n_obs,
        "dt": p.dt,
        "forcing": forcing,
        "constants": dict(sorted(p.constants.items())),
    }


def params_from_dict(d: dict) -> SystemParams:
    f = d["forcing"]
    forcing = ForcingSpec(
        kind=f["kind"],
        amplitude=f["amplitude"],
        wavevector=tuple(f["wavevector"]) if f.get("wavevector") else None,
        band=tuple(f["band"]) if f.get("band") else None,
        phase=f.get("phase", 0.0),
    )
    return SystemParams(
        nu=d["nu"],
        nu_tilde=d["nu_tilde"],
        mu=d["mu"],
        n_obs=d["n_obs"],
        dt=d["dt"],
        forcing=forcing,
        constants=dict(d.get("constants", {})),
    )


def save_checkpoint(path, state: PairState, p: SystemParams) -> None:
    """(SystemParams, PairState) in the snapshot format; resume is bit-exact."""
    doc = {
        "format": "nudgevisc-checkpoint",
        "version": SNAPSHOT_VERSION,
        "t": state.t,
        "params": params_to_dict(p),
        "u": snapshot_field(state.u),
        "u_tilde": snapshot_field(state.u_tilde),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> tuple[PairState, SystemParams]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "nudgevisc-checkpoint":
        raise ValueError(f"{path} is not a checkpoint file")
    p = params_from_dict(doc["params"])
    grid = grid_create(int(doc["u"]["n"]))
    u = restore_field(doc["u"], grid)
    ut = restore_field(doc["u_tilde"], grid)
    return PairState(float(doc["t"]), u, ut), p


def write_timeseries(records: Sequence[DiagnosticsRecord], path) -> None:
    """CSV with a frozen, versioned column order (header comment line)."""
    with open(path, "w") as fh:
        fh.write(f"# nudgevisc-timeseries v{SNAPSHOT_VERSION} columns follow\n")
        fh.write(",".join(TIMESERIES_COLUMNS) + "\n")
        for r in records:
            row = [
                r.t, r.nu_tilde, r.E, r.E_N, r.Z, r.Z_N, r.P, r.P_N,
                r.Edot_N, r.Edot_N_fd, r.J1, r.J2, r.D,
                r.denominator, r.nondegen_margin,
            ]
            for name in ("u", "u_tilde", "w"):
                row.extend(r.norms[name])
            for cid in CONDITION_IDS:
                row.append(r.condition_margins.get(cid, math.nan))
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_timeseries(path) -> dict[str, np.ndarray]:
    """Columns of a timeseries CSV as float arrays keyed by column name."""
    with open(path) as fh:
        comment = fh.readline()
        if not comment.startswith("# nudgevisc-timeseries"):
            raise ValueError(f"{path} is not a nudgevisc timeseries file")
        names = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    data = np.array([[float(x) for x in row] for row in rows]) if rows else np.zeros(
        (0, len(names))
    )
    return {name: data[:, i] for i, name in enumerate(names)}


def trace_to_dict(trace: EstimationTrace) -> dict:
    return {
        "format": "nudgevisc-trace",
        "version": SNAPSHOT_VERSION,
        "nu0": trace.nu0,
        "nu_true": trace.nu_true,
        "nu_final": trace.nu_final,
        "events": [
            {
                "m": e.m,
                "t": e.t,
                "nu_before": e.nu_before,
                "nu_after": e.nu_after,
                "denominator": e.denominator,
                "E_N": e.E_N,
                "accepted": e.accepted,
                "reason": e.reason,
                "beta": e.beta,
            }
            for e in trace.events
        ],
    }


def write_trace(trace: EstimationTrace, path) -> None:
    with open(path, "w") as fh:
        json.dump(_sanitize(trace_to_dict(trace)), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _sanitize(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    return obj


def force_stats_to_dict(stats: ForceStats, conditions: Sequence[ConditionCheck]) -> dict:
    return {
        "format": "nudgevisc-force-stats",
        "version": SNAPSHOT_VERSION,
        "G": stats.G,
        "G_tilde": stats.G_tilde,
        "sigma": {str(k): v for k, v in sorted(stats.sigma.items())},
        "R": {str(k): v for k, v in sorted(stats.R.items())},
        "K0": stats.K0,
        "K1": stats.K1,
        "K2": stats.K2,
        "conditions": [asdict(c) for c in conditions],
    }


def write_force_stats(stats, conditions, path) -> None:
    with open(path, "w") as fh:
        json.dump(_sanitize(force_stats_to_dict(stats, conditions)), fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_plot_data(
    trace: Optional[EstimationTrace],
    records: Sequence[DiagnosticsRecord],
    path,
) -> None:
    """Tidy long-format (series, x, value) rows, no resampling.

    Estimator series use the update index m as x; record series use time.
    """

    def log10(v: float) -> float:
        return math.log10(v) if v > 0 else -math.inf

    with open(path, "w") as fh:
        fh.write(f"# nudgevisc-plotdata v{SNAPSHOT_VERSION}\n")
        fh.write("series,x,value\n")
        if trace is not None and trace.nu_true is not None:
            for e in trace.accepted:
                fh.write(
                    f"log10_nu_error,{_fmt(e.m)},{_fmt(log10(abs(e.nu_after - trace.nu_true)))}\n"
                )
            for e in trace.accepted:
                if e.beta is not None:
                    fh.write(f"beta,{_fmt(e.m)},{_fmt(e.beta)}\n")
            for e in trace.accepted:
                fh.write(f"nu_estimate,{_fmt(e.t)},{_fmt(e.nu_after)}\n")
        for r in records:
            fh.write(f"log10_w_l2,{_fmt(r.t)},{_fmt(log10(r.norms['w'][0]))}\n")
        for r in records:
            fh.write(f"log10_aw_sq,{_fmt(r.t)},{_fmt(log10(2.0 * r.P))}\n")


SUMMARY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": [
        "format",
        "version",
        "mode",
        "grid_n",
        "seed",
        "artifacts",
        "n_accepted",
        "n_skipped",
    ],
    "properties": {
        "format": {"const": "nudgevisc-summary"},
        "version": {"type": "integer"},
        "mode": {"enum": ["twin", "sync_only", "verify"]},
        "grid_n": {"type": "integer"},
        "seed": {"type": "integer"},
        "nu_true": {"type": ["number", "null"]},
        "nu_final": {"type": ["number", "null"]},
        "final_abs_error": {"type": ["number", "null"]},
        "final_rel_error": {"type": ["number", "null"]},
        "betas": {"type": "array", "items": {"type": ["number", "null"]}},
        "n_accepted": {"type": "integer"},
        "n_skipped": {"type": "integer"},
        "inside_ball_after_spinup": {"type": ["boolean", "null"]},
        "advective_cfl": {"type": ["number", "null"]},
        "condition_report": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "mu", "bound", "kind", "margin", "satisfied"],
            },
        },
        "bound_checks": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["n_samples", "n_violations", "worst_slack", "satisfied"],
            },
        },
        "force_stats": {"type": ["object", "null"]},
        "invariant_suite": {
            "type": ["array", "null"],
            "items": {
                "type": "object",
                "required": ["name", "worst", "tol", "passed"],
            },
        },
        "artifacts": {"type": "object"},
    },
}


def write_summary(summary_dict: dict, path) -> None:
    """Serialize the run summary (schema SUMMARY_SCHEMA); deterministic bytes."""
    with open(path, "w") as fh:
        json.dump(_sanitize(summary_dict), fh, indent=1, sort_keys=True)
        fh.write("\n")


def bound_report_to_dict(report: Optional[BoundReport]) -> dict:
    if report is None:
        return {}
    return {
        cid: {
            "n_samples": c.n_samples,
            "n_violations": c.n_violations,
            "worst_slack": c.worst_slack,
            "satisfied": c.satisfied,
        }
        for cid, c in sorted(report.checks.items())
    }
