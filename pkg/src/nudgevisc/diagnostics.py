"""Functionals, constants, conditions and bounds evaluated on live states.

Everything here is a pure function of spectral fields and parameters. The
observed-error energies (E, Z, P and their low-pass versions) are accumulated
mode group by mode group so the projection inequalities E_N <= E, Z_N <= Z,
P_N <= P and the Poincare chain E <= Z <= P hold exactly in floating point,
not just to a tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from . import spectral
from .dynamics import PairState, SystemParams
from .errors import ContractViolationError, WindowTooShortError, ZeroForceError
from .spectral import PLANCHEREL, SpectralField, lowpass

# Every unnamed absolute constant of the analysis lives in one map with
# default 1.0; overrides come from SystemParams.constants. The keys:
#   c0_tilde  existence condition  mu <= c0_tilde N^2 nu_tilde
#   c0        tracking condition   mu <= c0 N^2 nu
#   alpha2, alpha3          lower-bound constants of the observer H2/H3 balls
#   alpha1_tilde, alpha2_tilde, alpha3_tilde   observer ball radii factors
#   c1, c2    sensitivity conditions on mu
#   c3        constant inside K2
#   c4        power condition mu >= c4 (G v 1)^2
#   big_c     generic constant in K0, K1
#   rad_c<k>  absorbing-ball radius factor of order k (k >= 2)
KNOWN_CONSTANTS = (
    "c0_tilde",
    "c0",
    "c1",
    "c2",
    "c3",
    "c4",
    "big_c",
    "alpha2",
    "alpha3",
    "alpha1_tilde",
    "alpha2_tilde",
    "alpha3_tilde",
)


def theorem_constant(constants: Mapping[str, float], name: str) -> float:
    return float(constants.get(name, 1.0))


class EnergyFunctionals(NamedTuple):
    E: float
    E_N: float
    Z: float
    Z_N: float
    P: float
    P_N: float


def _masked_energy(w: SpectralField, n_obs: int) -> EnergyFunctionals:
    grid = w.grid
    q = np.abs(w.coeffs[0]) ** 2 + np.abs(w.coeffs[1]) ** 2
    low = grid.k2 <= float(n_obs) ** 2
    half = 0.5 * PLANCHEREL

    def split(weight: np.ndarray) -> tuple[float, float]:
        wl = float(np.sum(np.where(low, weight * q, 0.0)))
        wh = float(np.sum(np.where(low, 0.0, weight * q)))
        return half * wl, half * wl + half * wh

    ones = np.ones_like(grid.k2)
    e_n, e = split(ones)
    z_n, z = split(grid.k2)
    p_n, p = split(grid.k2 * grid.k2)
    return EnergyFunctionals(E=e, E_N=e_n, Z=z, Z_N=z_n, P=p, P_N=p_n)


def energy_functionals(w: SpectralField, n_obs: int) -> EnergyFunctionals:
    """E = |w|^2/2, Z = ||w||^2/2, P = |Aw|^2/2 and their low-pass versions.

    The full functionals are computed as (low band) + (complement), so the
    projection inequalities hold exactly, and the Poincare chain E <= Z <= P
    is exact because the |k|^{2s} weights are monotone in s on |k| >= 1.
    """
    return _masked_energy(w, n_obs)


def compute_J(
    u: SpectralField,
    u_tilde: SpectralField,
    w: SpectralField,
    n_obs: int,
    delta_nu: float,
) -> tuple[float, float]:
    """The two sign-indefinite sources of the observed-error power balance.

    J1 = <B(w, w_N), Q_N w> - <(DB_N u) w, w_N> - dnu <A ut_N, w_N>
    J2 = -<B_N(w, w), A w_N> - <(DB_N u) w, A w_N> - dnu <A ut_N, A w_N>

    with (DB v1) v2 = B(v1, v2) + B(v2, v1) and Q_N = I - P_N. The caller
    must pass w = u_tilde - u (checked to 1e-10 relative).
    """
    scale = max(w.max_coeff(), u.max_coeff(), u_tilde.max_coeff(), 1e-300)
    defect = float(np.max(np.abs(w.coeffs - (u_tilde.coeffs - u.coeffs))))
    if defect > 1e-10 * scale:
        raise ContractViolationError(
            f"w must equal u_tilde - u (defect {defect:g} vs scale {scale:g})"
        )
    w_n = lowpass(w, n_obs)
    q_w = w - w_n
    ut_n = lowpass(u_tilde, n_obs)
    transfer = spectral.bilinear(w, w_n)
    db = spectral.bilinear(u, w) + spectral.bilinear(w, u)
    b_ww = spectral.bilinear(w, w)
    aw_n = spectral.stokes_apply(w_n, 2.0)
    j1 = (
        spectral.inner_hs(transfer, q_w, 0.0)
        - spectral.inner_hs(db, w_n, 0.0)
        - delta_nu * spectral.inner_hs(ut_n, w_n, 1.0)
    )
    j2 = (
        -spectral.inner_hs(b_ww, aw_n, 0.0)
        - spectral.inner_hs(db, aw_n, 0.0)
        - delta_nu * spectral.inner_hs(ut_n, w_n, 2.0)
    )
    return j1, j2


def dissipation_D(
    e_n: float, z_n: float, p_n: float, j1: float, mu: float, nu: float
) -> float:
    """Sign-definite dissipation of the squared observed power.

    8 mu^3 E_N^2 + 32 mu^2 nu E_N Z_N + 16 mu nu^2 E_N P_N
      + 16 nu^3 Z_N P_N + 24 mu nu^2 Z_N^2 + 2 mu J1^2
    """
    return (
        8.0 * mu**3 * e_n * e_n
        + 32.0 * mu**2 * nu * e_n * z_n
        + 16.0 * mu * nu**2 * e_n * p_n
        + 16.0 * nu**3 * z_n * p_n
        + 24.0 * mu * nu**2 * z_n * z_n
        + 2.0 * mu * j1 * j1
    )


@dataclass(frozen=True)
class ForceStats:
    """Nondimensional numbers attached to the forcing and parameters."""

    G: float
    G_tilde: float
    sigma: dict[int, float]
    R: dict[int, float]
    K0: float
    K1: float
    K2: float


def modified_grashof(g_norm: float, nu: float, nu_tilde: float, mu: float) -> float:
    grash = g_norm / nu**2
    if mu == 0.0:
        return math.inf
    return math.sqrt((nu / nu_tilde) * (nu / mu) + 1.0) * grash


def force_stats(g: SpectralField, p: SystemParams, k_max: int = 3) -> ForceStats:
    """Grashof numbers, shape factors, ball radii and sensitivity constants."""
    g_norm = spectral.norm_hs(g, 0.0)
    if g_norm == 0.0:
        raise ZeroForceError("shape factors are undefined for zero forcing")
    consts = p.constants
    grash = g_norm / p.nu**2
    g_tilde = modified_grashof(g_norm, p.nu, p.nu_tilde, p.mu)
    sigma = {0: 1.0}
    for ell in range(1, max(2, k_max) + 1):
        sigma[ell] = spectral.norm_hs(g, float(ell)) / g_norm
    radii = {1: math.sqrt(2.0) * p.nu * grash}
    for k in range(2, k_max + 1):
        c_k = theorem_constant(consts, f"rad_c{k}")
        radii[k] = c_k * p.nu * (sigma[k - 1] ** (1.0 / k) + grash) ** (k - 1) * grash
    big_c = theorem_constant(consts, "big_c")
    al1 = theorem_constant(consts, "alpha1_tilde")
    al2 = theorem_constant(consts, "alpha2_tilde")
    c3 = theorem_constant(consts, "c3")
    k0 = math.sqrt(big_c) * al1 * g_tilde
    k1 = math.sqrt(big_c) * al2 * (sigma[1] ** 0.5 + g_tilde) * g_tilde
    k2 = math.sqrt(
        c3 * al2**2 * sigma[2] ** (2.0 / 3.0) * (sigma[2] ** (1.0 / 3.0) + grash) ** 4
    ) * g_tilde
    return ForceStats(G=grash, G_tilde=g_tilde, sigma=sigma, R=radii, K0=k0, K1=k1, K2=k2)


@dataclass(frozen=True)
class ConditionCheck:
    """One tuning-parameter condition: advisory, never a gate."""

    id: str
    mu: float
    bound: float
    kind: str  # "upper": mu <= bound; "lower": mu >= bound
    margin: float  # positive iff satisfied
    satisfied: bool


def _condition(cid: str, mu: float, bound: float, kind: str) -> ConditionCheck:
    margin = bound - mu if kind == "upper" else mu - bound
    return ConditionCheck(cid, mu, bound, kind, margin, margin >= 0.0)


def verify_mu_conditions(
    p: SystemParams,
    stats: ForceStats,
    alpha_map: Optional[Mapping[str, float]] = None,
) -> list[ConditionCheck]:
    """Evaluate every condition on the gain mu with the configured constants.

    The analysis only proves that *some* absolute constants make these
    sufficient; all of them default to 1 and are configurable, which turns
    each inequality into a falsifiable, parameterized check. Reports are
    advisory: numerics routinely succeed far inside the "violated" region.
    """
    consts = dict(p.constants)
    if alpha_map:
        consts.update(alpha_map)
    mu, nu, nut = p.mu, p.nu, p.nu_tilde
    n2 = float(p.n_obs) ** 2
    grash, g_t = stats.G, stats.G_tilde
    s1, s2 = stats.sigma[1], stats.sigma[2]
    al1t = theorem_constant(consts, "alpha1_tilde")
    al2t = theorem_constant(consts, "alpha2_tilde")
    checks = [
        _condition("mu_N_tnu", mu, theorem_constant(consts, "c0_tilde") * n2 * nut, "upper"),
        _condition("mu_N_nu", mu, theorem_constant(consts, "c0") * n2 * nu, "upper"),
        _condition(
            "mu_ng_H2",
            mu,
            nu * theorem_constant(consts, "alpha2") ** 2 * (nu / nut) * g_t**2,
            "lower",
        ),
        _condition(
            "mu_ng_H3",
            mu,
            nu
            * theorem_constant(consts, "alpha3") ** 2
            * (
                (al1t**2 + al2t**2) * (s1**0.5 + g_t) * g_t
                + al2t ** (2.0 / 3.0)
                * (nu / nut) ** (1.0 / 3.0)
                * ((s2 ** (1.0 / 3.0) + grash) / grash) ** (2.0 / 3.0)
                * (s1**0.5 + grash)
                / (s2 ** (1.0 / 3.0) + grash)
            ),
            "lower",
        ),
        _condition(
            "mu_sensitivity1",
            mu,
            theorem_constant(consts, "c1")
            * nu
            * ((s1**0.5 + grash) ** 2 + (s2 ** (1.0 / 3.0) + grash) ** 4) ** 0.25
            * (s2 ** (1.0 / 3.0) + grash)
            * grash,
            "lower",
        ),
        _condition(
            "mu_sensitivity2",
            mu,
            theorem_constant(consts, "c2")
            * nu
            * (abs(nut - nu) / nu)
            * al2t**2
            * (s1**0.5 + g_t) ** 2
            * g_t**2,
            "lower",
        ),
        _condition(
            "mu_power",
            mu,
            theorem_constant(consts, "c4") * max(grash, 1.0) ** 2,
            "lower",
        ),
    ]
    return checks


CONDITION_IDS = (
    "mu_N_tnu",
    "mu_N_nu",
    "mu_ng_H2",
    "mu_ng_H3",
    "mu_sensitivity1",
    "mu_sensitivity2",
    "mu_power",
)


@dataclass
class DiagnosticsRecord:
    """Per-time snapshot of every functional the analysis is written in.

    ``Edot_N`` comes from the balance identity J1 - 2 mu E_N - 2 nu Z_N;
    ``Edot_N_fd`` is filled after the run by centered finite differences of
    the E_N series (NaN until then, and at series endpoints). ``norms`` maps
    "u" / "u_tilde" / "w" to (H^0, H^1, H^2, H^3) norms.
    """

    t: float
    nu_tilde: float
    E: float
    E_N: float
    Z: float
    Z_N: float
    P: float
    P_N: float
    Edot_N: float
    Edot_N_fd: float
    J1: float
    J2: float
    D: float
    denominator: float
    nondegen_margin: float
    norms: dict[str, tuple[float, float, float, float]]
    condition_margins: dict[str, float] = field(default_factory=dict)


def build_record(
    state: PairState,
    p: SystemParams,
    stats: Optional[ForceStats] = None,
) -> DiagnosticsRecord:
    """Evaluate all diagnostics on one pair state (four bilinear products)."""
    u, ut = state.u, state.u_tilde
    w = ut - u
    n_obs = p.n_obs
    funcs = energy_functionals(w, n_obs)
    delta_nu = p.nu_tilde - p.nu
    j1, j2 = compute_J(u, ut, w, n_obs, delta_nu)
    w_n = lowpass(w, n_obs)
    ut_n = lowpass(ut, n_obs)
    den = spectral.inner_hs(ut_n, w_n, 1.0)
    norms = {
        name: tuple(spectral.norm_hs(f, float(s)) for s in range(4))
        for name, f in (("u", u), ("u_tilde", ut), ("w", w))
    }
    margins: dict[str, float] = {}
    if stats is not None:
        margins = {c.id: c.margin for c in verify_mu_conditions(p, stats)}
    return DiagnosticsRecord(
        t=state.t,
        nu_tilde=p.nu_tilde,
        E=funcs.E,
        E_N=funcs.E_N,
        Z=funcs.Z,
        Z_N=funcs.Z_N,
        P=funcs.P,
        P_N=funcs.P_N,
        Edot_N=j1 - 2.0 * p.mu * funcs.E_N - 2.0 * p.nu * funcs.Z_N,
        Edot_N_fd=math.nan,
        J1=j1,
        J2=j2,
        D=dissipation_D(funcs.E_N, funcs.Z_N, funcs.P_N, j1, p.mu, p.nu),
        denominator=den,
        nondegen_margin=abs(den),
        norms=norms,
        condition_margins=margins,
    )


class DiagnosticsRecorder:
    """Sink for the integrators: builds a record every ``stride`` steps."""

    def __init__(self, stride: int = 1, stats: Optional[ForceStats] = None):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.stride = stride
        self.stats = stats
        self.records: list[DiagnosticsRecord] = []
        self._last_t: Optional[float] = None

    def __call__(self, state: PairState, step: int, p: SystemParams) -> None:
        if step % self.stride != 0:
            return
        if self._last_t is not None and state.t == self._last_t:
            return
        self._last_t = state.t
        self.records.append(build_record(state, p, self.stats))


class PowerBalance(NamedTuple):
    Edot_N: np.ndarray
    Zdot_N: np.ndarray
    residual_E: np.ndarray
    residual_Z: np.ndarray


def power_balance(
    t: Sequence[float],
    e_n: Sequence[float],
    z_n: Sequence[float],
    p_n: Sequence[float],
    j1: Sequence[float],
    j2: Sequence[float],
    mu: float,
    nu: float,
) -> PowerBalance:
    """Balance-identity derivatives and their finite-difference residuals.

    Edot_N = J1 - 2 mu E_N - 2 nu Z_N and Zdot_N = J2 - 2 mu Z_N - 2 nu P_N
    at each sample; the residuals subtract the centered finite difference of
    E_N (resp. Z_N), so they vanish at second order in the sample spacing.
    Endpoints carry NaN residuals. Requires a uniform window of >= 3 samples.
    """
    t = np.asarray(t, dtype=float)
    if t.size < 3:
        raise WindowTooShortError(f"need at least 3 samples, got {t.size}")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(dt[0], 1e-300):
        raise WindowTooShortError("samples are not uniformly spaced")
    e_n = np.asarray(e_n, dtype=float)
    z_n = np.asarray(z_n, dtype=float)
    p_n = np.asarray(p_n, dtype=float)
    j1 = np.asarray(j1, dtype=float)
    j2 = np.asarray(j2, dtype=float)
    edot = j1 - 2.0 * mu * e_n - 2.0 * nu * z_n
    zdot = j2 - 2.0 * mu * z_n - 2.0 * nu * p_n
    fd_e = np.full_like(edot, np.nan)
    fd_z = np.full_like(zdot, np.nan)
    fd_e[1:-1] = (e_n[2:] - e_n[:-2]) / (t[2:] - t[:-2])
    fd_z[1:-1] = (z_n[2:] - z_n[:-2]) / (t[2:] - t[:-2])
    return PowerBalance(edot, zdot, edot - fd_e, zdot - fd_z)


def fill_fd_derivatives(records: Sequence[DiagnosticsRecord]) -> None:
    """Populate Edot_N_fd on interior records by centered differences."""
    for i in range(1, len(records) - 1):
        span = records[i + 1].t - records[i - 1].t
        if span > 0:
            records[i].Edot_N_fd = (records[i + 1].E_N - records[i - 1].E_N) / span


@dataclass(frozen=True)
class BoundCheckSummary:
    id: str
    n_samples: int
    n_violations: int
    worst_slack: float  # min over samples of (bound - value); negative = violated
    satisfied: bool


@dataclass(frozen=True)
class BoundReport:
    checks: dict[str, BoundCheckSummary]

    @property
    def all_satisfied(self) -> bool:
        return all(c.satisfied for c in self.checks.values())


def bound_checks(
    records: Sequence[DiagnosticsRecord],
    p: SystemParams,
    stats: Optional[ForceStats] = None,
    checks: Iterable[str] = ("observer_h1", "observer_h2", "observer_h3"),
    rtol: float = 1e-8,
    decay_floor_rel: float = 1e-24,
) -> BoundReport:
    """Check the theorem conclusions sample by sample on a record stream.

    Available checks (all advisory, with the configured constants):
      observer_h1        ||ut||^2    <= alpha1_tilde^2 nu^2 Gt^2
      observer_h2        |A ut|      <= nu alpha2_tilde s1^(1/2) (s1^(1/2)+G) Gt
      observer_h3        |A^(3/2)ut| <= nu alpha3_tilde s2^(1/3) (s2^(1/3)+G)^2 Gt
      sensitivity_decay  |Aw(t)|^2   <= e^(-mu (t-tau)) |Aw(tau)|^2
                                        + nu^2 (nu/mu) (dnu/nu)^2 K2^2 + floor
      reference_envelope ||u(t)||^2  <= e^(-nu (t-t0)) ||u(t0)||^2
                                        + nu^2 G^2 (1 - e^(-nu (t-t0)))
      reference_ball     ||u||       <= sqrt(2) nu G

    tau and t0 are the first record's time; the decay check adds
    ``decay_floor_rel`` times the initial |Aw|^2 as a roundoff floor.
    """
    if not records:
        raise WindowTooShortError("no records to check")
    wanted = list(checks)
    for cid in wanted:
        if cid.startswith(("observer", "sensitivity")) and stats is None:
            raise ValueError(f"check {cid!r} needs ForceStats")
    consts = p.constants
    out: dict[str, BoundCheckSummary] = {}
    t0 = records[0].t
    grash = stats.G if stats is not None else 0.0

    def summarize(cid: str, values, bounds) -> None:
        slacks = [b - v for v, b in zip(values, bounds)]
        tol = [rtol * abs(b) for b in bounds]
        violations = sum(1 for s, e in zip(slacks, tol) if s < -e)
        out[cid] = BoundCheckSummary(
            cid, len(slacks), violations, min(slacks), violations == 0
        )

    if "observer_h1" in wanted:
        al = theorem_constant(consts, "alpha1_tilde")
        bound = al**2 * p.nu**2 * stats.G_tilde**2
        summarize(
            "observer_h1",
            [r.norms["u_tilde"][1] ** 2 for r in records],
            [bound] * len(records),
        )
    if "observer_h2" in wanted:
        al = theorem_constant(consts, "alpha2_tilde")
        s1 = stats.sigma[1]
        bound = p.nu * al * s1**0.5 * (s1**0.5 + grash) * stats.G_tilde
        summarize(
            "observer_h2",
            [r.norms["u_tilde"][2] for r in records],
            [bound] * len(records),
        )
    if "observer_h3" in wanted:
        al = theorem_constant(consts, "alpha3_tilde")
        s2 = stats.sigma[2]
        bound = p.nu * al * s2 ** (1.0 / 3.0) * (s2 ** (1.0 / 3.0) + grash) ** 2 * stats.G_tilde
        summarize(
            "observer_h3",
            [r.norms["u_tilde"][3] for r in records],
            [bound] * len(records),
        )
    if "sensitivity_decay" in wanted:
        aw0_sq = 2.0 * records[0].P
        floor = decay_floor_rel * aw0_sq
        values = [2.0 * r.P for r in records]
        bounds = []
        for r in records:
            dnu = abs(r.nu_tilde - p.nu)
            tail = (
                p.nu**2 * (p.nu / p.mu) * (dnu / p.nu) ** 2 * stats.K2**2
                if p.mu > 0
                else math.inf
            )
            bounds.append(math.exp(-p.mu * (r.t - t0)) * aw0_sq + tail + floor)
        summarize("sensitivity_decay", values, bounds)
    if "reference_envelope" in wanted:
        u0_sq = records[0].norms["u"][1] ** 2
        values = [r.norms["u"][1] ** 2 for r in records]
        bounds = [
            math.exp(-p.nu * (r.t - t0)) * u0_sq
            + p.nu**2 * grash**2 * (1.0 - math.exp(-p.nu * (r.t - t0)))
            for r in records
        ]
        summarize("reference_envelope", values, bounds)
    if "reference_ball" in wanted:
        bound = math.sqrt(2.0) * p.nu * grash
        summarize(
            "reference_ball", [r.norms["u"][1] for r in records], [bound] * len(records)
        )
    return BoundReport(checks=out)


@dataclass(frozen=True)
class UpdateErrorBreakdown:
    """Realized contraction budget of one update, term by term.

    ``budget`` bounds the post-update viscosity error |nu_{m+1} - nu| from
    above (triangle inequality on the inversion identity); when the balance
    Edot_N is used it is exact up to that identity's discretization error.
    """

    edot_abs: float
    viscous_term: float  # 2 nu Z_N
    transfer_term: float  # |<B(w, w_N), Q_N w>|
    shear_term: float  # |<(DB_N u) w, w_N>|
    denominator_abs: float
    budget: float
    degenerate: bool


def update_error_decomposition(
    u: SpectralField,
    u_tilde: SpectralField,
    n_obs: int,
    mu: float,
    nu: float,
    nu_m: float,
    edot_n: Optional[float] = None,
) -> UpdateErrorBreakdown:
    """Split the update error into its four sources at a left limit t_m^-.

    ``edot_n`` defaults to the balance-identity value (twin mode: the true nu
    is known); pass a finite-difference estimate to make the budget
    independent of the identity.
    """
    w = u_tilde - u
    w_n = lowpass(w, n_obs)
    q_w = w - w_n
    ut_n = lowpass(u_tilde, n_obs)
    funcs = energy_functionals(w, n_obs)
    transfer = abs(spectral.inner_hs(spectral.bilinear(w, w_n), q_w, 0.0))
    db = spectral.bilinear(u, w) + spectral.bilinear(w, u)
    shear = abs(spectral.inner_hs(db, w_n, 0.0))
    den = abs(spectral.inner_hs(ut_n, w_n, 1.0))
    if edot_n is None:
        j1, _ = compute_J(u, u_tilde, w, n_obs, nu_m - nu)
        edot_n = j1 - 2.0 * mu * funcs.E_N - 2.0 * nu * funcs.Z_N
    viscous = 2.0 * nu * funcs.Z_N
    total = abs(edot_n) + viscous + transfer + shear
    degenerate = den == 0.0
    budget = math.inf if degenerate else total / den
    return UpdateErrorBreakdown(
        edot_abs=abs(edot_n),
        viscous_term=viscous,
        transfer_term=transfer,
        shear_term=shear,
        denominator_abs=den,
        budget=budget,
        degenerate=degenerate,
    )
