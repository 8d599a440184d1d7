"""Fourier-Galerkin representation of periodic vector fields on [0, 2pi]^2.

Every field is a pair of complex coefficient arrays on the truncated integer
wavenumber lattice, and all operators of the governing equations (Leray
projection, Stokes powers, the advective bilinear term, spectral low-pass
filters, Sobolev norms) act diagonally or via dealiased physical products.

Coefficient convention (the one place it is defined)
----------------------------------------------------
Coefficients are Fourier-series coefficients,

    u(x) = sum_k uhat(k) exp(i k.x),    uhat(k) = (2 pi)^-2 integral u exp(-i k.x) dx,

so Plancherel carries the box area once:

    |u|_{L2}^2 = (2 pi)^2 sum_k |uhat(k)|^2.

``norm_hs(v, s)`` therefore returns ``sqrt((2 pi)^2 sum |k|^{2s} |vhat|^2)``,
which for s=0 equals the continuum L2 norm of the trigonometric polynomial and
for s=1 the H1 norm. ``PLANCHEREL`` below is that (2 pi)^2 factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractViolationError,
    IncompatibleGridsError,
    InvalidCutoffError,
    InvalidGridError,
)

TWO_PI = 2.0 * np.pi
PLANCHEREL = TWO_PI**2

# Mean coefficient is "zero" if below this times the largest coefficient.
MEAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Wavenumber lattice metadata for an n x n grid on [0, 2pi]^2.

    The lattice is {-n/2+1, ..., n/2}^2; quadratic products are dealiased by
    the two-thirds rule, so only modes with max(|k1|, |k2|) <= dealias_cutoff
    survive a bilinear operation.
    """

    n: int

    def __post_init__(self):
        if self.n % 2 != 0 or self.n < 8:
            raise InvalidGridError(f"grid size must be even and >= 8, got n={self.n}")
        k1 = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
        k1[self.n // 2] = self.n // 2  # label the Nyquist bin +n/2, not -n/2
        kx = k1[:, None]
        ky = k1[None, :]
        k2 = (kx * kx + ky * ky).astype(np.float64)
        cutoff = self.n // 3
        dealias = (np.abs(kx) <= cutoff) & (np.abs(ky) <= cutoff)
        # Physical product grid for the bilinear term: alias images of the
        # retained band must fall outside it, which needs 3*cutoff < m_pad.
        m_pad = self.n if 3 * cutoff < self.n else self.n + 2
        band = np.arange(-cutoff, cutoff + 1)
        for name, value in (
            ("k1", k1),
            ("kx", kx),
            ("ky", ky),
            ("k2", k2),
            ("dealias_mask", dealias),
            ("m_pad", m_pad),
            ("_band_src", band % self.n),
            ("_band_dst", band % m_pad),
        ):
            object.__setattr__(self, name, value)
        for arr in (k1, kx, ky, k2, dealias):
            arr.flags.writeable = False

    @property
    def dealias_cutoff(self) -> int:
        return self.n // 3

    @property
    def domain_length(self) -> float:
        return TWO_PI

    def __eq__(self, other):
        return isinstance(other, GridSpec) and other.n == self.n

    def __hash__(self):
        return hash(("GridSpec", self.n))


def grid_create(n: int) -> GridSpec:
    """Create the lattice for an n x n grid (n even, n >= 8)."""
    return GridSpec(n)


@dataclass(frozen=True)
class SpectralField:
    """Zero-mean 2D vector field stored as coefficients of shape (2, n, n).

    Instances are immutable; every operator returns a new field. The raw
    constructor performs no validation -- use :func:`from_coeffs`,
    :func:`from_physical` or the operators, which maintain the invariants
    (zero mean, conjugate symmetry, and divergence-freeness where promised).
    """

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs.flags.writeable = False

    def _binary_grid(self, other: "SpectralField") -> GridSpec:
        if self.grid != other.grid:
            raise IncompatibleGridsError(
                f"grids differ: n={self.grid.n} vs n={other.grid.n}"
            )
        return self.grid

    def __add__(self, other: "SpectralField") -> "SpectralField":
        grid = self._binary_grid(other)
        return SpectralField(grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        grid = self._binary_grid(other)
        return SpectralField(grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    def max_coeff(self) -> float:
        return float(np.max(np.abs(self.coeffs)))


def zero_field(grid: GridSpec) -> SpectralField:
    return SpectralField(grid, np.zeros((2, grid.n, grid.n), dtype=np.complex128))


def from_coeffs(grid: GridSpec, coeffs: np.ndarray) -> SpectralField:
    """Wrap a (2, n, n) coefficient array, zeroing the mean mode exactly."""
    c = np.array(coeffs, dtype=np.complex128)
    if c.shape != (2, grid.n, grid.n):
        raise ValueError(f"expected coeffs of shape (2, {grid.n}, {grid.n}), got {c.shape}")
    c[:, 0, 0] = 0.0
    return SpectralField(grid, c)


def _hermitianize(c: np.ndarray) -> np.ndarray:
    """Symmetrize so that chat(-k) == conj(chat(k)) exactly."""
    flipped = c[:, :, ::-1][:, ::-1, :]
    flipped = np.roll(flipped, shift=(1, 1), axis=(1, 2))
    return 0.5 * (c + np.conj(flipped))


def from_physical(grid: GridSpec, samples: np.ndarray) -> SpectralField:
    """Transform real samples of shape (2, n, n) at x_j = 2 pi j / n.

    The mean mode is discarded (all fields of interest are mean-free) and
    coefficients are symmetrized so the represented field is exactly real.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape != (2, grid.n, grid.n):
        raise ValueError(
            f"expected samples of shape (2, {grid.n}, {grid.n}), got {samples.shape}"
        )
    c = np.fft.fft2(samples, axes=(1, 2)) / grid.n**2
    c = _hermitianize(c)
    c[:, 0, 0] = 0.0
    return SpectralField(grid, c)


def to_physical(v: SpectralField) -> np.ndarray:
    """Evaluate the field at the grid points; returns (2, n, n) real samples."""
    return np.fft.ifft2(v.coeffs * v.grid.n**2, axes=(1, 2)).real


def _require_zero_mean(v: SpectralField, op: str) -> None:
    mean = float(np.max(np.abs(v.coeffs[:, 0, 0])))
    if mean > MEAN_TOL * max(1.0, v.max_coeff()):
        raise ContractViolationError(f"{op} requires a zero-mean field; |vhat(0)|={mean:g}")


def leray_project(v: SpectralField) -> SpectralField:
    """Project onto divergence-free fields: vhat -> vhat - k (k.vhat)/|k|^2."""
    _require_zero_mean(v, "leray_project")
    grid = v.grid
    k2 = np.where(grid.k2 > 0, grid.k2, 1.0)
    c1, c2 = v.coeffs
    kdot = (grid.kx * c1 + grid.ky * c2) / k2
    out = np.stack((c1 - grid.kx * kdot, c2 - grid.ky * kdot))
    out[:, 0, 0] = 0.0
    return SpectralField(grid, out)


def stokes_apply(v: SpectralField, s: float) -> SpectralField:
    """Apply A^{s/2}, i.e. multiply each mode by |k|^s (A is the Stokes operator).

    Zero-mean fields have |k| >= 1 on their support, so negative powers are
    well defined; the mean mode stays zero.
    """
    _require_zero_mean(v, "stokes_apply")
    grid = v.grid
    with np.errstate(divide="ignore"):
        factor = np.where(grid.k2 > 0, grid.k2, 1.0) ** (s / 2.0)
    out = v.coeffs * factor
    out[:, 0, 0] = 0.0
    return SpectralField(grid, out)


def lowpass(v: SpectralField, n_cut: int) -> SpectralField:
    """Keep modes with Euclidean wavenumber |k| <= n_cut, zero the rest."""
    grid = v.grid
    if not (1 <= n_cut <= grid.dealias_cutoff):
        raise InvalidCutoffError(
            f"cutoff must satisfy 1 <= N <= {grid.dealias_cutoff}, got {n_cut}"
        )
    mask = grid.k2 <= float(n_cut) ** 2
    return SpectralField(grid, np.where(mask, v.coeffs, 0.0))


def highpass(v: SpectralField, n_cut: int) -> SpectralField:
    """Complement of :func:`lowpass`: Q_N v = v - P_N v (exact decomposition)."""
    grid = v.grid
    if not (1 <= n_cut <= grid.dealias_cutoff):
        raise InvalidCutoffError(
            f"cutoff must satisfy 1 <= N <= {grid.dealias_cutoff}, got {n_cut}"
        )
    mask = grid.k2 <= float(n_cut) ** 2
    return SpectralField(grid, np.where(mask, 0.0, v.coeffs))


def _hs_weights(grid: GridSpec, s: float) -> np.ndarray:
    if s == 0.0:
        return np.ones_like(grid.k2)
    with np.errstate(divide="ignore"):
        w = np.where(grid.k2 > 0, grid.k2, 1.0) ** s
    return np.where(grid.k2 > 0, w, 0.0)


def norm_hs(v: SpectralField, s: float) -> float:
    """Homogeneous Sobolev norm: sqrt((2pi)^2 sum_k |k|^{2s} |vhat(k)|^2)."""
    w = _hs_weights(v.grid, s)
    total = np.sum(w * (np.abs(v.coeffs[0]) ** 2 + np.abs(v.coeffs[1]) ** 2))
    return float(np.sqrt(PLANCHEREL * total))


def inner_hs(u: SpectralField, v: SpectralField, s: float) -> float:
    """Real H^s pairing: (2pi)^2 Re sum_k |k|^{2s} uhat(k).conj(vhat(k))."""
    grid = u._binary_grid(v)
    w = _hs_weights(grid, s)
    total = np.sum(
        w
        * (
            u.coeffs[0] * np.conj(v.coeffs[0])
            + u.coeffs[1] * np.conj(v.coeffs[1])
        )
    )
    return float(PLANCHEREL * total.real)


def _pad_to_product_grid(grid: GridSpec, c: np.ndarray) -> np.ndarray:
    """Embed the retained band of one component into the m_pad lattice."""
    out = np.zeros((grid.m_pad, grid.m_pad), dtype=np.complex128)
    out[np.ix_(grid._band_dst, grid._band_dst)] = c[np.ix_(grid._band_src, grid._band_src)]
    return out


def _extract_from_product_grid(grid: GridSpec, cpad: np.ndarray) -> np.ndarray:
    out = np.zeros((grid.n, grid.n), dtype=np.complex128)
    out[np.ix_(grid._band_src, grid._band_src)] = cpad[np.ix_(grid._band_dst, grid._band_dst)]
    return out


def _bilinear_coeffs(grid: GridSpec, cu: np.ndarray, cv: np.ndarray) -> np.ndarray:
    """Dealiased coefficients of P_sigma[(u.grad) v] from raw coefficient pairs.

    Uses half-spectrum transforms: inputs are conjugate-symmetric (real
    fields), so only the k2 >= 0 columns of the retained band are carried
    through the padded physical product.
    """
    m = grid.m_pad
    m2 = float(m * m)
    cut = grid.dealias_cutoff
    kxp = np.fft.fftfreq(m, d=1.0 / m).astype(np.int64)[:, None]
    kyp = np.arange(cut + 1)[None, :]

    rows_src = np.ix_(grid._band_src, np.arange(cut + 1))
    rows_dst = np.ix_(grid._band_dst, np.arange(cut + 1))
    half = np.zeros((6, m, m // 2 + 1), dtype=np.complex128)
    half[0][rows_dst] = cu[0][rows_src]
    half[1][rows_dst] = cu[1][rows_src]
    half[2][rows_dst] = cv[0][rows_src]
    half[3][rows_dst] = cv[1][rows_src]
    ikyp = 1j * kyp
    half[4, :, : cut + 1] = ikyp * half[2, :, : cut + 1]  # d v1 / dy
    half[5, :, : cut + 1] = ikyp * half[3, :, : cut + 1]  # d v2 / dy
    half[2] *= 1j * kxp  # d v1 / dx
    half[3] *= 1j * kxp  # d v2 / dx

    phys = np.fft.irfft2(half, s=(m, m), axes=(1, 2))
    phys *= m2  # irfft2 normalizes by 1/m^2; series evaluation wants the bare sum
    u1, u2, dv1dx, dv2dx, dv1dy, dv2dy = phys
    prod = np.stack((u1 * dv1dx + u2 * dv1dy, u1 * dv2dx + u2 * dv2dy))
    spec = np.fft.rfft2(prod, axes=(1, 2)) / m2

    out = np.zeros((2, grid.n, grid.n), dtype=np.complex128)
    out[0][rows_src] = spec[0][rows_dst]
    out[1][rows_src] = spec[1][rows_dst]
    # Conjugate-fill the k2 < 0 columns of the band.
    neg_rows = grid._band_src[::-1]
    pos_cols = np.arange(1, cut + 1)
    neg_cols = grid.n - pos_cols
    out[:, neg_rows[:, None], neg_cols[None, :]] = np.conj(
        out[:, grid._band_src[:, None], pos_cols[None, :]]
    )
    out[:, 0, 0] = 0.0
    # Leray projection, inline on raw arrays.
    k2 = np.where(grid.k2 > 0, grid.k2, 1.0)
    kdot = (grid.kx * out[0] + grid.ky * out[1]) / k2
    out[0] -= grid.kx * kdot
    out[1] -= grid.ky * kdot
    out[:, 0, 0] = 0.0
    return out


def bilinear(u: SpectralField, v: SpectralField) -> SpectralField:
    """B(u, v) = P_sigma[(u.grad) v], dealiased by the two-thirds rule.

    The product is formed in physical space on a grid large enough that no
    alias image of the quadratic interactions lands in the retained band, so
    the result is the exact Galerkin truncation of the continuum term. Both
    orthogonality identities <B(u,v), v> = 0 = <B(u,u), Au> then hold to
    roundoff for divergence-free, dealiased inputs.
    """
    grid = u._binary_grid(v)
    return SpectralField(grid, _bilinear_coeffs(grid, u.coeffs, v.coeffs))


def dealias(v: SpectralField) -> SpectralField:
    """Truncate to the retained band max(|k1|, |k2|) <= dealias_cutoff."""
    return SpectralField(v.grid, np.where(v.grid.dealias_mask, v.coeffs, 0.0))


def divergence_max(v: SpectralField) -> float:
    """max_k |k . vhat(k)|, the figure of merit for divergence-freeness."""
    grid = v.grid
    return float(np.max(np.abs(grid.kx * v.coeffs[0] + grid.ky * v.coeffs[1])))


def random_divergence_free(
    grid: GridSpec,
    rng: np.random.Generator,
    amplitude: float = 1.0,
    kmin: int = 1,
    kmax: int | None = None,
    decay: float = 0.0,
) -> SpectralField:
    """Random dealiased divergence-free field with L2 norm ``amplitude``.

    Coefficients are complex Gaussian with an exp(-decay |k|) envelope on the
    band kmin <= max(|k1|,|k2|) <= kmax, hermitian-symmetrized and
    Leray-projected. Deterministic for a fixed generator state.
    """
    if kmax is None:
        kmax = grid.dealias_cutoff
    if not (1 <= kmin <= kmax <= grid.dealias_cutoff):
        raise InvalidCutoffError(f"band [{kmin}, {kmax}] outside [1, {grid.dealias_cutoff}]")
    shape = (2, grid.n, grid.n)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    kabs = np.maximum(np.abs(grid.kx), np.abs(grid.ky))
    band = (kabs >= kmin) & (kabs <= kmax)
    c = np.where(band, c, 0.0)
    if decay != 0.0:
        c = c * np.exp(-decay * np.sqrt(grid.k2))
    c = _hermitianize(c)
    c[:, 0, 0] = 0.0
    field = leray_project(SpectralField(grid, c))
    scale = norm_hs(field, 0.0)
    if scale == 0.0:
        raise ContractViolationError("random field projected to zero; widen the band")
    return field * (amplitude / scale)
