"""Spherical-harmonic analysis/synthesis on Gauss-Legendre grids.

Scalar fields on the unit sphere are represented either by values on a
Gauss-Legendre x uniform-longitude grid or by triangular tables of complex
coefficients in the orthonormal harmonic basis (Condon-Shortley phase,
latitude convention: the polar angle is measured from the equator, so the
associated Legendre functions are evaluated at s = sin(latitude)).

The transform pair is exact for bandlimited fields as long as the grid
satisfies ``nlat >= lmax + 1`` and ``nlon >= 2*lmax + 1``; quadrature in
latitude is Gauss-Legendre, longitude uses the FFT.
"""

from __future__ import annotations

import dataclasses
import math
from functools import lru_cache

import numpy as np

FOUR_PI = 4.0 * math.pi


class GridShapeError(ValueError):
    """Grid and truncation sizes are inconsistent."""


class MeanConstraintError(ValueError):
    """An operation required a zero-mean field but got one with a mean."""


@dataclasses.dataclass(frozen=True)
class TruncationSpec:
    """Triangular truncation degree plus the grid sizes used with it.

    ``nlat >= lmax + 1`` makes Gauss quadrature exact for products of two
    bandlimited fields in latitude; ``nlon >= 2*lmax + 1`` keeps all zonal
    wavenumbers up to ``lmax`` alias-free.
    """

    lmax: int
    nlat: int
    nlon: int

    def __post_init__(self):
        if self.lmax < 1:
            raise GridShapeError(f"lmax must be >= 1, got {self.lmax}")
        if self.nlat < self.lmax + 1:
            raise GridShapeError(
                f"nlat={self.nlat} too small for lmax={self.lmax}; need nlat >= lmax+1"
            )
        if self.nlon < 2 * self.lmax + 1:
            raise GridShapeError(
                f"nlon={self.nlon} too small for lmax={self.lmax}; need nlon >= 2*lmax+1"
            )

    @classmethod
    def for_lmax(cls, lmax: int) -> "TruncationSpec":
        """Minimal even-longitude grid for a given truncation degree."""
        return cls(lmax=lmax, nlat=lmax + 1, nlon=2 * lmax + 2)

    @classmethod
    def dealiased(cls, lmax: int) -> "TruncationSpec":
        """Grid on which quadratic products of bandlimited fields are exact.

        Equivalent to the classical 2/3-rule: the grid resolves 3*lmax/2
        so that products of two degree-lmax fields project back onto the
        retained modes without aliasing.
        """
        nlat = (3 * lmax) // 2 + 2
        nlon = 3 * lmax + 2
        nlon += nlon % 2  # even sizes keep the FFT fast
        return cls(lmax=lmax, nlat=nlat, nlon=nlon)


@dataclasses.dataclass(frozen=True)
class GaussGrid:
    """Gauss-Legendre latitude nodes (stored as s = sin(latitude)) and weights."""

    nodes: np.ndarray
    weights: np.ndarray
    longitudes: np.ndarray

    @property
    def nlat(self) -> int:
        return self.nodes.size

    @property
    def nlon(self) -> int:
        return self.longitudes.size

    @property
    def cos_lat(self) -> np.ndarray:
        return np.sqrt(1.0 - self.nodes**2)

    @property
    def latitudes(self) -> np.ndarray:
        return np.arcsin(self.nodes)

    def integrate(self, values: np.ndarray) -> complex | float:
        """Surface integral of grid values against the area element."""
        if values.shape != (self.nlat, self.nlon):
            raise GridShapeError(
                f"values shape {values.shape} does not match grid ({self.nlat}, {self.nlon})"
            )
        return (2.0 * math.pi / self.nlon) * np.sum(self.weights @ values)


def build_grid(spec: TruncationSpec) -> GaussGrid:
    """Gauss-Legendre nodes/weights in s = sin(latitude) plus uniform longitudes."""
    nodes, weights = np.polynomial.legendre.leggauss(spec.nlat)
    longitudes = 2.0 * math.pi * np.arange(spec.nlon) / spec.nlon
    for arr in (nodes, weights, longitudes):
        arr.setflags(write=False)
    return GaussGrid(nodes=nodes, weights=weights, longitudes=longitudes)


@dataclasses.dataclass
class GridField:
    """Field sampled on a Gauss grid, indexed (latitude node, longitude)."""

    values: np.ndarray
    grid: GaussGrid

    def __post_init__(self):
        if self.values.shape != (self.grid.nlat, self.grid.nlon):
            raise GridShapeError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.nlat}, {self.grid.nlon})"
            )

    def integral(self) -> complex | float:
        return self.grid.integrate(self.values)


class SpectralField:
    """Triangular table of harmonic coefficients c_l^m, 0 <= l <= lmax, |m| <= l.

    Coefficients are stored in a dense (lmax+1, 2*lmax+1) complex array with
    column index lmax + m.  For real-valued fields the coefficients satisfy
    c_l^{-m} = (-1)^m conj(c_l^m).  The degree-0 coefficient is carried along
    but is constrained to zero for vorticity fields (closed-surface mean).
    """

    __slots__ = ("lmax", "coeffs", "real_valued")

    def __init__(self, lmax: int, coeffs: np.ndarray | None = None, real_valued: bool = True):
        if lmax < 1:
            raise ValueError("lmax must be >= 1")
        self.lmax = lmax
        if coeffs is None:
            coeffs = np.zeros((lmax + 1, 2 * lmax + 1), dtype=complex)
        else:
            coeffs = np.asarray(coeffs, dtype=complex)
            if coeffs.shape != (lmax + 1, 2 * lmax + 1):
                raise ValueError(
                    f"coefficient table shape {coeffs.shape} does not match lmax={lmax}"
                )
            coeffs = coeffs.copy()
        self.coeffs = coeffs
        self.real_valued = real_valued

    @classmethod
    def zeros(cls, lmax: int, real_valued: bool = True) -> "SpectralField":
        return cls(lmax, None, real_valued)

    @classmethod
    def from_harmonic(cls, lmax: int, l: int, m: int, amplitude: complex = 1.0,
                      real_valued: bool = False) -> "SpectralField":
        field = cls.zeros(lmax, real_valued=real_valued)
        field.set(l, m, amplitude)
        if real_valued:
            field.enforce_reality()
        return field

    def copy(self) -> "SpectralField":
        return SpectralField(self.lmax, self.coeffs, self.real_valued)

    def get(self, l: int, m: int) -> complex:
        self._check_lm(l, m)
        return self.coeffs[l, self.lmax + m]

    def set(self, l: int, m: int, value: complex) -> None:
        self._check_lm(l, m)
        self.coeffs[l, self.lmax + m] = value

    def add_to(self, l: int, m: int, value: complex) -> None:
        self._check_lm(l, m)
        self.coeffs[l, self.lmax + m] += value

    def _check_lm(self, l: int, m: int) -> None:
        if not (0 <= l <= self.lmax and abs(m) <= l):
            raise IndexError(f"(l, m) = ({l}, {m}) outside triangular table, lmax={self.lmax}")

    @property
    def mean_coefficient(self) -> complex:
        return self.coeffs[0, self.lmax]

    def degree_power(self) -> np.ndarray:
        """sum_m |c_l^m|^2 for each degree l (index by l)."""
        return np.sum(np.abs(self.coeffs) ** 2, axis=1)

    def norm(self) -> float:
        """L2(S^2) norm of the represented field (Parseval)."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    @staticmethod
    def _order_signs(lmax: int) -> np.ndarray:
        return np.where(np.arange(1, lmax + 1) % 2 == 0, 1.0, -1.0)

    def reality_defect(self) -> float:
        """Max violation of c_l^{-m} = (-1)^m conj(c_l^m)."""
        L = self.lmax
        signs = self._order_signs(L)[None, :]
        pos = self.coeffs[:, L + 1 :]
        neg = self.coeffs[:, L - 1 :: -1]
        defect = float(np.max(np.abs(neg - signs * np.conj(pos)), initial=0.0))
        return max(defect, float(np.max(np.abs(self.coeffs[:, L].imag), initial=0.0)))

    def enforce_reality(self) -> "SpectralField":
        """Symmetrize the table so the represented field is exactly real."""
        L = self.lmax
        signs = self._order_signs(L)[None, :]
        self.coeffs[:, L] = self.coeffs[:, L].real
        pos = self.coeffs[:, L + 1 :]
        neg = self.coeffs[:, L - 1 :: -1]
        avg = 0.5 * (pos + signs * np.conj(neg))
        self.coeffs[:, L + 1 :] = avg
        self.coeffs[:, : L] = (signs * np.conj(avg))[:, ::-1]
        self.real_valued = True
        return self

    def scaled(self, factor: complex) -> "SpectralField":
        out = self.copy()
        out.coeffs *= factor
        if not np.isreal(factor):
            out.real_valued = False
        return out

    def __add__(self, other: "SpectralField") -> "SpectralField":
        if self.lmax != other.lmax:
            raise GridShapeError("truncation mismatch in field addition")
        out = self.copy()
        out.coeffs += other.coeffs
        out.real_valued = self.real_valued and other.real_valued
        return out

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        if self.lmax != other.lmax:
            raise GridShapeError("truncation mismatch in field subtraction")
        out = self.copy()
        out.coeffs -= other.coeffs
        out.real_valued = self.real_valued and other.real_valued
        return out

    def truncated(self, lmax: int) -> "SpectralField":
        """Copy restricted (or zero-padded) to a new truncation degree."""
        out = SpectralField.zeros(lmax, self.real_valued)
        L = min(lmax, self.lmax)
        out.coeffs[: L + 1, lmax - L : lmax + L + 1] = self.coeffs[
            : L + 1, self.lmax - L : self.lmax + L + 1
        ]
        return out


@dataclasses.dataclass(frozen=True)
class RotationSpec:
    """z-y-z Euler angles; the rotation acts as R_z(gamma) R_y(beta) R_z(alpha)."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"Euler angle {name} must be finite")

    def matrix(self) -> np.ndarray:
        return _rot_z(self.gamma) @ _rot_y(self.beta) @ _rot_z(self.alpha)


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def euler_from_matrix(rot: np.ndarray) -> RotationSpec:
    """Recover z-y-z Euler angles with R = R_z(gamma) R_y(beta) R_z(alpha)."""
    if abs(np.linalg.det(rot) - 1.0) > 1e-10:
        raise ValueError("euler_from_matrix expects a proper rotation (det = +1)")
    cb = min(1.0, max(-1.0, rot[2, 2]))
    beta = math.acos(cb)
    if abs(cb) < 1.0 - 1e-12:
        alpha = math.atan2(rot[2, 1], -rot[2, 0])
        gamma = math.atan2(rot[1, 2], rot[0, 2])
    elif cb > 0.0:  # beta ~ 0: rotation about z by alpha+gamma
        alpha = math.atan2(rot[1, 0], rot[0, 0])
        gamma = 0.0
    else:  # beta ~ pi
        alpha = math.atan2(rot[0, 1], rot[1, 1])
        gamma = 0.0
    return RotationSpec(alpha=alpha, beta=beta, gamma=gamma)


# ---------------------------------------------------------------------------
# Associated Legendre tables
# ---------------------------------------------------------------------------

def normalized_legendre_table(lmax: int, s: np.ndarray) -> np.ndarray:
    """Orthonormal associated Legendre functions at the points s.

    Returns P with shape (len(s), lmax+1, lmax+1), P[i, l, m] holding the
    fully normalized function of degree l and order m >= 0 (Condon-Shortley
    phase included) evaluated at s[i]; entries with m > l are zero.  The
    harmonic is then Y_l^m = P[.., l, m] * exp(i m phi).

    Upward three-term recurrence in l for each order, with the diagonal
    seed accumulated in log space so high orders near the poles do not
    underflow stepwise.
    """
    s = np.asarray(s, dtype=float)
    npts = s.size
    c = np.sqrt(np.maximum(0.0, 1.0 - s * s))
    table = np.zeros((npts, lmax + 1, lmax + 1))

    # log of prod_{k=1..m} sqrt((2k+1)/(2k)); sign (-1)^m applied separately
    with np.errstate(divide="ignore"):
        logc = np.log(np.where(c > 0.0, c, 1.0))
    log_ratio = 0.0
    for m in range(lmax + 1):
        if m == 0:
            pmm = np.full(npts, 1.0 / math.sqrt(FOUR_PI))
        else:
            log_ratio += 0.5 * math.log((2 * m + 1) / (2 * m))
            sign = -1.0 if m % 2 else 1.0
            pmm = sign / math.sqrt(FOUR_PI) * np.exp(log_ratio + m * logc)
            pmm = np.where(c > 0.0, pmm, 0.0)
        table[:, m, m] = pmm
        if m < lmax:
            table[:, m + 1, m] = math.sqrt(2 * m + 3) * s * pmm
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(
                ((2.0 * l + 1.0) * (l - 1.0 - m) * (l - 1.0 + m))
                / ((2.0 * l - 3.0) * (l - m) * (l + m))
            )
            table[:, l, m] = a * s * table[:, l - 1, m] - b * table[:, l - 2, m]
    return table


class Transform:
    """Precomputed synthesis/analysis machinery for one truncation spec.

    All tables are computed once and treated as immutable; the methods are
    pure functions of their inputs, so a Transform can be shared freely
    between threads.
    """

    def __init__(self, spec: TruncationSpec):
        self.spec = spec
        self.lmax = spec.lmax
        self.grid = build_grid(spec)
        L = self.lmax
        s = self.grid.nodes
        coslat = self.grid.cos_lat

        ptab_ext = normalized_legendre_table(L + 1, s)  # need degree L+1 for d/dtheta
        self._ptab = np.ascontiguousarray(ptab_ext[:, : L + 1, : L + 1])

        # d/dtheta of the latitude factor: dtheta Y_l^m = D[i,l,m] e^{i m phi},
        # from (1-s^2) d/ds Pbar_l^m = (l+1) eps_l Pbar_{l-1}^m - l eps_{l+1} Pbar_{l+1}^m.
        eps = np.zeros((L + 2, L + 1))
        for l in range(L + 2):
            for m in range(0, min(l, L) + 1):
                eps[l, m] = math.sqrt((l * l - m * m) / (4.0 * l * l - 1.0)) if l > 0 else 0.0
        dtab = np.zeros_like(self._ptab)
        for l in range(L + 1):
            upper = (l + 1) * eps[l, : l + 1] * (ptab_ext[:, l - 1, : l + 1] if l >= 1 else 0.0)
            lower = l * eps[l + 1, : l + 1] * ptab_ext[:, l + 1, : l + 1]
            dtab[:, l, : l + 1] = (upper - lower) / coslat[:, None]
        self._dtab = dtab

        # 1/cos(lat) weighted latitude factor, used for d/dphi / cos(lat)
        self._ptab_over_cos = self._ptab / coslat[:, None, None]

        # batched-matmul layouts: (order, nlat, degree) for synthesis and
        # (order, degree, nlat) for analysis; BLAS handles the contraction
        self._synth = {
            "p": np.ascontiguousarray(self._ptab.transpose(2, 0, 1)),
            "d": np.ascontiguousarray(self._dtab.transpose(2, 0, 1)),
            "pc": np.ascontiguousarray(self._ptab_over_cos.transpose(2, 0, 1)),
        }
        self._anal_tab = np.ascontiguousarray(self._ptab.transpose(2, 1, 0))

        self._wlat = self.grid.weights
        self._msigns = np.where(np.arange(L + 1) % 2 == 0, 1.0, -1.0)

    # -- helpers ------------------------------------------------------------

    def _check_field(self, field: SpectralField) -> None:
        if field.lmax != self.lmax:
            raise GridShapeError(
                f"field lmax={field.lmax} does not match transform lmax={self.lmax}"
            )

    def _split(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Columns for m >= 0 and sign-adjusted columns for m < 0."""
        L = self.lmax
        cpos = coeffs[:, L:]
        # column j of cneg corresponds to order -(j+1)
        cneg = coeffs[:, L - 1 :: -1] * self._msigns[1:][None, :]
        return cpos, cneg

    @staticmethod
    def _batched_apply(table: np.ndarray, cols: np.ndarray) -> np.ndarray:
        # real-table times complex-columns, batched over order; splitting the
        # real and imaginary parts keeps the contraction in real BLAS
        stacked = np.ascontiguousarray(
            np.stack([cols.real.T, cols.imag.T], axis=-1)
        )
        res = np.matmul(table, stacked)
        return (res[:, :, 0] + 1j * res[:, :, 1]).T

    def _spectrum_to_grid(self, cpos: np.ndarray, cneg: np.ndarray,
                          table: np.ndarray) -> np.ndarray:
        L, nlon = self.lmax, self.spec.nlon
        spectrum = np.zeros((self.spec.nlat, nlon), dtype=complex)
        spectrum[:, : L + 1] = self._batched_apply(table, cpos)
        neg = self._batched_apply(table[1:], cneg)
        spectrum[:, nlon - L :] = neg[:, ::-1]
        return np.fft.ifft(spectrum, axis=1) * nlon

    # -- public operations ----------------------------------------------------

    def synthesis(self, field: SpectralField) -> GridField:
        """Evaluate the field on the grid."""
        self._check_field(field)
        cpos, cneg = self._split(field.coeffs)
        values = self._spectrum_to_grid(cpos, cneg, self._synth["p"])
        if field.real_valued:
            values = values.real
        return GridField(values=values, grid=self.grid)

    def synthesis_dtheta(self, field: SpectralField) -> GridField:
        """Evaluate the latitudinal derivative of the field on the grid."""
        self._check_field(field)
        cpos, cneg = self._split(field.coeffs)
        values = self._spectrum_to_grid(cpos, cneg, self._synth["d"])
        if field.real_valued:
            values = values.real
        return GridField(values=values, grid=self.grid)

    def synthesis_dphi_over_cos(self, field: SpectralField) -> GridField:
        """Evaluate (d/dphi field) / cos(lat); finite at the poles for smooth fields."""
        self._check_field(field)
        L = self.lmax
        im = 1j * np.arange(-L, L + 1)[None, :]
        cpos, cneg = self._split(field.coeffs * im)
        values = self._spectrum_to_grid(cpos, cneg, self._synth["pc"])
        if field.real_valued:
            values = values.real
        return GridField(values=values, grid=self.grid)

    def gradient_values(self, field: SpectralField) -> tuple[np.ndarray, np.ndarray]:
        """(d/dtheta, d/dphi / cos) grid values in one fused transform pass."""
        self._check_field(field)
        L, nlon, nlat = self.lmax, self.spec.nlon, self.spec.nlat
        im = 1j * np.arange(-L, L + 1)[None, :]
        cpos_t, cneg_t = self._split(field.coeffs)
        cpos_p, cneg_p = self._split(field.coeffs * im)
        # stack (operator, order, degree, re/im) and contract once
        pos_cols = np.ascontiguousarray(np.stack([
            np.stack([cpos_t.real.T, cpos_t.imag.T], axis=-1),
            np.stack([cpos_p.real.T, cpos_p.imag.T], axis=-1),
        ]))
        neg_cols = np.ascontiguousarray(np.stack([
            np.stack([cneg_t.real.T, cneg_t.imag.T], axis=-1),
            np.stack([cneg_p.real.T, cneg_p.imag.T], axis=-1),
        ]))
        tables = np.stack([self._synth["d"], self._synth["pc"]])
        pos = np.matmul(tables, pos_cols)
        neg = np.matmul(tables[:, 1:], neg_cols)
        spectra = np.zeros((2, nlat, nlon), dtype=complex)
        spectra[:, :, : L + 1] = (pos[..., 0] + 1j * pos[..., 1]).transpose(0, 2, 1)
        spectra[:, :, nlon - L :] = (neg[..., 0] + 1j * neg[..., 1]).transpose(0, 2, 1)[:, :, ::-1]
        values = np.fft.ifft(spectra, axis=2) * nlon
        if field.real_valued:
            values = values.real
        return values[0], values[1]

    def analysis(self, values: np.ndarray | GridField, real_valued: bool | None = None) -> SpectralField:
        """Project grid values onto the harmonic basis by quadrature."""
        if isinstance(values, GridField):
            if values.grid.nlat != self.spec.nlat or values.grid.nlon != self.spec.nlon:
                raise GridShapeError("grid field does not match transform grid")
            values = values.values
        if values.shape != (self.spec.nlat, self.spec.nlon):
            raise GridShapeError(
                f"values shape {values.shape} does not match grid "
                f"({self.spec.nlat}, {self.spec.nlon})"
            )
        if real_valued is None:
            real_valued = bool(np.isrealobj(values))
        L, nlon = self.lmax, self.spec.nlon
        fourier = np.fft.fft(values, axis=1) * (2.0 * math.pi / nlon)
        weighted_pos = self._wlat[:, None] * fourier[:, : L + 1]
        cpos = self._batched_apply(self._anal_tab, weighted_pos)
        weighted_neg = self._wlat[:, None] * fourier[:, nlon - L :][:, ::-1]
        cneg = self._batched_apply(self._anal_tab[1:], weighted_neg)
        cneg *= self._msigns[1:][None, :]
        coeffs = np.zeros((L + 1, 2 * L + 1), dtype=complex)
        coeffs[:, L:] = cpos
        coeffs[:, :L] = cneg[:, ::-1]
        out = SpectralField(L, coeffs, real_valued=real_valued)
        if real_valued:
            out.enforce_reality()
        return out

    def max_abs(self, field: SpectralField) -> float:
        return float(np.max(np.abs(self.synthesis(field).values)))


@lru_cache(maxsize=64)
def get_transform(lmax: int, nlat: int, nlon: int) -> Transform:
    return Transform(TruncationSpec(lmax=lmax, nlat=nlat, nlon=nlon))


def transform_for(spec: TruncationSpec) -> Transform:
    return get_transform(spec.lmax, spec.nlat, spec.nlon)


def default_transform(lmax: int) -> Transform:
    spec = TruncationSpec.for_lmax(lmax)
    return get_transform(spec.lmax, spec.nlat, spec.nlon)


def dealiased_transform(lmax: int) -> Transform:
    spec = TruncationSpec.dealiased(lmax)
    return get_transform(spec.lmax, spec.nlat, spec.nlon)


# ---------------------------------------------------------------------------
# Module-level operation wrappers
# ---------------------------------------------------------------------------

def harmonic(l: int, m: int, grid: GaussGrid) -> GridField:
    """Sample the orthonormal complex harmonic of degree l, order m on the grid."""
    if abs(m) > l:
        raise ValueError(f"|m| = {abs(m)} exceeds degree l = {l}")
    ptab = normalized_legendre_table(l, grid.nodes)
    lat_part = ptab[:, l, abs(m)]
    if m < 0:
        lat_part = lat_part * (-1.0 if m % 2 else 1.0)
    values = lat_part[:, None] * np.exp(1j * m * grid.longitudes)[None, :]
    return GridField(values=values, grid=grid)


def analysis(f: GridField, lmax: int | None = None) -> SpectralField:
    """Analyze a grid field; the truncation defaults to the grid's capacity."""
    if lmax is None:
        lmax = min(f.grid.nlat - 1, (f.grid.nlon - 1) // 2)
    tr = get_transform(lmax, f.grid.nlat, f.grid.nlon)
    return tr.analysis(f)


def synthesis(c: SpectralField, grid: GaussGrid) -> GridField:
    tr = get_transform(c.lmax, grid.nlat, grid.nlon)
    return tr.synthesis(c)


def laplacian(c: SpectralField) -> SpectralField:
    """Apply the Laplace-Beltrami operator: each degree scales by -l(l+1)."""
    out = c.copy()
    l = np.arange(c.lmax + 1, dtype=float)
    out.coeffs *= (-l * (l + 1.0))[:, None]
    return out


def invert_laplacian(c: SpectralField, mean_tol: float = 1e-10) -> SpectralField:
    """Zero-mean solution of the Poisson problem on the sphere.

    Raises when the source carries a degree-0 component beyond tolerance:
    a constant forcing has no solution on a closed surface.
    """
    mean_size = abs(c.mean_coefficient)
    scale = max(c.norm(), 1.0)
    if mean_size > mean_tol * scale:
        raise MeanConstraintError(
            f"cannot invert Laplacian: degree-0 coefficient {mean_size:.3e} "
            f"violates the closed-surface mean constraint"
        )
    out = c.copy()
    l = np.arange(1, c.lmax + 1, dtype=float)
    out.coeffs[1:, :] /= (-l * (l + 1.0))[:, None]
    out.coeffs[0, :] = 0.0
    return out


def evaluate(field: SpectralField, phi: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Pointwise evaluation of a spectral field at arbitrary (phi, s) locations."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if phi.shape != s.shape:
        raise ValueError("phi and s must have matching shapes")
    L = field.lmax
    ptab = normalized_legendre_table(L, s.ravel())
    out = np.zeros(phi.size, dtype=complex)
    cpos = field.coeffs[:, L:]
    phases = np.exp(1j * np.outer(phi.ravel(), np.arange(L + 1)))
    out += np.einsum("ilm,lm,im->i", ptab, cpos, phases)
    signs = np.where(np.arange(1, L + 1) % 2 == 0, 1.0, -1.0)
    cneg = field.coeffs[:, L - 1 :: -1] * signs[None, :]
    out += np.einsum("ilm,lm,im->i", ptab[:, :, 1:], cneg, np.conj(phases[:, 1:]))
    if field.real_valued:
        out = out.real
    return out.reshape(phi.shape)


# ---------------------------------------------------------------------------
# Rotation of spectral fields
# ---------------------------------------------------------------------------

def _jacobi_values(n: np.ndarray, a: np.ndarray, b: np.ndarray, x: float) -> np.ndarray:
    """Jacobi polynomials P_n^{(a,b)}(x), vectorized over cells, recurrence in n."""
    nmax = int(n.max(initial=0))
    p_prev = np.ones_like(x * np.ones(n.shape))
    result = np.where(n == 0, p_prev, 0.0)
    if nmax == 0:
        return result
    p_curr = 0.5 * (a - b) + (1.0 + 0.5 * (a + b)) * x
    result = np.where(n == 1, p_curr, result)
    for k in range(2, nmax + 1):
        c1 = 2.0 * k * (k + a + b) * (2.0 * k + a + b - 2.0)
        c2 = (2.0 * k + a + b - 1.0) * (a * a - b * b)
        c3 = (2.0 * k + a + b - 2.0) * (2.0 * k + a + b - 1.0) * (2.0 * k + a + b)
        c4 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * (2.0 * k + a + b)
        with np.errstate(invalid="ignore", divide="ignore"):
            p_next = ((c2 + c3 * x) * p_curr - c4 * p_prev) / c1
        result = np.where(n == k, p_next, result)
        p_prev, p_curr = p_curr, p_next
    return result


def wigner_d_matrix(l: int, beta: float) -> np.ndarray:
    """Reduced rotation matrix d^l[k, m] for a rotation by beta about the y-axis.

    Indexed d[l+k, l+m]; evaluated through the Jacobi-polynomial form with
    log-space binomial prefactors, stable through degree a few hundred.
    """
    if l == 0:
        return np.ones((1, 1))
    m_row = np.arange(-l, l + 1)[:, None] * np.ones((1, 2 * l + 1), dtype=int)  # k index
    m_col = np.arange(-l, l + 1)[None, :] * np.ones((2 * l + 1, 1), dtype=int)  # m index
    k = m_row
    m = m_col

    cand = np.stack([l + m, l - m, l + k, l - k])
    k0 = cand.min(axis=0)
    which = cand.argmin(axis=0)
    a = np.select(
        [which == 0, which == 1, which == 2, which == 3],
        [k - m, m - k, m - k, k - m],
    ).astype(float)
    lam = np.select(
        [which == 0, which == 1, which == 2, which == 3],
        [k - m, np.zeros_like(k), np.zeros_like(k), k - m],
    ).astype(float)
    b = 2.0 * l - 2.0 * k0 - a

    def log_binom(nn, kk):
        return (
            _lgamma(nn + 1.0) - _lgamma(kk + 1.0) - _lgamma(nn - kk + 1.0)
        )

    log_pref = 0.5 * (log_binom(2.0 * l - k0, k0 + a) - log_binom(k0 + b, b))
    sign = np.where(np.mod(lam, 2) == 0, 1.0, -1.0)
    half = 0.5 * beta
    sin_h, cos_h = math.sin(half), math.cos(half)
    x = math.cos(beta)

    jac = _jacobi_values(k0.astype(int), a, b, x)
    # 0 * log(0) at the axis angles must yield 0, not NaN
    tiny = 1e-300
    log_sin = math.log(max(abs(sin_h), tiny))
    log_cos = math.log(max(abs(cos_h), tiny))
    log_trig = np.where(a > 0, a * log_sin, 0.0) + np.where(b > 0, b * log_cos, 0.0)
    trig_sign = np.where(
        (sin_h < 0) & (np.mod(a, 2) == 1), -1.0, 1.0
    ) * np.where((cos_h < 0) & (np.mod(b, 2) == 1), -1.0, 1.0)
    trig_zero = ((abs(sin_h) <= tiny) & (a > 0)) | ((abs(cos_h) <= tiny) & (b > 0))
    magnitude = np.where(trig_zero, 0.0, np.exp(log_pref + log_trig))
    return sign * trig_sign * magnitude * jac


def _lgamma(x):
    return np.vectorize(math.lgamma)(x) if isinstance(x, np.ndarray) else math.lgamma(x)


def generalized_legendre_closed_form(l: int, m: int, k: int, x: float) -> float:
    """Rodrigues-type closed form for the degree-l rotation matrix element.

    Differentiates (1-x)^(l-k)(1+x)^(l+k) symbolically; practical for l <= 10
    and used to cross-check the recurrence path.
    """
    poly = np.polynomial.Polynomial.fromroots([1.0] * (l - k) + [-1.0] * (l + k))
    # leading coefficient of fromroots is 1 for (x-1)^{l-k}(x+1)^{l+k}; fix sign
    poly = poly * (-1.0) ** (l - k)
    dpoly = poly.deriv(l - m)
    log_fac = 0.5 * (
        math.lgamma(l + m + 1)
        - math.lgamma(l - k + 1)
        - math.lgamma(l + k + 1)
        - math.lgamma(l - m + 1)
    )
    pref = (-1.0) ** (l - m) / 2.0**l * math.exp(log_fac)
    return float(
        pref * (1.0 + x) ** (-(m + k) / 2.0) * (1.0 - x) ** ((k - m) / 2.0) * dpoly(x)
    )


def rotation_block(l: int, rot: RotationSpec, closed_form: bool = False) -> np.ndarray:
    """Degree-l unitary acting on coefficient vectors under field rotation.

    If c are the coefficients of f, the rotated field f(R^{-1} x) with
    R = R_z(gamma) R_y(beta) R_z(alpha) has coefficients U @ c with
    U[k, m] = exp(-i k gamma) d^l[k, m](beta) exp(-i m alpha).
    """
    ms = np.arange(-l, l + 1)
    if closed_form:
        # Rodrigues form indexed (l, m, k) equals the recurrence's d[k, m]
        x = math.cos(rot.beta)
        d = np.array(
            [[generalized_legendre_closed_form(l, m, k, x) for m in ms] for k in ms]
        )
    else:
        d = wigner_d_matrix(l, rot.beta)
    phase_rows = np.exp(-1j * ms * rot.gamma)[:, None]
    phase_cols = np.exp(-1j * ms * rot.alpha)[None, :]
    return phase_rows * d * phase_cols


def rotate(c: SpectralField, r: RotationSpec, parity: bool = False,
           closed_form: bool = False) -> SpectralField:
    """Rotate a field: the result represents x -> f(R^{-1} x).

    Improper elements of the full orthogonal group are handled by the
    parity flag (the antipodal map multiplies degree l by (-1)^l).
    """
    out = SpectralField.zeros(c.lmax, c.real_valued)
    L = c.lmax
    out.coeffs[0, L] = c.coeffs[0, L]
    for l in range(1, L + 1):
        block = rotation_block(l, r, closed_form=closed_form)
        vec = c.coeffs[l, L - l : L + l + 1]
        res = block @ vec
        if parity and l % 2 == 1:
            res = -res
        out.coeffs[l, L - l : L + l + 1] = res
    if c.real_valued:
        out.enforce_reality()
    return out


def rotate_field_values(field: SpectralField, rot: RotationSpec, grid: GaussGrid,
                        parity: bool = False) -> np.ndarray:
    """Oracle for `rotate`: sample f(R^{-1} x) on the grid by point evaluation."""
    R = rot.matrix()
    if parity:
        R = -R
    s_grid = np.broadcast_to(grid.nodes[:, None], (grid.nlat, grid.nlon))
    phi_grid = np.broadcast_to(grid.longitudes[None, :], (grid.nlat, grid.nlon))
    cos_lat = np.sqrt(1.0 - s_grid**2)
    xyz = np.stack(
        [cos_lat * np.cos(phi_grid), cos_lat * np.sin(phi_grid), s_grid], axis=-1
    )
    rotated = xyz @ R  # row-vector convention: equals R^{-1} applied to each point
    s_new = np.clip(rotated[..., 2], -1.0, 1.0)
    phi_new = np.arctan2(rotated[..., 1], rotated[..., 0])
    return evaluate(field, phi_new.ravel(), s_new.ravel()).reshape(phi_new.shape)
