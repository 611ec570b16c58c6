"""Domain types, invariant validation, and unit conversions.

Everything downstream (distributions, Fisher information, sampling,
estimation) works with the value objects defined here. All types are
immutable after validation and safe to share between threads.

Units are consistent-but-unlabelled: momentum bandwidths in rad/length,
frequency bandwidth in rad/time, offsets in the matching length/time
units. Only the CLI attaches unit labels, and only in output headers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import ValidationError

_NORM_TOL = 1e-12        # |c_a^2 + c_b^2 - 1| and |d_a^2 + d_b^2 - 1|
_TUNING_TOL = 1e-10      # residual of the tuning condition


def _require_finite(value, name):
    v = float(value)
    if not math.isfinite(v):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return v


def _require_positive(value, name):
    v = _require_finite(value, name)
    if v <= 0.0:
        raise ValidationError(f"{name} must be strictly positive, got {value!r}")
    return v


class Strategy(enum.Enum):
    """Measurement strategy: polarization-tuned or plain (non-tuned)."""

    TUNED = "tuned"
    NON_TUNED = "non_tuned"


@dataclass(frozen=True)
class SourceSpec:
    """Gaussian bandwidths of the photon-pair spectral distribution.

    Parameters
    ----------
    sigma_kx, sigma_ky : float
        Transverse-momentum bandwidths (rad/length).
    sigma_omega : float
        Angular-frequency bandwidth (rad/time).
    """

    sigma_kx: float
    sigma_ky: float
    sigma_omega: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_kx", _require_positive(self.sigma_kx, "sigma_kx"))
        object.__setattr__(self, "sigma_ky", _require_positive(self.sigma_ky, "sigma_ky"))
        object.__setattr__(self, "sigma_omega", _require_positive(self.sigma_omega, "sigma_omega"))

    def bandwidths(self):
        """Return (sigma_kx, sigma_ky, sigma_omega) as a tuple."""
        return (self.sigma_kx, self.sigma_ky, self.sigma_omega)


@dataclass(frozen=True)
class SpatialWidths:
    """Spatial-temporal widths of the source, the reciprocal view of SourceSpec.

    Parameters
    ----------
    sigma_x, sigma_y : float
        Transverse widths (length).
    sigma_t : float
        Temporal width (time).
    """

    sigma_x: float
    sigma_y: float
    sigma_t: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_x", _require_positive(self.sigma_x, "sigma_x"))
        object.__setattr__(self, "sigma_y", _require_positive(self.sigma_y, "sigma_y"))
        object.__setattr__(self, "sigma_t", _require_positive(self.sigma_t, "sigma_t"))


@dataclass(frozen=True)
class Offset3D:
    """The estimand: transverse offsets and time-of-flight delay (dx, dy, dt)."""

    dx: float
    dy: float
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "dx", _require_finite(self.dx, "dx"))
        object.__setattr__(self, "dy", _require_finite(self.dy, "dy"))
        object.__setattr__(self, "dt", _require_finite(self.dt, "dt"))

    def as_tuple(self):
        return (self.dx, self.dy, self.dt)


@dataclass(frozen=True)
class DetectorGeometry:
    """Optics mapping detector-plane positions to transverse momenta.

    k0 is the central wavenumber (rad/length), d the detector-plane
    distance (length).
    """

    k0: float
    d: float

    def __post_init__(self):
        object.__setattr__(self, "k0", _require_positive(self.k0, "k0"))
        object.__setattr__(self, "d", _require_positive(self.d, "d"))


@dataclass(frozen=True)
class DetectionEvent:
    """One detected pair: momentum/frequency differences plus the detector tag.

    upsilon is +1 when both photons land on the same detector (bunching)
    and -1 when they land on different detectors (coincidence).
    """

    dkx: float
    dky: float
    domega: float
    upsilon: int

    def __post_init__(self):
        object.__setattr__(self, "dkx", _require_finite(self.dkx, "dkx"))
        object.__setattr__(self, "dky", _require_finite(self.dky, "dky"))
        object.__setattr__(self, "domega", _require_finite(self.domega, "domega"))
        u = self.upsilon
        if u not in (+1, -1):
            raise ValidationError(f"upsilon must be +1 or -1, got {u!r}")
        object.__setattr__(self, "upsilon", int(u))


@dataclass(frozen=True)
class PolarizationSetting:
    """Indistinguishability plus polarization projector amplitudes.

    nu is the polarization-mode overlap of the two photons, in [0, 1].
    (c_a, c_b) and (d_a, d_b) are the projector amplitudes at the two
    output ports; each pair must be normalized to 1 within 1e-12.

    Unset amplitudes are filled in: d_a defaults to 1, d_b to
    sqrt(1 - d_a^2), and (c_a, c_b) to (d_a, d_b). The tuned strategy
    requires the tuning condition (see homloc.physics) to hold, which for
    unit-norm pairs forces C parallel to D; the defaults satisfy it for
    every d_a.
    """

    nu: float
    strategy: Strategy
    c_a: float | None = None
    c_b: float | None = None
    d_a: float | None = None
    d_b: float | None = None

    def __post_init__(self):
        d_a = 1.0 if self.d_a is None else _require_finite(self.d_a, "d_a")
        if self.d_b is None:
            if abs(d_a) > 1.0:
                raise ValidationError(f"d_a must lie in [-1, 1] to derive d_b, got {d_a!r}")
            d_b = math.sqrt(max(0.0, 1.0 - d_a * d_a))
        else:
            d_b = _require_finite(self.d_b, "d_b")
        if self.c_a is None and self.c_b is None:
            c_a, c_b = d_a, d_b
        elif self.c_a is None or self.c_b is None:
            raise ValidationError("c_a and c_b must be given together or both omitted")
        else:
            c_a = _require_finite(self.c_a, "c_a")
            c_b = _require_finite(self.c_b, "c_b")
        object.__setattr__(self, "c_a", c_a)
        object.__setattr__(self, "c_b", c_b)
        object.__setattr__(self, "d_a", d_a)
        object.__setattr__(self, "d_b", d_b)
        object.__setattr__(self, "nu", _require_finite(self.nu, "nu"))
        if not isinstance(self.strategy, Strategy):
            raise ValidationError(f"strategy must be a Strategy, got {self.strategy!r}")
        validate_polarization(self)


def tuning_residual(p: PolarizationSetting) -> float:
    """Absolute residual of the polarization tuning condition.

    The condition 2 c_a d_a c_b d_b = c_a^2 d_b^2 + c_b^2 d_a^2 is
    equivalent to (c_a d_b - c_b d_a)^2 = 0, i.e. C parallel to D.
    """
    cross = p.c_a * p.d_b - p.c_b * p.d_a
    return cross * cross


def validate_polarization(p: PolarizationSetting) -> PolarizationSetting:
    """Check all PolarizationSetting invariants; return the setting unchanged.

    Raises
    ------
    ValidationError
        If nu lies outside [0, 1], either amplitude pair is not unit-norm
        within 1e-12, or the strategy is tuned but the tuning condition
        fails (residual above 1e-10).
    """
    if not (0.0 <= p.nu <= 1.0):
        raise ValidationError(f"nu must lie in [0, 1], got {p.nu!r}")
    c_norm = p.c_a * p.c_a + p.c_b * p.c_b
    d_norm = p.d_a * p.d_a + p.d_b * p.d_b
    if abs(c_norm - 1.0) > _NORM_TOL:
        raise ValidationError(
            f"(c_a, c_b) must be normalized: c_a^2 + c_b^2 = {c_norm!r}")
    if abs(d_norm - 1.0) > _NORM_TOL:
        raise ValidationError(
            f"(d_a, d_b) must be normalized: d_a^2 + d_b^2 = {d_norm!r}")
    if p.strategy is Strategy.TUNED and tuning_residual(p) >= _TUNING_TOL:
        raise ValidationError(
            "tuned strategy requires the tuning condition "
            f"(c_a d_b - c_b d_a)^2 < {_TUNING_TOL}, got residual {tuning_residual(p)!r}")
    return p


def tuned_setting(nu: float, d_a: float) -> PolarizationSetting:
    """Tuned setting with C = D = (d_a, sqrt(1 - d_a^2))."""
    return PolarizationSetting(nu=nu, strategy=Strategy.TUNED, d_a=d_a)


def non_tuned_setting(nu: float) -> PolarizationSetting:
    """Non-tuned setting; projector amplitudes play no role downstream."""
    return PolarizationSetting(nu=nu, strategy=Strategy.NON_TUNED)


def widths_to_bandwidths(w: SpatialWidths) -> SourceSpec:
    """Convert spatial-temporal widths to spectral bandwidths, sigma_k = 1/sigma_x.

    The reciprocal convention (no factor 1/2) is what makes the
    localization bounds come out in physical units; see the acceptance
    tests pinning the 50 nm / 100 nm / 0.3 fs scenario.
    """
    return SourceSpec(
        sigma_kx=1.0 / w.sigma_x,
        sigma_ky=1.0 / w.sigma_y,
        sigma_omega=1.0 / w.sigma_t,
    )


def bandwidths_to_widths(s: SourceSpec) -> SpatialWidths:
    """Inverse of widths_to_bandwidths; round-trips to 1e-12 relative."""
    return SpatialWidths(
        sigma_x=1.0 / s.sigma_kx,
        sigma_y=1.0 / s.sigma_ky,
        sigma_t=1.0 / s.sigma_omega,
    )


def pixel_to_momentum(g: DetectorGeometry, x: float, x_prime: float) -> float:
    """Momentum difference (k0/d) * (x - x_prime) for detector-plane positions."""
    return (g.k0 / g.d) * (_require_finite(x, "x") - _require_finite(x_prime, "x_prime"))
