"""Two-photon detection distributions and strategy coefficients.

The detected observable per pair is (dkx, dky, domega, upsilon): the
momentum/frequency differences of the two photons plus the tag upsilon,
-1 for a coincidence (different detectors) and +1 for bunching (same
detector). For a pair offset theta = (dx, dy, dt) the joint density is

    p(e, upsilon) = (1/2) |phi|^2(e) * (1 + V * upsilon * cos(w)),
    w = dkx*dx + dky*dy + domega*dt,

with |phi|^2 the Gaussian spectral density and V the fringe visibility:
V = 1 for the tuned strategy (post-selection succeeding with probability
gamma per pair), V = nu for the non-tuned strategy (no post-selection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError
from .model import (
    DetectionEvent,
    Offset3D,
    PolarizationSetting,
    SourceSpec,
    Strategy,
    tuning_residual,
)

_TUNING_TOL = 1e-10


@dataclass(frozen=True)
class Visibility:
    """Fringe visibility of the interference term, in [0, 1]."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 <= v <= 1.0):
            raise ValidationError(f"visibility must lie in [0, 1], got {self.value!r}")
        object.__setattr__(self, "value", v)


def tuning_condition(p: PolarizationSetting) -> bool:
    """Whether 2 c_a d_a c_b d_b = c_a^2 d_b^2 + c_b^2 d_a^2 within 1e-10.

    Equivalent to (c_a d_b - c_b d_a)^2 = 0: the two projectors are
    parallel, which locks the interference offset and amplitude together
    and makes the visibility exactly 1.
    """
    return tuning_residual(p) < _TUNING_TOL


def visibility(p: PolarizationSetting) -> Visibility:
    """Fringe visibility of the setting: 1 if tuned, nu if non-tuned.

    Raises
    ------
    ValidationError
        Tuned strategy with the tuning condition violated. Projector
        pairs breaking the condition produce an interference term with
        offset and amplitude decoupled, a regime this package does not
        model; they are rejected rather than approximated.
    """
    if p.strategy is Strategy.TUNED:
        if not tuning_condition(p):
            raise ValidationError(
                "tuned strategy requires the tuning condition; "
                f"residual {tuning_residual(p)!r} exceeds {_TUNING_TOL}")
        return Visibility(1.0)
    return Visibility(p.nu)


def gamma_coefficient(nu: float, d_a: float) -> float:
    """Post-selection success probability per emitted pair, tuned strategy.

    gamma = d_a^2 * (d_a sqrt(nu) + d_b sqrt(1 - nu))^2 with
    d_b = sqrt(1 - d_a^2). Factorizes as the product of the two photons'
    projection probabilities when C = D.
    """
    if not (0.0 <= nu <= 1.0):
        raise ValidationError(f"nu must lie in [0, 1], got {nu!r}")
    if not (0.0 <= d_a <= 1.0):
        raise ValidationError(f"d_a must lie in [0, 1], got {d_a!r}")
    d_b = math.sqrt(max(0.0, 1.0 - d_a * d_a))
    amp = d_a * math.sqrt(nu) + d_b * math.sqrt(1.0 - nu)
    return d_a * d_a * amp * amp


def optimal_tuning(nu: float) -> tuple[float, float]:
    """Maximizer of gamma over d_a at fixed nu, and the maximum itself.

    Returns (d_a_star, gamma_max) = (sqrt((1 + sqrt(nu))/2), (1 + sqrt(nu))^2 / 4).
    """
    if not (0.0 <= nu <= 1.0):
        raise ValidationError(f"nu must lie in [0, 1], got {nu!r}")
    root = math.sqrt(nu)
    d_a_star = math.sqrt((1.0 + root) / 2.0)
    gamma_max = (1.0 + root) ** 2 / 4.0
    return d_a_star, gamma_max


def kappa_coefficient(nu: float) -> float:
    """Far-regime information scale of the non-tuned strategy, 1 - sqrt(1 - nu^2)."""
    if not (0.0 <= nu <= 1.0):
        raise ValidationError(f"nu must lie in [0, 1], got {nu!r}")
    return 1.0 - math.sqrt(max(0.0, (1.0 - nu) * (1.0 + nu)))


def phase(e: DetectionEvent, theta: Offset3D) -> float:
    """Interference phase dkx*dx + dky*dy + domega*dt in radians."""
    return e.dkx * theta.dx + e.dky * theta.dy + e.domega * theta.dt


def spectral_density(e: DetectionEvent, s: SourceSpec) -> float:
    """Normalized Gaussian density of (dkx, dky, domega).

    Zero mean, per-axis variances (sigma_kx^2, sigma_ky^2, sigma_omega^2);
    integrates to 1 over the three difference coordinates.
    """
    sx, sy, sw = s.sigma_kx, s.sigma_ky, s.sigma_omega
    q = (e.dkx / sx) ** 2 + (e.dky / sy) ** 2 + (e.domega / sw) ** 2
    return math.exp(-0.5 * q) / ((2.0 * math.pi) ** 1.5 * sx * sy * sw)


def event_density(
    e: DetectionEvent, theta: Offset3D, p: PolarizationSetting, s: SourceSpec
) -> float:
    """Joint density of one detected pair over (dkx, dky, domega, upsilon).

    (1/2) * spectral_density * (1 + V * upsilon * cos(phase)); summing the
    two upsilon values and integrating over momenta gives exactly 1. For
    the tuned strategy this is the law conditional on both photons passing
    post-selection; the per-emitted-pair rate carries the extra factor
    gamma_coefficient.
    """
    v = visibility(p).value
    w = phase(e, theta)
    return 0.5 * spectral_density(e, s) * (1.0 + v * e.upsilon * math.cos(w))


def bucket_coincidence_probability(
    theta: Offset3D, p: PolarizationSetting, s: SourceSpec
) -> float:
    """Total coincidence probability seen by non-resolving detectors.

    The upsilon = -1 branch mass of event_density: integrating the
    Gaussian against cos(phase) gives its characteristic function, so

        P_c = (1/2) * (1 - V * exp(-S/2)),
        S = sigma_kx^2 dx^2 + sigma_ky^2 dy^2 + sigma_omega^2 dt^2.
    """
    v = visibility(p).value
    return 0.5 * (1.0 - v * math.exp(-0.5 * _phase_variance(theta, s)))


def _phase_variance(theta: Offset3D, s: SourceSpec) -> float:
    """Variance of the phase under the spectral density, S = sum sigma_i^2 theta_i^2."""
    return (
        (s.sigma_kx * theta.dx) ** 2
        + (s.sigma_ky * theta.dy) ** 2
        + (s.sigma_omega * theta.dt) ** 2
    )


def strategy_scale(p: PolarizationSetting) -> float:
    """Per-emitted-pair retention probability: gamma if tuned, 1 if non-tuned."""
    if p.strategy is Strategy.TUNED:
        return gamma_coefficient(p.nu, abs(p.d_a))
    return 1.0
