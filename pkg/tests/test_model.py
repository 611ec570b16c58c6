import dataclasses
import math

import numpy as np
import pytest

from homloc import (
    DetectionEvent,
    DetectorGeometry,
    Offset3D,
    PolarizationSetting,
    SourceSpec,
    SpatialWidths,
    Strategy,
    ValidationError,
    bandwidths_to_widths,
    non_tuned_setting,
    pixel_to_momentum,
    tuned_setting,
    validate_polarization,
    widths_to_bandwidths,
)


def test_widths_to_bandwidths_values():
    w = SpatialWidths(50.0, 100.0, 0.3)
    s = widths_to_bandwidths(w)
    assert s.sigma_kx == pytest.approx(0.02, rel=1e-12)
    assert s.sigma_ky == pytest.approx(0.01, rel=1e-12)
    assert s.sigma_omega == pytest.approx(10.0 / 3.0, rel=1e-12)


def test_widths_unit_case():
    s = widths_to_bandwidths(SpatialWidths(1.0, 1.0, 1.0))
    assert (s.sigma_kx, s.sigma_ky, s.sigma_omega) == (1.0, 1.0, 1.0)


def test_widths_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(50):
        w = SpatialWidths(*np.exp(rng.uniform(-3, 3, size=3)))
        back = bandwidths_to_widths(widths_to_bandwidths(w))
        assert back.sigma_x == pytest.approx(w.sigma_x, rel=1e-12)
        assert back.sigma_y == pytest.approx(w.sigma_y, rel=1e-12)
        assert back.sigma_t == pytest.approx(w.sigma_t, rel=1e-12)


def test_widths_reject_nonpositive():
    with pytest.raises(ValidationError):
        SpatialWidths(0.0, 1.0, 1.0)
    with pytest.raises(ValidationError):
        SpatialWidths(1.0, -2.0, 1.0)
    with pytest.raises(ValidationError):
        SourceSpec(1.0, 1.0, 0.0)


def test_pixel_to_momentum():
    geom = DetectorGeometry(k0=1.0, d=1.0)
    assert pixel_to_momentum(geom, 3.0, 1.0) == pytest.approx(2.0)
    assert pixel_to_momentum(geom, 1.5, 1.5) == 0.0
    geom2 = DetectorGeometry(k0=2.0, d=4.0)
    assert pixel_to_momentum(geom2, 1.0, 0.0) == pytest.approx(0.5)


def test_pixel_to_momentum_antisymmetric():
    rng = np.random.default_rng(11)
    geom = DetectorGeometry(k0=1.7, d=0.4)
    for _ in range(20):
        a, b = rng.uniform(-5, 5, size=2)
        assert pixel_to_momentum(geom, a, b) == -pixel_to_momentum(geom, b, a)


def test_detector_geometry_positive():
    with pytest.raises(ValidationError):
        DetectorGeometry(k0=0.0, d=1.0)
    with pytest.raises(ValidationError):
        DetectorGeometry(k0=1.0, d=-1.0)


def test_polarization_tuned_defaults():
    """Omitted amplitudes fill in as d_a=1, d_b=0, c=d."""
    p = PolarizationSetting(nu=0.5, strategy=Strategy.TUNED)
    assert p.d_a == 1.0 and p.d_b == 0.0
    assert p.c_a == p.d_a and p.c_b == p.d_b
    validate_polarization(p)


def test_polarization_tuned_partial_d():
    p = PolarizationSetting(nu=0.5, strategy=Strategy.TUNED, d_a=0.6)
    assert p.d_b == pytest.approx(0.8)
    assert (p.c_a, p.c_b) == (p.d_a, p.d_b)


def test_tuning_violation_rejected():
    with pytest.raises(ValidationError):
        PolarizationSetting(
            nu=0.5, strategy=Strategy.TUNED, c_a=1.0, c_b=0.0, d_a=0.0, d_b=1.0
        )


def test_nu_out_of_range():
    for nu in (-0.1, 1.2, float("nan")):
        with pytest.raises(ValidationError):
            PolarizationSetting(nu=nu, strategy=Strategy.NON_TUNED)


def test_non_normalized_rejected():
    with pytest.raises(ValidationError):
        PolarizationSetting(
            nu=0.5, strategy=Strategy.NON_TUNED, c_a=0.8, c_b=0.8, d_a=1.0, d_b=0.0
        )
    with pytest.raises(ValidationError):
        PolarizationSetting(nu=0.5, strategy=Strategy.TUNED, d_a=1.2)


def test_random_unit_pairs_accepted():
    # any normalized (c, d) pair is a valid non-tuned setting
    rng = np.random.default_rng(3)
    for _ in range(25):
        ac, ad = rng.uniform(0, 2 * math.pi, size=2)
        p = PolarizationSetting(
            nu=rng.uniform(0, 1),
            strategy=Strategy.NON_TUNED,
            c_a=math.cos(ac),
            c_b=math.sin(ac),
            d_a=math.cos(ad),
            d_b=math.sin(ad),
        )
        validate_polarization(p)


def test_factory_helpers():
    t = tuned_setting(0.5, d_a=1.0 / math.sqrt(2.0))
    assert t.strategy is Strategy.TUNED
    assert t.d_b == pytest.approx(1.0 / math.sqrt(2.0))
    n = non_tuned_setting(0.3)
    assert n.strategy is Strategy.NON_TUNED
    assert n.d_a == 1.0


def test_event_upsilon_domain():
    DetectionEvent(0.1, 0.2, 0.3, 1)
    DetectionEvent(0.1, 0.2, 0.3, -1)
    with pytest.raises(ValidationError):
        DetectionEvent(0.1, 0.2, 0.3, 0)
    with pytest.raises(ValidationError):
        DetectionEvent(float("inf"), 0.0, 0.0, 1)


def test_offset_finite_and_tuple():
    o = Offset3D(1.0, -2.0, 0.5)
    assert o.as_tuple() == (1.0, -2.0, 0.5)
    with pytest.raises(ValidationError):
        Offset3D(float("nan"), 0.0, 0.0)


def test_dataclasses_frozen():
    s = SourceSpec(1.0, 1.0, 1.0)
    with pytest.raises(dataclasses.FrozenInstanceError):
        s.sigma_kx = 2.0
    e = DetectionEvent(0.0, 0.0, 0.0, 1)
    with pytest.raises(dataclasses.FrozenInstanceError):
        e.upsilon = -1


def test_source_bandwidth_tuple():
    s = SourceSpec(0.5, 1.5, 2.5)
    assert s.bandwidths() == (0.5, 1.5, 2.5)
