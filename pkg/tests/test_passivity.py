import numpy as np
import pytest

from app.errors import NotIFPError, ValidationError
from app.services.lti import PoleChain, PoleResidueSystem, RationalSISO, partial_fraction_decompose
from app.services.passivity import (
    FrequencyGrid,
    check_positive_real,
    estimate_ifp_index,
    hermitian_margin_curve,
    ifp_compose,
    ofp_compose,
)


def _siso(d, *residues, D=0.0):
    return PoleResidueSystem((1, 1), (PoleChain(d, tuple([[r]] for r in residues)),), [[D]])


OSCILLATOR = PoleResidueSystem((1, 1), (PoleChain(1j, ([[0.5]],)), PoleChain(-1j, ([[0.5]],))))


def test_first_order_lag_is_positive_real_with_small_ifp_index():
    verdict = check_positive_real(_siso(1.0, 1.0))
    assert verdict.is_positive_real
    assert verdict.stable
    nu = estimate_ifp_index(_siso(1.0, 1.0))
    assert 0.0 < nu <= 1e-3


def test_double_lag_ifp_index_and_worst_frequency():
    plant = partial_fraction_decompose(RationalSISO((1.0,), (0.25, 1.0, 1.0)))
    verdict = check_positive_real(plant)
    assert not verdict.is_positive_real
    assert verdict.ifp_index == pytest.approx(-0.5, abs=0.01)
    assert verdict.worst_frequency == pytest.approx(np.sqrt(0.75), rel=0.02)
    assert estimate_ifp_index(plant) == pytest.approx(-0.5, abs=0.01)


def test_oscillator_is_positive_real():
    verdict = check_positive_real(OSCILLATOR)
    assert verdict.is_positive_real
    assert all(check.passed for check in verdict.residue_checks)
    assert len(verdict.residue_checks) == 2


def test_negative_imaginary_axis_residue_fails():
    verdict = check_positive_real(_siso(0.0, -1.0))
    assert not verdict.is_positive_real
    assert not verdict.residue_checks[0].passed
    with pytest.raises(NotIFPError):
        estimate_ifp_index(_siso(0.0, -1.0))


def test_unstable_plant_is_not_positive_real():
    sys = _siso(-1.0, 1.0)
    verdict = check_positive_real(sys)
    assert not verdict.is_positive_real
    assert not verdict.stable
    assert verdict.ifp_index is None
    assert any("unstable" in note for note in verdict.notes)
    with pytest.raises(NotIFPError, match="unstable pole"):
        estimate_ifp_index(sys)


def test_static_gain_index_equals_gain():
    sys = PoleResidueSystem((2, 2), feedthrough=np.diag([0.3, 2.0]))
    assert estimate_ifp_index(sys) == pytest.approx(0.3)


def test_mimo_diagonal_lags_are_positive_real():
    sys = PoleResidueSystem((2, 2), (
        PoleChain(1.0, (np.diag([1.0, 0.0]),)),
        PoleChain(2.0, (np.diag([0.0, 1.0]),)),
    ))
    assert check_positive_real(sys).is_positive_real


def test_margin_curve_shape_and_zero_frequency(rng):
    sys = _siso(2.0, 1.0)
    grid = FrequencyGrid.build(sys, n_points=100)
    curve = hermitian_margin_curve(sys, grid)
    assert curve.omegas[0] == 0.0
    assert curve.margins[0] == pytest.approx(0.5)
    assert curve.response.shape == (len(grid), 1, 1)


def test_grid_excludes_imaginary_pole_frequency():
    grid = FrequencyGrid.build(OSCILLATOR, n_points=50)
    assert not np.any(np.abs(grid.points - 1.0) < 1e-9)


def test_refining_the_grid_never_raises_the_index():
    plant = partial_fraction_decompose(RationalSISO((1.0,), (0.25, 1.0, 1.0)))
    coarse = FrequencyGrid.build(plant, n_points=20, refine_points=0)
    fine = coarse.union(FrequencyGrid.build(plant, n_points=3000))
    assert estimate_ifp_index(plant, fine) <= estimate_ifp_index(plant, coarse)


def test_grid_validation():
    with pytest.raises(ValidationError):
        FrequencyGrid.build(omega_min=10.0, omega_max=1.0)
    with pytest.raises(ValidationError):
        FrequencyGrid.build(n_points=1)
    with pytest.raises(ValidationError):
        FrequencyGrid([-1.0, 2.0])


def test_index_composition():
    assert ofp_compose(0.5, -0.2) == pytest.approx(0.3)
    assert ifp_compose(-0.5, 0.7) == pytest.approx(0.2)
