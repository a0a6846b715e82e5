"""Coefficient library: periodicity, symmetry, positivity, phase layout."""

import numpy as np
import pytest

from perihom.coefficients import (
    InvalidCoefficientError,
    PeriodicCoefficient,
    checkerboard_coefficient,
    constant_coefficient,
    diag_cross_coefficient,
    grid_sample_coefficient,
    laminate_coefficient,
    trig_coefficient,
)


def test_constant_matrix_symmetrized():
    coef = constant_coefficient([[2.0, 0.5], [0.3, 3.0]])
    vals = coef.sample_fractional(np.zeros((1, 2)))
    assert np.abs(vals[0] - np.array([[2.0, 0.4], [0.4, 3.0]])).max() < 1e-15


def test_trig_profile_values():
    coef = trig_coefficient(1, offset=2.0, amplitude=1.0)
    t = np.array([[0.0], [0.25], [0.5]])
    vals = coef.sample_fractional(t)
    assert vals[:, 0, 0] == pytest.approx([3.0, 2.0, 1.0], abs=1e-14)


def test_trig_must_stay_positive():
    with pytest.raises(InvalidCoefficientError):
        trig_coefficient(1, offset=1.0, amplitude=1.5)


def test_laminate_phases():
    coef = laminate_coefficient(1, values=(1.0, 4.0))
    t = np.array([[0.1, 0.9], [0.6, 0.1], [1.2, 0.0]])
    vals = coef.sample_fractional(t)[:, 0, 0]
    assert vals == pytest.approx([1.0, 4.0, 1.0])


def test_checkerboard_parity():
    coef = checkerboard_coefficient(1, values=(1.0, 4.0))
    pts = np.array([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
    vals = coef.sample_fractional(pts)[:, 0, 0]
    assert vals == pytest.approx([1.0, 4.0, 4.0, 1.0])


def test_checkerboard_periodic():
    coef = checkerboard_coefficient(1)
    rng = np.random.default_rng(5)
    t = rng.random((40, 2))
    a = coef.sample_fractional(t)
    b = coef.sample_fractional(t + np.array([3.0, -2.0]))
    assert np.abs(a - b).max() == 0.0


def test_diag_cross_structure():
    coef = diag_cross_coefficient(offset=2.0, amplitude=1.0)
    vals = coef.sample_fractional(np.array([[0.0, 0.25]]))
    # first diagonal entry depends on t_2 only, second on t_1 only
    assert vals[0, 0, 0] == pytest.approx(2.0, abs=1e-14)
    assert vals[0, 1, 1] == pytest.approx(3.0, abs=1e-14)
    assert vals[0, 0, 1] == 0.0


def test_validation_rejects_indefinite():
    bad = PeriodicCoefficient(size=1, sampler=lambda t: np.full((t.shape[0], 1, 1), -1.0))
    with pytest.raises(InvalidCoefficientError):
        bad.sample_fractional(np.zeros((4, 2)), validate=True)


def test_validation_rejects_asymmetric():
    def sampler(t):
        out = np.tile(np.array([[1.0, 0.5], [0.0, 1.0]]), (t.shape[0], 1, 1))
        return out

    bad = PeriodicCoefficient(size=2, sampler=sampler)
    with pytest.raises(InvalidCoefficientError):
        bad.sample_fractional(np.zeros((4, 2)), validate=True)


def test_grid_sample_lookup():
    coef = grid_sample_coefficient([[1.0, 2.0], [3.0, 4.0]])
    pts = np.array([[0.1, 0.1], [0.1, 0.9], [0.9, 0.1], [0.6, 0.7]])
    vals = coef.sample_fractional(pts)[:, 0, 0]
    assert vals == pytest.approx([1.0, 2.0, 3.0, 4.0])


def test_bounds_scan():
    coef = trig_coefficient(1, offset=2.0, amplitude=1.0)
    lo, hi = coef.bounds(resolution=128, d=1)
    assert 1.0 - 1e-3 <= lo <= 1.01
    assert 2.99 <= hi <= 3.0 + 1e-12
