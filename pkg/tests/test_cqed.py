"""Figure-of-merit arithmetic, scaling identities, and field sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spcavity import cqed
from spcavity.analysis import ModeVolume
from spcavity.constants import EV_TO_RAD_PER_S
from spcavity.geometry import CellKind, MaterialGrid, PlacementError

OMEGA_1346 = 1.346 * EV_TO_RAD_PER_S
VOLUME_50NM_CUBE = (50e-9) ** 3

# Reference numbers computed independently from CODATA constants:
#   enhancement 1 + (3/4pi^2)(lambda/n)^3 Q/V at 1.346 eV, n=3.5,
#   Q=1000, V=(50 nm)^3, unit intensity fraction, and the matching
#   coupling and decay rates.
F_REFERENCE = 1.108282e4
G_REFERENCE = 2.674171e12  # rad/s
KAPPA_REFERENCE = 1.022467e12  # rad/s


class TestEmitterSpec:

    def test_defaults(self):
        e = cqed.EmitterSpec()
        assert e.dipole_moment == 1e-28
        assert e.gamma_bulk == pytest.approx(2 * math.pi * 1e9)
        assert e.gamma_nr == 0.0
        assert e.gamma_total == e.gamma_bulk
        assert e.orientation == (0.0, 1.0)

    def test_orientation_normalized(self):
        e = cqed.EmitterSpec(orientation=(3.0, 4.0))
        assert e.orientation == pytest.approx((0.6, 0.8))

    @pytest.mark.parametrize("kwargs", [
        {"dipole_moment": 0.0},
        {"dipole_moment": -1e-28},
        {"gamma_bulk": 0.0},
        {"gamma_nr": -1.0},
        {"orientation": (0.0, 0.0)},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            cqed.EmitterSpec(**kwargs)


class TestPurcellEnhancement:

    def test_reference_value(self):
        f = cqed.purcell_enhancement(
            OMEGA_1346, 1000.0, VOLUME_50NM_CUBE, fraction=1.0)
        assert f == pytest.approx(F_REFERENCE, rel=1e-4)

    def test_zero_fraction_gives_unity(self):
        f = cqed.purcell_enhancement(
            OMEGA_1346, 1000.0, VOLUME_50NM_CUBE, fraction=0.0)
        assert f == 1.0

    def test_doubling_volume_halves_enhancement(self):
        f1 = cqed.purcell_enhancement(OMEGA_1346, 500.0, VOLUME_50NM_CUBE)
        f2 = cqed.purcell_enhancement(
            OMEGA_1346, 500.0, 2.0 * VOLUME_50NM_CUBE)
        assert (f1 - 1.0) / (f2 - 1.0) == pytest.approx(2.0, rel=1e-12)

    @pytest.mark.parametrize("kwargs", [
        {"omega": -1.0, "q_total": 100.0, "volume": 1e-22},
        {"omega": OMEGA_1346, "q_total": 0.0, "volume": 1e-22},
        {"omega": OMEGA_1346, "q_total": 100.0, "volume": 0.0},
    ])
    def test_rejects_bad_inputs(self, kwargs):
        with pytest.raises(ValueError):
            cqed.purcell_enhancement(**kwargs)

    def test_rejects_fraction_above_one(self):
        with pytest.raises(ValueError):
            cqed.purcell_enhancement(
                OMEGA_1346, 100.0, 1e-22, fraction=1.2)


class TestCouplingRate:

    def test_reference_value(self):
        g = cqed.coupling_rate(OMEGA_1346, VOLUME_50NM_CUBE, fraction=1.0)
        assert g == pytest.approx(G_REFERENCE, rel=1e-4)

    def test_zero_fraction_gives_zero(self):
        assert cqed.coupling_rate(
            OMEGA_1346, VOLUME_50NM_CUBE, fraction=0.0) == 0.0

    def test_quadrupling_volume_halves_g(self):
        g1 = cqed.coupling_rate(OMEGA_1346, VOLUME_50NM_CUBE)
        g2 = cqed.coupling_rate(OMEGA_1346, 4.0 * VOLUME_50NM_CUBE)
        assert g1 / g2 == pytest.approx(2.0, rel=1e-12)

    def test_linear_in_dipole_moment(self):
        g1 = cqed.coupling_rate(OMEGA_1346, VOLUME_50NM_CUBE,
                                dipole_moment=1e-28)
        g2 = cqed.coupling_rate(OMEGA_1346, VOLUME_50NM_CUBE,
                                dipole_moment=2e-28)
        assert g2 == pytest.approx(2.0 * g1, rel=1e-12)


class TestCavityDecay:

    def test_reference_value(self):
        kappa = cqed.cavity_decay_rate(OMEGA_1346, 1000.0)
        assert kappa == pytest.approx(KAPPA_REFERENCE, rel=1e-4)
        assert kappa / (2 * math.pi * 1e9) == pytest.approx(162.73, abs=0.05)

    def test_identity_with_q(self):
        kappa = cqed.cavity_decay_rate(OMEGA_1346, 731.0)
        assert kappa * 2.0 * 731.0 == pytest.approx(OMEGA_1346, rel=1e-15)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            cqed.cavity_decay_rate(OMEGA_1346, 0.0)


class TestStrongCouplingVerdict:

    def test_reaches_strong_coupling(self):
        two_pi_ghz = 2 * math.pi * 1e9
        v = cqed.strong_coupling_verdict(
            170 * two_pi_ghz, 160 * two_pi_ghz, 1 * two_pi_ghz)
        assert v.strong
        assert v.g_over_kappa == pytest.approx(170 / 160)
        assert v.g_over_gamma == pytest.approx(170.0)

    def test_cavity_decay_wins(self):
        two_pi_ghz = 2 * math.pi * 1e9
        v = cqed.strong_coupling_verdict(
            100 * two_pi_ghz, 160 * two_pi_ghz, 1 * two_pi_ghz)
        assert not v.strong

    def test_emitter_linewidth_wins(self):
        v = cqed.strong_coupling_verdict(5.0, 1.0, 8.0)
        assert not v.strong

    @settings(max_examples=30, deadline=None)
    @given(
        g=st.floats(1e3, 1e15),
        kappa=st.floats(1e3, 1e15),
        gamma=st.floats(1e3, 1e15),
        scale=st.floats(1e-6, 1e6),
    )
    def test_verdict_is_scale_invariant(self, g, kappa, gamma, scale):
        a = cqed.strong_coupling_verdict(g, kappa, gamma)
        b = cqed.strong_coupling_verdict(
            scale * g, scale * kappa, scale * gamma)
        assert a.strong == b.strong
        assert b.g_over_kappa == pytest.approx(a.g_over_kappa, rel=1e-9)
        assert b.g_over_gamma == pytest.approx(a.g_over_gamma, rel=1e-9)

    def test_rejects_nonpositive_rates(self):
        with pytest.raises(ValueError):
            cqed.strong_coupling_verdict(1.0, 0.0, 1.0)


class TestEvaluateMode:
    # an effective area of (50 nm)^2 at 50 nm width gives the reference
    # (50 nm)^3 volume
    MODE = ModeVolume(area=2.5e-15, peak_index=(10, 10))

    def test_reference_report(self):
        r = cqed.evaluate_mode(OMEGA_1346, 1000.0, self.MODE, 1.0)
        assert r.width_nm == 50.0
        assert r.purcell_at_width == pytest.approx(F_REFERENCE, rel=1e-4)
        assert r.g == pytest.approx(G_REFERENCE, rel=1e-4)
        assert r.kappa == pytest.approx(KAPPA_REFERENCE, rel=1e-4)
        assert r.gamma == pytest.approx(2 * math.pi * 1e9)
        assert r.strong_coupling
        assert r.g_ghz == pytest.approx(425.61, rel=1e-3)
        assert r.kappa_ghz == pytest.approx(162.73, rel=1e-3)

    def test_per_um_is_width_independent(self):
        a = cqed.evaluate_mode(OMEGA_1346, 1000.0, self.MODE, 0.3,
                               width_nm=50.0)
        b = cqed.evaluate_mode(OMEGA_1346, 1000.0, self.MODE, 0.3,
                               width_nm=100.0)
        assert a.purcell_per_um == pytest.approx(b.purcell_per_um, rel=1e-12)
        assert (a.purcell_at_width - 1) / (b.purcell_at_width - 1) \
            == pytest.approx(2.0, rel=1e-12)
        assert a.g / b.g == pytest.approx(math.sqrt(2.0), rel=1e-12)

    def test_missing_mode_volume_rejected(self):
        with pytest.raises(ValueError):
            cqed.evaluate_mode(OMEGA_1346, 1000.0, None, 1.0)

    @settings(max_examples=30, deadline=None)
    @given(
        q=st.floats(10.0, 1e5),
        area=st.floats(1e-16, 1e-13),
        fraction=st.floats(0.0, 1.0),
        width_nm=st.floats(10.0, 1000.0),
    )
    def test_report_invariants(self, q, area, fraction, width_nm):
        mode = ModeVolume(area=area, peak_index=(0, 0))
        r = cqed.evaluate_mode(OMEGA_1346, q, mode, fraction,
                               width_nm=width_nm)
        assert r.purcell_at_width >= 1.0
        assert r.kappa * 2.0 * q == pytest.approx(OMEGA_1346, rel=1e-12)
        assert r.strong_coupling == (r.g > r.kappa and r.g > r.gamma)
        assert 0.0 <= r.field_fraction <= 1.0


def _dielectric_grid(nx=40, nz=50, dx_nm=4.0):
    cells = np.full((nx, nz), int(CellKind.DIELECTRIC), dtype=np.uint8)
    return MaterialGrid(nx=nx, nz=nz, dx_nm=dx_nm, cell_kind=cells,
                        pml_cells=0, interface_k=nz)


class TestFieldFraction:

    def _fields(self, grid):
        ex = np.zeros((grid.nx, grid.nz + 1))
        ez = np.zeros((grid.nx + 1, grid.nz))
        return ex, ez

    def test_projected_ratio(self):
        grid = _dielectric_grid()
        ex, ez = self._fields(grid)
        # emitter node: center x, 20 nm depth = 5 cells below interface
        i, k = grid.nx // 2, grid.nz - 5
        ez[i, k] = ez[i + 1, k] = 1.0
        ez[5, 10] = ez[6, 10] = 2.0  # stronger peak elsewhere
        emitter = cqed.EmitterSpec(depth_nm=20.0)
        f = cqed.field_fraction(grid, ex, ez, emitter)
        assert f == pytest.approx(0.25, rel=1e-12)

    def test_orthogonal_dipole_sees_nothing(self):
        grid = _dielectric_grid()
        ex, ez = self._fields(grid)
        i, k = grid.nx // 2, grid.nz - 5
        ez[i, k] = ez[i + 1, k] = 1.0
        emitter = cqed.EmitterSpec(depth_nm=20.0, orientation=(1.0, 0.0))
        assert cqed.field_fraction(grid, ex, ez, emitter) == 0.0

    def test_tilted_dipole(self):
        grid = _dielectric_grid()
        ex, ez = self._fields(grid)
        i, k = grid.nx // 2, grid.nz - 5
        ez[i, k] = ez[i + 1, k] = 1.0
        emitter = cqed.EmitterSpec(depth_nm=20.0, orientation=(1.0, 1.0))
        f = cqed.field_fraction(grid, ex, ez, emitter)
        assert f == pytest.approx(0.5, rel=1e-12)

    def test_zero_field_rejected(self):
        grid = _dielectric_grid()
        ex, ez = self._fields(grid)
        with pytest.raises(ValueError):
            cqed.field_fraction(grid, ex, ez, cqed.EmitterSpec())

    def test_out_of_bounds_emitter_rejected(self):
        grid = _dielectric_grid()
        ex, ez = self._fields(grid)
        ez[1, 1] = 1.0
        emitter = cqed.EmitterSpec(depth_nm=5000.0)
        with pytest.raises(PlacementError):
            cqed.field_fraction(grid, ex, ez, emitter)
