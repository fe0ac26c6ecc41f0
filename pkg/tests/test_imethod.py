import math

import numpy as np
import pytest

from nlslab import (
    ComplexField,
    Grid,
    PHYSICAL,
    apply_galilean_boost,
    littlewood_paley,
    random_smooth_field,
)
from nlslab.ground_state import ground_state_mass, synthesize_soliton
from nlslab.imethod import (
    SweepResult,
    commutator_norm_sweep,
    commutator_norms,
    energy_increment_sweep,
    momentum_increment_sweep,
    norm_equivalence_report,
    reference_exponent,
    weinstein_gap,
)


@pytest.fixture(scope="module")
def broadband_d3():
    # xi_max = 256 on a 64^3 grid: room for cutoffs up to 64 with their
    # transition octave resolved; amplitude large enough that the nonlinear
    # increments sit well above the integrator drift floor
    grid = Grid(3, 64, np.pi / 4.0)
    rng = np.random.default_rng(42)
    return random_smooth_field(grid, rng, spectral_decay=3.0, norm=3.0)


class TestSweepResult:
    def test_axis_must_increase(self):
        with pytest.raises(ValueError):
            SweepResult(axis=[4.0, 2.0], values=[1.0, 1.0], slope=0.0,
                        intercept=0.0, fit_residual=0.0, reference_exponent=-0.7)

    def test_csv_layout(self, tmp_path):
        sw = SweepResult(axis=[2.0, 4.0], values=[1.0, 0.5], slope=-1.0,
                         intercept=0.0, fit_residual=0.0, reference_exponent=-0.7)
        path = tmp_path / "sweep.csv"
        sw.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "axis_value,measurement,reference_bound"
        assert len(lines) == 3

    def test_summary_json_flags_blend(self):
        sw = SweepResult(axis=[2.0, 4.0], values=[1.0, 0.5], slope=-1.0,
                         intercept=0.0, fit_residual=0.0, reference_exponent=-0.7)
        assert "hermite-log-c1" in sw.summary_json()


class TestEnergyIncrements:
    def test_identity_regularity_hits_integrator_floor(self, broadband_d3):
        sweep = energy_increment_sweep(broadband_d3, [8, 16, 32], horizon=0.004,
                                       s=1.0)
        # I = Id for every N: the increment is pure integrator drift and does
        # not decay in N
        assert np.ptp(sweep.values) < 1e-12 * max(sweep.values.max(), 1e-300)
        assert abs(sweep.slope) < 0.05

    def test_band_limited_data_inactive_multiplier(self):
        grid = Grid(2, 64, np.pi / 2.0)
        rng = np.random.default_rng(7)
        u0 = littlewood_paley(
            random_smooth_field(grid, rng, spectral_decay=2.0), 4.0, "<=N"
        )
        sweep = energy_increment_sweep(u0, [16, 32, 64], horizon=0.004, s=0.6)
        # all increments equal the true-energy drift while the solution stays
        # essentially inside |xi| <= N over a short horizon
        rel = np.ptp(sweep.values) / max(sweep.values.max(), 1e-300)
        assert rel < 0.2

    def test_broadband_increments_decay(self, broadband_d3):
        sweep = energy_increment_sweep(broadband_d3, [8, 16, 32, 64],
                                       horizon=0.02, s=0.7)
        assert sweep.reference_exponent == pytest.approx(-0.7)
        assert sweep.slope <= -0.5
        # the last cutoff may graze the integrator floor; the decay itself is
        # asserted on the clearly-resolved points
        assert sweep.values[0] > sweep.values[1] > sweep.values[2]

    def test_increment_dt_convergence(self):
        grid = Grid(2, 64, np.pi / 2.0)
        rng = np.random.default_rng(3)
        u0 = random_smooth_field(grid, rng, spectral_decay=2.5)
        a = energy_increment_sweep(u0, [8, 16], horizon=0.01, s=0.7, dt=2e-4)
        b = energy_increment_sweep(u0, [8, 16], horizon=0.01, s=0.7, dt=1e-4)
        assert np.all(np.abs(a.values - b.values) < 0.05 * np.abs(b.values))


class TestMomentumIncrements:
    def test_even_data_zero_momentum_along_flow(self):
        grid = Grid(2, 64, np.pi / 2.0)
        x2 = grid.radius2()
        u0 = ComplexField(grid, PHYSICAL,
                          np.exp(-6.0 * x2) * (1.0 + 0.3 * np.cos(8 * grid.coordinate(0))))
        sweep = momentum_increment_sweep(u0, [8, 16], horizon=0.004, s=0.7)
        assert np.all(sweep.values < 1e-10)

    def test_identity_regularity_flat(self, broadband_d3):
        boosted = apply_galilean_boost(broadband_d3, [16.0, 0.0, 0.0])
        sweep = momentum_increment_sweep(boosted, [8, 16, 32], horizon=0.004, s=1.0)
        assert np.ptp(sweep.values) < 1e-10 * max(sweep.values.max(), 1e-300)

    def test_boosted_broadband_decays(self, broadband_d3):
        boosted = apply_galilean_boost(broadband_d3, [16.0, 0.0, 0.0])
        sweep = momentum_increment_sweep(boosted, [8, 16, 32, 64],
                                         horizon=0.02, s=0.7)
        assert sweep.slope < 0.0
        assert sweep.reference_exponent == pytest.approx(-0.7)


class TestCommutator:
    def test_exactly_zero_at_identity_regularity(self):
        grid = Grid(2, 64, np.pi / 2.0)
        rng = np.random.default_rng(5)
        for _ in range(3):
            u = random_smooth_field(grid, rng, spectral_decay=rng.uniform(1.5, 3.0))
            sweep = commutator_norm_sweep(u, [4, 8, 16], s=1.0)
            assert np.all(sweep.values == 0.0)
            assert np.all(np.array(sweep.extra["gradient_commutator"]) == 0.0)

    def test_band_limited_bounded_by_spectral_broadening(self):
        # u supported in |xi| <= N/2: the commutator reduces to (I - Id)
        # applied to the nonlinearity, so its L2 size is bounded by the
        # nonlinear spectrum past N
        grid = Grid(2, 64, np.pi / 2.0)
        rng = np.random.default_rng(6)
        u = littlewood_paley(
            random_smooth_field(grid, rng, spectral_decay=2.0), 8.0, "<=N"
        )
        N = 16.0
        d = grid.d
        nl = ComplexField(grid, PHYSICAL,
                          np.abs(u.values) ** (4.0 / d) * u.values)
        broadening = littlewood_paley(nl, 16.0, ">N").norm_l2()
        from nlslab import MultiplierSpec, apply_smoothing
        from nlslab.spectral_core import as_physical

        spec = MultiplierSpec(cutoff=N, regularity=0.6)
        iu = as_physical(apply_smoothing(u, spec))
        comm = as_physical(apply_smoothing(nl, spec)).values \
            - np.abs(iu.values) ** (4.0 / d) * iu.values
        comm_l2 = math.sqrt(float(np.sum(np.abs(comm) ** 2))
                            * grid.quad_weight(PHYSICAL))
        assert comm_l2 <= broadening + 1e-12

    def test_broadband_decay_d4(self):
        grid = Grid(4, 32, np.pi / 8.0)  # xi_max = 256
        rng = np.random.default_rng(8)
        u = random_smooth_field(grid, rng, spectral_decay=3.2)
        sweep = commutator_norm_sweep(u, [8, 16, 32, 64, 128], s=0.8)
        assert sweep.slope < 0.0
        assert sweep.reference_exponent == pytest.approx(-0.8)
        grads = np.array(sweep.extra["gradient_commutator"])
        assert np.all(np.diff(grads) < 0)

    def test_single_point_norms(self):
        grid = Grid(3, 32, np.pi / 2.0)
        rng = np.random.default_rng(9)
        u = random_smooth_field(grid, rng, spectral_decay=2.5)
        c, gc = commutator_norms(u, 8.0, 0.7)
        assert c > 0 and gc > 0
        c1, gc1 = commutator_norms(u, 8.0, 1.0)
        assert c1 == 0.0 and gc1 == 0.0


class TestNormEquivalence:
    def test_measured_constants_within_caps(self):
        grid = Grid(2, 128, 8.0)
        rng = np.random.default_rng(10)
        fields = [random_smooth_field(grid, rng, spectral_decay=rng.uniform(1.2, 4.0))
                  for _ in range(40)]
        for s in [0.6, 0.8]:
            for N in [2.0, 8.0]:
                rep = norm_equivalence_report(fields, N=N, s=s)
                assert rep["equivalence_lower"] < 3.0
                assert rep["equivalence_upper"] < 3.0
                assert rep["highfreq_bound"] < 5.0
                assert rep["lp_bound_p2"] <= 1.0 + 1e-12  # m <= 1 on L^2
                assert rep["lp_bound_p4"] < 2.0

    def test_identity_regularity_collapses_equivalence(self):
        grid = Grid(2, 64, 8.0)
        rng = np.random.default_rng(11)
        fields = [random_smooth_field(grid, rng) for _ in range(5)]
        rep = norm_equivalence_report(fields, N=4.0, s=1.0)
        # both sides of the two-sided bound become equalities
        assert rep["equivalence_lower"] == pytest.approx(1.0, abs=1e-10)
        assert rep["equivalence_upper"] == pytest.approx(1.0, abs=1e-10)


class TestWeinstein:
    def test_gap_at_ground_state_is_energy(self, q2):
        grid = Grid(2, 256, 16.0)
        u = synthesize_soliton(grid, q2)
        mq = ground_state_mass(2)
        # at ||u|| = ||Q|| the subtracted term vanishes, so gap = E(Q) ~ 0
        assert abs(weinstein_gap(u, mq)) < 1e-7

    def test_small_gaussian_positive_gap(self):
        grid = Grid(2, 128, 10.0)
        vals = np.exp(-grid.radius2()).astype(complex)
        u = ComplexField(grid, PHYSICAL, 0.5 * vals)
        assert weinstein_gap(u) > 0.0

    def test_500_random_fields_nonnegative(self):
        grid = Grid(2, 64, 10.0)
        rng = np.random.default_rng(12)
        mq = ground_state_mass(2)
        worst = np.inf
        for _ in range(500):
            u = random_smooth_field(
                grid, rng, spectral_decay=rng.uniform(1.5, 4.0),
                norm=rng.uniform(0.05, 0.999) * math.sqrt(mq),
            )
            worst = min(worst, weinstein_gap(u, mq))
        assert worst >= -1e-8


class TestReference:
    def test_reference_exponent_table(self):
        assert reference_exponent(2, 0.7) == pytest.approx(-0.7)
        assert reference_exponent(3, 0.7) == pytest.approx(-0.7)
        assert reference_exponent(5, 1.0) == pytest.approx(-0.8)
