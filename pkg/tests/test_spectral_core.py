import numpy as np
import pytest

from nlslab import (
    PHYSICAL,
    ComplexField,
    Grid,
    MultiplierSpec,
    apply_galilean_boost,
    apply_smoothing,
    conserved_quantities,
    dilate_field,
    dyadic_ladder,
    forward_transform,
    fractional_derivative,
    gradient_deficit,
    gradient_norm,
    inverse_transform,
    littlewood_paley,
    load_field,
    modified_energy,
    modified_momentum,
    random_smooth_field,
    save_field,
    scale_field,
    smoothing_multiplier,
    sobolev_norm,
)
from nlslab.spectral_core import lp_bump


def plane_wave(grid, modes):
    phase = np.zeros(grid.shape())
    for ax, k in enumerate(modes):
        phase = phase + (np.pi / grid.L) * k * grid.coordinate(ax)
    return ComplexField(grid, PHYSICAL, np.exp(1j * phase))


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(0, 64, 10.0)
        with pytest.raises(ValueError):
            Grid(2, 48, 10.0)  # not a power of two
        with pytest.raises(ValueError):
            Grid(2, 4, 10.0)
        with pytest.raises(ValueError):
            Grid(2, 64, -1.0)

    def test_frequency_lattice_is_discrete_dual(self):
        g = Grid(1, 32, 5.0)
        assert np.allclose(g.xi, (np.pi / g.L) * g.modes)
        assert np.max(np.abs(g.xi)) == pytest.approx(np.pi * g.n / (2 * g.L))
        assert g.h == pytest.approx(2 * g.L / g.n)


class TestTransforms:
    def test_plancherel_100_random_fields(self):
        g = Grid(2, 64, 8.0)
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            f = random_smooth_field(g, rng, spectral_decay=rng.uniform(1.0, 4.0))
            F = forward_transform(f)
            worst = max(worst, abs(F.norm_l2() - f.norm_l2()) / f.norm_l2())
        assert worst < 1e-12

    def test_roundtrip_within_machine_bound(self):
        for d, n in [(1, 256), (2, 64), (3, 16)]:
            g = Grid(d, n, 6.0)
            rng = np.random.default_rng(d)
            f = random_smooth_field(g, rng)
            f2 = inverse_transform(forward_transform(f))
            rel = np.max(np.abs(f2.values - f.values)) / np.max(np.abs(f.values))
            assert rel < 10 * np.finfo(float).eps * n ** (d / 2.0)

    def test_delta_gives_flat_spectrum(self):
        g = Grid(2, 32, 4.0)
        v = np.zeros(g.shape(), complex)
        v[g.n // 2, g.n // 2] = 1.0  # x = 0
        F = forward_transform(ComplexField(g, PHYSICAL, v))
        mags = np.abs(F.values)
        assert np.ptp(mags) < 1e-15
        # with the origin-anchored phase convention the spectrum is real constant
        assert np.max(np.abs(F.values.imag)) < 1e-15

    def test_plane_wave_single_coefficient(self):
        g = Grid(2, 32, 4.0)
        F = forward_transform(plane_wave(g, (3, -5)))
        mags = np.abs(F.values)
        peak = np.unravel_index(np.argmax(mags), mags.shape)
        assert g.modes[peak[0]] == 3 and g.modes[peak[1]] == -5
        assert np.sort(mags.ravel())[-2] < 1e-12 * mags.max()

    def test_representation_contract(self):
        g = Grid(1, 32, 4.0)
        f = plane_wave(g, (1,))
        with pytest.raises(ValueError):
            inverse_transform(f)
        with pytest.raises(ValueError):
            forward_transform(forward_transform(f))


class TestMultiplier:
    def test_branch_values(self):
        spec = MultiplierSpec(cutoff=4.0, regularity=0.5)
        assert smoothing_multiplier(2.0, spec) == 1.0  # |xi| = N/2
        assert smoothing_multiplier(16.0, spec) == pytest.approx(0.5)  # (4N/N)^(s-1)

    def test_identity_when_regularity_one(self):
        spec = MultiplierSpec(cutoff=4.0, regularity=1.0)
        xs = np.linspace(0.0, 100.0, 257)
        assert np.all(smoothing_multiplier(xs, spec) == 1.0)

    def test_monotone_continuous_range(self):
        for s in [0.3, 0.55, 0.9]:
            spec = MultiplierSpec(cutoff=2.0, regularity=s)
            xs = np.linspace(0.0, 50.0, 20001)
            m = smoothing_multiplier(xs, spec)
            assert np.all(np.diff(m) <= 1e-14)
            assert m.min() > 0.0 and m.max() <= 1.0
            # continuity across the two branch points
            assert abs(smoothing_multiplier(2.0 + 1e-9, spec) - 1.0) < 1e-8
            jump = abs(
                smoothing_multiplier(4.0 - 1e-9, spec)
                - smoothing_multiplier(4.0 + 1e-9, spec)
            )
            assert jump < 1e-8

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            MultiplierSpec(cutoff=-1.0, regularity=0.5)
        with pytest.raises(ValueError):
            MultiplierSpec(cutoff=1.0, regularity=1.5)


class TestApplySmoothing:
    def test_band_limited_fixed_point(self):
        g = Grid(2, 64, 8.0)
        rng = np.random.default_rng(3)
        f = littlewood_paley(random_smooth_field(g, rng), 1.0, "<=N")
        out = apply_smoothing(f, MultiplierSpec(cutoff=4.0, regularity=0.5))
        assert np.max(np.abs(out.values - f.values)) < 1e-14 * np.max(np.abs(f.values))

    def test_identity_at_regularity_one(self):
        g = Grid(2, 32, 8.0)
        f = random_smooth_field(g, np.random.default_rng(4))
        out = apply_smoothing(f, MultiplierSpec(cutoff=2.0, regularity=1.0))
        assert np.max(np.abs(out.values - f.values)) < 1e-14

    def test_linearity(self):
        g = Grid(1, 128, 8.0)
        rng = np.random.default_rng(5)
        f = random_smooth_field(g, rng)
        h = random_smooth_field(g, rng)
        spec = MultiplierSpec(cutoff=2.0, regularity=0.4)
        lhs = apply_smoothing(
            ComplexField(g, PHYSICAL, 2.0 * f.values + 1j * h.values), spec
        )
        rhs = 2.0 * apply_smoothing(f, spec).values + 1j * apply_smoothing(h, spec).values
        assert np.max(np.abs(lhs.values - rhs)) < 1e-13

    def test_scaling_commutation(self):
        # (I_N delta_lam f) = (delta_lam I_{N lam} f) for lam a power of two
        g = Grid(2, 64, 6.0)
        f = random_smooth_field(g, np.random.default_rng(6))
        N, s = 3.0, 0.6
        for lam in [0.5, 2.0, 4.0]:
            lhs = apply_smoothing(dilate_field(f, lam), MultiplierSpec(N, s))
            rhs = dilate_field(apply_smoothing(f, MultiplierSpec(N * lam, s)), lam)
            rel = np.linalg.norm(lhs.values - rhs.values) / np.linalg.norm(rhs.values)
            assert rel < 1e-10


class TestLittlewoodPaley:
    def test_partition_of_unity(self):
        g = Grid(2, 64, 8.0)
        f = random_smooth_field(g, np.random.default_rng(8))
        lo = littlewood_paley(f, 2.0, "<=N")
        hi = littlewood_paley(f, 2.0, ">N")
        assert np.max(np.abs(lo.values + hi.values - f.values)) < 1e-13

    def test_telescoping_reconstruction(self):
        g = Grid(1, 512, 8.0)
        f = random_smooth_field(g, np.random.default_rng(9))
        ladder = dyadic_ladder(g)
        acc = littlewood_paley(f, ladder[0], "<=N").values.copy()
        for N in ladder[1:]:
            acc += littlewood_paley(f, N, "=N").values
        # P_{<=N_top} = Id once the bump covers the whole lattice
        assert np.max(np.abs(acc - f.values)) < 1e-12

    def test_off_ladder_rejected(self):
        g = Grid(1, 64, 8.0)
        f = random_smooth_field(g, np.random.default_rng(10))
        with pytest.raises(ValueError):
            littlewood_paley(f, 3.0, "<=N")
        with pytest.raises(ValueError):
            littlewood_paley(f, 2.0 ** 40, "<=N")

    def test_single_mode_against_bump_oracle(self):
        g = Grid(1, 128, np.pi)  # xi lattice = Z
        f = plane_wave(g, (8,))  # |xi0| = 8 = N
        N = 8.0
        kept = littlewood_paley(f, N, "=N")
        # oracle: evaluate the bump symbols directly at |xi0|
        sym = lp_bump(8.0 / N) - lp_bump(16.0 / N)
        assert np.max(np.abs(kept.values - sym * f.values)) < 1e-12
        # distant blocks annihilate it
        far = littlewood_paley(f, 64.0, "=N")
        assert np.max(np.abs(far.values)) < 1e-13

    def test_bernstein_l2_to_linf(self):
        # ||P_{<=N} f||_inf <= C N^{d/2} ||P_{<=N} f||_2 ; C is measured
        g = Grid(2, 64, 8.0)
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(20):
            f = random_smooth_field(g, rng, spectral_decay=rng.uniform(1.0, 3.0))
            for N in [1.0, 2.0, 4.0]:
                p = littlewood_paley(f, N, "<=N")
                ratio = np.max(np.abs(p.values)) / (N ** (g.d / 2.0) * p.norm_l2())
                worst = max(worst, ratio)
        assert worst < 1.0  # sharp constant is (vol B_2 / (2 pi)^2)^(1/2) ~ 0.56


class TestDerivativesAndNorms:
    def test_plane_wave_homogeneous_eigenfunction(self):
        g = Grid(1, 128, np.pi)
        f = plane_wave(g, (5,))
        for sigma in [0.5, 1.0, 2.0]:
            nrm = sobolev_norm(f, sigma, kind="homogeneous")
            assert nrm == pytest.approx(5.0 ** sigma * f.norm_l2(), rel=1e-12)

    def test_inhomogeneous_sigma_zero_bracket(self):
        g = Grid(1, 128, 6.0)
        f = random_smooth_field(g, np.random.default_rng(12))
        f.values -= np.mean(f.values)  # mean-zero
        f = ComplexField(g, PHYSICAL, f.values)
        n0 = sobolev_norm(f, 0.0, kind="inhomogeneous")
        n1 = sobolev_norm(f, 1.0, kind="inhomogeneous")
        assert f.norm_l2() <= n0 * (1 + 1e-12) <= n1 * (1 + 1e-12)

    def test_homogeneous_kills_zero_mode(self):
        g = Grid(1, 64, 4.0)
        f = ComplexField(g, PHYSICAL, np.ones(g.shape(), complex))
        df = fractional_derivative(f, 1.0, kind="homogeneous")
        assert np.max(np.abs(df.values)) < 1e-14

    def test_sigma_validation(self):
        g = Grid(1, 64, 4.0)
        f = plane_wave(g, (1,))
        with pytest.raises(ValueError):
            fractional_derivative(f, -1.0)


class TestConserved:
    def test_zero_field(self):
        g = Grid(2, 32, 4.0)
        c = conserved_quantities(ComplexField(g, PHYSICAL, np.zeros(g.shape(), complex)))
        assert c.mass == 0.0 and c.energy == 0.0 and np.all(c.momentum == 0.0)

    def test_gaussian_mass_d2(self):
        # int exp(-|x|^2) dx = pi in d = 2
        g = Grid(2, 128, 10.0)
        v = np.exp(-g.radius2() / 2.0).astype(complex)
        c = conserved_quantities(ComplexField(g, PHYSICAL, v))
        assert abs(c.mass - np.pi) / np.pi < 1e-10

    def test_energy_scaling(self):
        g = Grid(2, 64, 8.0)
        f = random_smooth_field(g, np.random.default_rng(13))
        c = conserved_quantities(f)
        for lam in [0.5, 2.0]:
            cs = conserved_quantities(scale_field(f, lam))
            assert abs(cs.mass - c.mass) / c.mass < 1e-12
            assert abs(cs.energy - lam ** 2 * c.energy) / abs(c.energy) < 1e-8

    def test_galilean_boost_shifts_momentum(self):
        g = Grid(2, 64, 10.0)
        f = littlewood_paley(
            random_smooth_field(g, np.random.default_rng(14)), 2.0, "<=N"
        )
        beta = 2.0 * (np.pi / g.L) * np.array([3.0, -2.0])  # lattice boost
        c0 = conserved_quantities(f)
        c1 = conserved_quantities(apply_galilean_boost(f, beta))
        assert abs(c1.mass - c0.mass) / c0.mass < 1e-12
        err = np.abs(c1.momentum - c0.momentum - 0.5 * beta * c0.mass)
        assert np.all(err < 1e-8 * max(1.0, np.max(np.abs(c1.momentum))))


class TestModifiedFunctionals:
    def test_identity_regularity(self):
        g = Grid(2, 64, 8.0)
        f = random_smooth_field(g, np.random.default_rng(15))
        spec = MultiplierSpec(cutoff=2.0, regularity=1.0)
        c = conserved_quantities(f)
        assert modified_energy(f, spec) == pytest.approx(c.energy, rel=1e-12)
        assert np.allclose(modified_momentum(f, spec), c.momentum, rtol=1e-12)

    def test_band_limited_equals_plain(self):
        g = Grid(2, 64, 8.0)
        f = littlewood_paley(
            random_smooth_field(g, np.random.default_rng(16)), 1.0, "<=N"
        )
        spec = MultiplierSpec(cutoff=4.0, regularity=0.5)
        c = conserved_quantities(f)
        assert modified_energy(f, spec) == pytest.approx(c.energy, rel=1e-11)

    def test_modified_energy_monotone_in_cutoff(self):
        g = Grid(2, 128, 8.0)
        f = random_smooth_field(g, np.random.default_rng(17), spectral_decay=2.0)
        e_true = conserved_quantities(f).energy
        gaps = []
        for N in [16.0, 32.0, 64.0, 128.0]:
            gaps.append(abs(modified_energy(f, MultiplierSpec(N, 0.5)) - e_true))
        assert all(a >= b - 1e-15 for a, b in zip(gaps, gaps[1:]))

    def test_gradient_deficit(self):
        g = Grid(2, 64, 8.0)
        rng = np.random.default_rng(18)
        f = random_smooth_field(g, rng, spectral_decay=2.0)
        spec = MultiplierSpec(cutoff=2.0, regularity=0.5)
        # nonnegative in general, zero for band-limited data and at s = 1
        assert gradient_deficit(f, 0.7, spec) >= 0.0
        fb = littlewood_paley(f, 1.0, "<=N")
        assert gradient_deficit(fb, 0.7, spec) < 1e-13
        assert gradient_deficit(f, 0.7, MultiplierSpec(2.0, 1.0)) == 0.0

    def test_gradient_deficit_single_mode(self):
        # high-frequency bump: value within 10% of the single-mode prediction
        g = Grid(1, 512, np.pi)
        N = 8.0
        spec = MultiplierSpec(cutoff=N, regularity=0.5)
        x = g.coordinate(0)
        chi = np.exp(-(x ** 2) * 4.0)
        f = ComplexField(g, PHYSICAL, chi * np.exp(1j * 4 * N * x))
        m = float(np.real(
            np.exp((0.5 - 1.0) * np.log(4.0 * N / N))
        ))  # (|xi0|/N)^(s-1) at |xi0| = 4N
        lam = 0.3
        predicted = 0.5 * lam ** 2 * (1.0 - m ** 2) * gradient_norm(f) ** 2
        actual = gradient_deficit(f, lam, spec)
        assert abs(actual - predicted) / predicted < 0.10


class TestFieldIO:
    def test_roundtrip(self, tmp_path):
        g = Grid(2, 32, 5.0)
        f = random_smooth_field(g, np.random.default_rng(19))
        p = tmp_path / "snap.bin"
        save_field(f, p, time=1.25)
        f2, t = load_field(p)
        assert t == 1.25
        assert f2.grid == g and f2.representation == f.representation
        assert np.array_equal(f2.values, f.values)

    def test_sidecar_contents(self, tmp_path):
        import json

        g = Grid(1, 64, 2.5)
        f = random_smooth_field(g, np.random.default_rng(20))
        p = tmp_path / "snap.bin"
        save_field(f, p)
        meta = json.loads((tmp_path / "snap.bin.json").read_text())
        assert meta == {
            "d": 1,
            "n": 64,
            "L": 2.5,
            "representation": "physical",
            "time": 0.0,
        }
