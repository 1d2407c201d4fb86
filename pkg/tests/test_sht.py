import math

import numpy as np
import pytest

from rotosphere import sht
from conftest import random_real_field


class TestGrid:
    def test_two_node_grid_is_exact(self):
        # roots of the degree-2 Legendre polynomial with unit weights
        grid = sht.build_grid(sht.TruncationSpec(lmax=1, nlat=2, nlon=3))
        assert np.allclose(grid.nodes, [-1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-15)
        assert np.allclose(grid.weights, [1.0, 1.0], atol=1e-15)
        # exact integration of s^0..s^3
        for k, exact in [(0, 2.0), (1, 0.0), (2, 2 / 3), (3, 0.0)]:
            assert abs(grid.weights @ grid.nodes**k - exact) < 1e-14

    def test_weights_sum_to_two(self):
        for nlat in (2, 7, 16, 33):
            grid = sht.build_grid(sht.TruncationSpec(lmax=1, nlat=nlat, nlon=3))
            assert abs(grid.weights.sum() - 2.0) < 1e-14

    def test_quartic_moment(self):
        grid = sht.build_grid(sht.TruncationSpec(lmax=15, nlat=16, nlon=31))
        assert abs(grid.weights @ grid.nodes**4 - 2 / 5) < 1e-14

    def test_moments_match_analytic_up_to_exactness_degree(self):
        nlat = 6
        grid = sht.build_grid(sht.TruncationSpec(lmax=5, nlat=nlat, nlon=11))
        for k in range(2 * nlat):
            exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
            assert abs(grid.weights @ grid.nodes**k - exact) < 1e-14

    def test_nodes_increasing_and_symmetric(self):
        grid = sht.build_grid(sht.TruncationSpec(lmax=9, nlat=12, nlon=19))
        assert np.all(np.diff(grid.nodes) > 0)
        assert np.allclose(grid.nodes, -grid.nodes[::-1], atol=1e-15)

    @pytest.mark.parametrize("lmax,nlat,nlon", [(4, 4, 9), (4, 5, 8), (0, 2, 3)])
    def test_invalid_specs_rejected(self, lmax, nlat, nlon):
        with pytest.raises(sht.GridShapeError if lmax >= 1 else ValueError):
            sht.TruncationSpec(lmax=lmax, nlat=nlat, nlon=nlon)


class TestHarmonics:
    def test_degree_one_zonal_at_pole(self, transform31):
        grid = transform31.grid
        y = sht.harmonic(1, 0, grid)
        expected = 0.5 * math.sqrt(3 / math.pi) * grid.nodes
        assert np.max(np.abs(y.values[:, 0] - expected)) < 1e-14

    def test_degree_two_zonal_at_equator(self):
        # value -(1/4) sqrt(5/pi) where sin(lat) = 0
        grid = sht.build_grid(sht.TruncationSpec(lmax=4, nlat=8, nlon=9))
        y = sht.harmonic(2, 0, grid)
        expected = 0.25 * math.sqrt(5 / math.pi) * (3 * grid.nodes**2 - 1)
        assert np.max(np.abs(y.values[:, 0] - expected)) < 1e-14

    def test_degree_one_sectoral_value(self):
        grid = sht.build_grid(sht.TruncationSpec(lmax=4, nlat=8, nlon=9))
        y = sht.harmonic(1, 1, grid)
        cos_lat = np.sqrt(1 - grid.nodes**2)
        expected = -0.5 * math.sqrt(3 / (2 * math.pi)) * cos_lat[:, None] * np.exp(
            1j * grid.longitudes[None, :])
        assert np.max(np.abs(y.values - expected)) < 1e-14

    def test_order_beyond_degree_rejected(self, transform31):
        with pytest.raises(ValueError):
            sht.harmonic(2, 3, transform31.grid)

    def test_orthonormality_matrix(self):
        lmax = 7
        tr = sht.default_transform(lmax)
        grid = tr.grid
        pairs = [(l, m) for l in range(1, lmax + 1) for m in range(-l, l + 1)]
        worst = 0.0
        sampled = [sht.harmonic(l, m, grid).values for l, m in pairs]
        for i, a in enumerate(sampled):
            for j, b in enumerate(sampled):
                val = grid.integrate(a * np.conj(b))
                worst = max(worst, abs(val - (1.0 if i == j else 0.0)))
        assert worst < 1e-12

    def test_wallis_integrals(self):
        # latitude quadrature of cos^k via the (1-s^2) powers
        grid = sht.build_grid(sht.TruncationSpec(lmax=7, nlat=8, nlon=15))
        wallis = {3: 4 / 3, 5: 16 / 15, 7: 32 / 35, 9: 256 / 315, 11: 512 / 693}
        for k, exact in wallis.items():
            value = grid.weights @ (1 - grid.nodes**2) ** ((k - 1) / 2)
            assert abs(value - exact) < 1e-14


class TestTransforms:
    def test_basis_round_trip(self, transform31):
        f = sht.SpectralField.from_harmonic(31, 1, 0, 1.0)
        grid_field = transform31.synthesis(f)
        back = transform31.analysis(grid_field.values, real_valued=False)
        assert abs(back.get(1, 0) - 1.0) < 1e-13
        back.set(1, 0, 0.0)
        assert np.max(np.abs(back.coeffs)) < 1e-13

    def test_zero_field(self, transform31):
        zeros = np.zeros((transform31.spec.nlat, transform31.spec.nlon))
        out = transform31.analysis(zeros)
        assert np.max(np.abs(out.coeffs)) == 0.0

    def test_random_round_trip_lmax31(self, transform31):
        f = random_real_field(31, seed=11)
        back = transform31.analysis(transform31.synthesis(f))
        assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-12 * np.max(np.abs(f.coeffs))

    def test_round_trip_lmax63(self):
        tr = sht.default_transform(63)
        f = random_real_field(63, seed=5)
        back = tr.analysis(tr.synthesis(f))
        assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-12 * np.max(np.abs(f.coeffs))

    def test_analysis_of_real_field_obeys_reality(self, transform31):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(transform31.spec.nlat, transform31.spec.nlon))
        out = transform31.analysis(values)
        assert out.reality_defect() == 0.0

    def test_dimension_mismatch_rejected(self, transform31):
        with pytest.raises(sht.GridShapeError):
            transform31.analysis(np.zeros((3, 4)))
        f = random_real_field(8)
        with pytest.raises(sht.GridShapeError):
            transform31.synthesis(f)

    def test_point_evaluation_matches_synthesis(self, transform31):
        f = random_real_field(31, seed=9, decay=0.2)
        vals = transform31.synthesis(f).values
        grid = transform31.grid
        phi, s = np.meshgrid(grid.longitudes, grid.nodes)
        pointwise = sht.evaluate(f, phi, s)
        assert np.max(np.abs(pointwise - vals)) < 1e-11


class TestLaplacian:
    def test_eigenrelation_y21(self):
        f = sht.SpectralField.from_harmonic(8, 2, 1, 1.0)
        lap = sht.laplacian(f)
        assert lap.get(2, 1) == -6.0

    def test_eigenrelation_on_grid_all_degrees(self):
        lmax = 15
        tr = sht.default_transform(lmax)
        for l in (1, 2, 5, 15):
            for m in (0, 1, l):
                y = sht.harmonic(l, m, tr.grid)
                lap = sht.laplacian(tr.analysis(y.values, real_valued=False))
                back = tr.synthesis(lap).values
                assert np.max(np.abs(back + l * (l + 1) * y.values)) < 1e-12 * l * (l + 1)

    def test_sin_lat_field(self):
        # Laplacian of sin(lat) is -2 sin(lat)
        lmax = 8
        tr = sht.default_transform(lmax)
        s_field = tr.grid.nodes[:, None] * np.ones((1, tr.spec.nlon))
        lap = tr.synthesis(sht.laplacian(tr.analysis(s_field))).values
        assert np.max(np.abs(lap + 2 * s_field)) < 5e-13

    def test_inverse_pair(self):
        f = random_real_field(12, seed=2)
        assert np.max(np.abs(sht.invert_laplacian(sht.laplacian(f)).coeffs - f.coeffs)) < 1e-13

    def test_inversion_rejects_nonzero_mean(self):
        f = random_real_field(6, seed=4, zero_mean=False)
        f.coeffs[0, 6] = 1.0
        with pytest.raises(sht.MeanConstraintError):
            sht.invert_laplacian(f)


class TestRotation:
    def test_identity(self):
        f = random_real_field(10, seed=6)
        out = sht.rotate(f, sht.RotationSpec())
        assert np.max(np.abs(out.coeffs - f.coeffs)) < 1e-14

    def test_rotation_of_zonal_degree_one_stays_unit_norm(self):
        f = sht.SpectralField.from_harmonic(4, 1, 0, 1.0, real_valued=True)
        out = sht.rotate(f, sht.RotationSpec(beta=math.pi / 2))
        power = out.degree_power()
        assert abs(power[1] - 1.0) < 1e-13
        assert power[2:].sum() < 1e-26

    def test_matches_grid_resampling_oracle(self):
        lmax = 10
        tr = sht.default_transform(lmax)
        f = random_real_field(lmax, seed=7)
        rot = sht.RotationSpec(alpha=0.45, beta=1.3, gamma=-0.8)
        spectral = sht.rotate(f, rot)
        resampled = tr.analysis(np.real(sht.rotate_field_values(f, rot, tr.grid)))
        assert np.max(np.abs(spectral.coeffs - resampled.coeffs)) < 1e-12

    def test_parity_matches_oracle(self):
        lmax = 6
        tr = sht.default_transform(lmax)
        f = random_real_field(lmax, seed=8)
        rot = sht.RotationSpec(alpha=0.2, beta=0.9, gamma=0.1)
        spectral = sht.rotate(f, rot, parity=True)
        resampled = tr.analysis(np.real(sht.rotate_field_values(f, rot, tr.grid, parity=True)))
        assert np.max(np.abs(spectral.coeffs - resampled.coeffs)) < 1e-12

    @pytest.mark.parametrize("l", [1, 3, 10, 32, 63])
    def test_unitarity(self, l):
        block = sht.rotation_block(l, sht.RotationSpec(0.3, 0.7, -0.2))
        defect = np.max(np.abs(block @ block.conj().T - np.eye(2 * l + 1)))
        assert defect < 1e-12

    @pytest.mark.parametrize("l", [1, 2, 5, 10])
    def test_closed_form_matches_recurrence(self, l):
        rot = sht.RotationSpec(alpha=0.37, beta=1.11, gamma=2.2)
        a = sht.rotation_block(l, rot, closed_form=False)
        b = sht.rotation_block(l, rot, closed_form=True)
        assert np.max(np.abs(a - b)) < 1e-9

    def test_commutes_with_laplacian(self):
        f = random_real_field(20, seed=10)
        rot = sht.RotationSpec(0.5, 0.6, 0.7)
        a = sht.laplacian(sht.rotate(f, rot))
        b = sht.rotate(sht.laplacian(f), rot)
        scale = np.max(np.abs(b.coeffs))
        assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-12 * scale

    def test_per_degree_norm_preserved(self):
        f = random_real_field(16, seed=12)
        out = sht.rotate(f, sht.RotationSpec(1.0, 0.4, -1.5))
        assert np.max(np.abs(out.degree_power() - f.degree_power())) < 1e-12

    def test_composition_matches_matrix_product(self):
        rot1 = sht.RotationSpec(0.3, 0.8, -0.4)
        rot2 = sht.RotationSpec(-0.9, 0.5, 1.2)
        combined = sht.euler_from_matrix(rot2.matrix() @ rot1.matrix())
        f = random_real_field(8, seed=13)
        seq = sht.rotate(sht.rotate(f, rot1), rot2)
        direct = sht.rotate(f, combined)
        assert np.max(np.abs(seq.coeffs - direct.coeffs)) < 1e-12

    def test_euler_from_matrix_round_trip(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            rot = sht.RotationSpec(*rng.uniform(-math.pi, math.pi, size=3))
            rec = sht.euler_from_matrix(rot.matrix())
            assert np.max(np.abs(rec.matrix() - rot.matrix())) < 1e-12

    def test_nonfinite_angles_rejected(self):
        with pytest.raises(ValueError):
            sht.RotationSpec(alpha=math.nan)
