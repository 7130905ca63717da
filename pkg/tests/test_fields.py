import math
import unittest

import numpy as np

from slitwave.analysis.fields import (ScalarFieldGrid, analyze_quasi_bubble, default_step, density_grid,
                                      drho_dz_at, drho_dz_grid, enclosed_probability, slice_density)
from slitwave.analysis.nullmap import Region
from slitwave.core.geometry import SlitArray
from slitwave.core.kernels import FresnelEvaluator
from slitwave.core.scheduler import ScanRunner

WIDE_PAIR = SlitArray(edges=(-20.01, -19.99, 19.99, 20.01))
SERIAL = ScanRunner(threads=1)


class TestGrids(unittest.TestCase):
    def test_density_grid_layout(self):
        region = Region(x2_min=-5.0, x2_max=5.0, zpp_min=1.0, zpp_max=3.0)
        grid = density_grid(SlitArray.single(1.0), region, 11, 4, FresnelEvaluator(), runner=SERIAL)
        self.assertEqual(grid.values.shape, (4, 11))
        self.assertEqual(grid.kind, "Density")
        x2, zpp = grid.axes
        self.assertEqual(x2[5], 0.0)
        self.assertEqual(zpp[-1], 3.0)
        expected = float(FresnelEvaluator().density(SlitArray.single(1.0), x2[3], zpp[2]))
        self.assertAlmostEqual(grid.values[2, 3], expected, delta=1e-12 * expected)

    def test_grid_validation(self):
        region = Region(x2_min=-1.0, x2_max=1.0, zpp_min=1.0, zpp_max=2.0)
        with self.assertRaises(ValueError):
            ScalarFieldGrid(region=region, nx=3, nz=2, values=np.zeros((3, 2)), kind="Density")
        with self.assertRaises(ValueError):
            ScalarFieldGrid(region=region, nx=2, nz=2, values=-np.ones((2, 2)), kind="Density")
        signed = ScalarFieldGrid(region=region, nx=2, nz=2, values=-np.ones((2, 2)), kind="DensityTimeDerivative")
        self.assertEqual(signed.values.min(), -1.0)

    def test_time_derivative_of_single_slit_axis(self):
        # far from a narrow slit rho(0, z) ~ 2 w^2 / z, so d(rho)/dz ~ -2 w^2 / z^2
        slit = SlitArray.single(0.1)
        evaluator = FresnelEvaluator()
        for zpp in (10.0, 40.0):
            self.assertAlmostEqual(drho_dz_at(slit, 0.0, zpp, evaluator) / (-2 * 0.01 / zpp ** 2), 1.0, delta=0.01)

    def test_time_derivative_grid(self):
        slit = SlitArray.single(0.1)
        region = Region(x2_min=-2.0, x2_max=2.0, zpp_min=10.0, zpp_max=20.0)
        grid = drho_dz_grid(slit, region, 5, 3, h=0.01, evaluator=FresnelEvaluator(), runner=SERIAL)
        self.assertEqual(grid.kind, "DensityTimeDerivative")
        self.assertTrue(np.all(grid.values < 0))
        point = drho_dz_at(slit, 0.0, 15.0, FresnelEvaluator(), h=0.01)
        self.assertAlmostEqual(grid.values[1, 2], point, delta=1e-12 * abs(point))
        with self.assertRaises(ValueError):
            drho_dz_grid(slit, region, 5, 3, h=6.0)

    def test_default_step_close_to_the_slits(self):
        slit = SlitArray.single(1.0)
        region = Region(x2_min=-1.0, x2_max=1.0, zpp_min=5e-5, zpp_max=1e-3)
        grid = drho_dz_grid(slit, region, 3, 3, evaluator=FresnelEvaluator(), runner=SERIAL)
        self.assertTrue(np.all(np.isfinite(grid.values)))
        self.assertTrue(np.all(default_step(np.array([5e-5, 1e-3, 1.0])) < np.array([5e-5, 1e-3, 1.0]) / 2))
        self.assertAlmostEqual(float(default_step(10.0)), 1e-2, delta=1e-15)
        self.assertTrue(math.isfinite(drho_dz_at(slit, 0.3, 5e-5, FresnelEvaluator())))

    def test_central_difference_is_second_order(self):
        slit = SlitArray.single(0.1)
        region = Region(x2_min=-1.0, x2_max=1.0, zpp_min=10.0, zpp_max=12.0)
        d = [drho_dz_grid(slit, region, 3, 2, h=h, evaluator=FresnelEvaluator(), runner=SERIAL).values[0, 1]
             for h in (1.0, 0.5, 0.25)]
        self.assertAlmostEqual((d[0] - d[1]) / (d[1] - d[2]), 4.0, delta=0.2)

    def test_density_grid_is_mirror_symmetric(self):
        region = Region(x2_min=-4.0, x2_max=4.0, zpp_min=1.0, zpp_max=5.0)
        grid = density_grid(SlitArray.equal_pitch(3, 0.5, 2.0), region, 81, 9, FresnelEvaluator(), runner=SERIAL)
        np.testing.assert_allclose(grid.values, grid.values[:, ::-1], atol=1e-12 * grid.values.max(), rtol=0)


class TestSlices(unittest.TestCase):
    def test_fixed_z_and_fixed_x(self):
        slits = SlitArray.single(2.0)
        across = slice_density(slits, "FixedZ", 30.0, (-30.0, 30.0), 61, FresnelEvaluator(), runner=SERIAL)
        self.assertEqual(len(across), 61)
        self.assertEqual(across[30][0], 0.0)
        along = slice_density(slits, "FixedX", 0.0, (1.0, 100.0), 3, FresnelEvaluator(), log_spacing=True,
                              runner=SERIAL)
        np.testing.assert_allclose([c for c, _ in along], [1.0, 10.0, 100.0])

    def test_single_slit_central_maximum(self):
        # width 2: global maximum on axis with side maxima inside +-30 for z'' in [20, 40]
        slits = SlitArray.single(2.0)
        for zpp in (20.0, 30.0, 40.0):
            profile = np.array([r for _, r in slice_density(slits, "FixedZ", zpp, (-30.0, 30.0), 601,
                                                              FresnelEvaluator(), runner=SERIAL)])
            self.assertEqual(int(np.argmax(profile)), 300)
            interior = profile[1:-1]
            local_max = (interior > profile[:-2]) & (interior > profile[2:])
            self.assertGreaterEqual(int(np.count_nonzero(local_max)) - 1, 2)

    def test_single_slit_maximum_on_every_row(self):
        # side maxima of a width-2 slit sit near 0.715 z'', so +-100 holds one pair up to z'' = 100
        region = Region(x2_min=-100.0, x2_max=100.0, zpp_min=1.0, zpp_max=100.0)
        grid = density_grid(SlitArray.single(2.0), region, 801, 200, FresnelEvaluator(), runner=SERIAL)
        _, zpp = grid.axes
        for row, z in zip(grid.values, zpp):
            self.assertLessEqual(abs(int(np.argmax(row)) - 400), 1, msg=f"z''={z}")
            if z >= 20.0:
                interior = row[1:-1]
                local_max = (interior > row[:-2]) & (interior > row[2:])
                self.assertGreaterEqual(int(np.count_nonzero(local_max)) - 1, 2, msg=f"z''={z}")

    def test_bad_slices(self):
        slits = SlitArray.single(1.0)
        with self.assertRaises(ValueError):
            slice_density(slits, "FixedZ", 0.0, (-1.0, 1.0), 10)
        with self.assertRaises(ValueError):
            slice_density(slits, "FixedX", 0.0, (0.0, 1.0), 10)
        with self.assertRaises(ValueError):
            slice_density(slits, "FixedZ", 1.0, (1.0, -1.0), 10)
        with self.assertRaises(ValueError):
            slice_density(slits, "Diagonal", 1.0, (-1.0, 1.0), 10)


class TestEnclosedProbability(unittest.TestCase):
    def test_nearly_all_probability_near_a_wide_slit(self):
        # the free propagator is unitary: the Fresnel-normalised total is 2 * width
        total = enclosed_probability(SlitArray.single(2.0), 1.0, -10.0, 10.0, evaluator=FresnelEvaluator())
        self.assertAlmostEqual(total, 4.0, delta=0.1)
        self.assertLess(total, 4.0)

    def test_refinement_is_stable(self):
        slits = SlitArray.single(2.0)
        coarse = enclosed_probability(slits, 5.0, -3.0, 3.0, n=16)
        fine = enclosed_probability(slits, 5.0, -3.0, 3.0, n=512)
        self.assertAlmostEqual(coarse / fine, 1.0, delta=1e-7)

    def test_edge_cases(self):
        slits = SlitArray.single(1.0)
        self.assertEqual(enclosed_probability(slits, 1.0, 0.5, 0.5), 0.0)
        with self.assertRaises(ValueError):
            enclosed_probability(slits, 1.0, 1.0, -1.0)
        with self.assertRaises(ValueError):
            enclosed_probability(slits, 1.0, -1.0, 1.0, n=8)


class TestQuasiBubble(unittest.TestCase):
    def test_central_fringe_leaks_probability(self):
        # central fringe between the first dark fringes x2 = +-z''/80
        report = analyze_quasi_bubble(WIDE_PAIR, bottom=(-1 / 80, 1 / 80, 1.0), top=(-2 / 80, 2 / 80, 2.0),
                                      evaluator=FresnelEvaluator(), runner=SERIAL)
        for station in (report.bottom, report.top):
            self.assertGreater(station.left.rho_min, 0.0)
            self.assertGreaterEqual(station.boundary_ratio, 1e-8)
            self.assertLessEqual(station.boundary_ratio, 1e-4)
            self.assertLessEqual(station.drho_ratio, 1e-3)
            self.assertAlmostEqual(station.left.x2, -station.right.x2, delta=1e-6)
        self.assertGreater(report.relative_change, 0.01)
        # enclosed probability follows sinc^2(20 pi w / z''): 0.573 at the bottom, 0.875 at the top
        self.assertAlmostEqual(report.top.enclosed / report.bottom.enclosed, 0.875 / 0.573, delta=0.05)
        self.assertTrue(report.is_quasi)

    def test_mid_slit_bubble_leaks_probability(self):
        # bubble on the central slice between the quasi-nulls at z'' = 0.2 and 0.4
        stations = (0.22, 0.38)
        report = analyze_quasi_bubble(WIDE_PAIR, bottom=(-stations[0] / 80, stations[0] / 80, stations[0]),
                                      top=(-stations[1] / 80, stations[1] / 80, stations[1]),
                                      evaluator=FresnelEvaluator(), runner=SERIAL)
        for station in (report.bottom, report.top):
            self.assertGreater(min(station.left.rho_min, station.right.rho_min), 0.0)
            self.assertGreaterEqual(station.boundary_ratio, 1e-8)
            self.assertLessEqual(station.boundary_ratio, 1e-4)
            self.assertLessEqual(station.drho_ratio, 1e-3)
            self.assertAlmostEqual(station.left.x2, -station.right.x2, delta=1e-6)
        self.assertGreater(report.relative_change, 0.01)
        self.assertTrue(report.is_quasi)


if __name__ == '__main__':
    unittest.main()
