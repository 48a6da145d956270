import numpy as np
from django.test import SimpleTestCase, override_settings

from .checks import CheckReport
from .conf import DEFAULTS, growthlab_setting
from .exceptions import ConfigError, GrowthLabError, InvalidParameter
from .numerics import bisect_monotone, cumulative_integral, uniform_nodes


class NumericsTests(SimpleTestCase):

    def test_bisection_finds_each_root(self):
        targets = np.array([0.25, 2.0, 9.0])
        roots = bisect_monotone(lambda x: np.sign(x ** 2 - targets).astype(int), np.zeros(3), np.full(3, 10.0))
        np.testing.assert_allclose(roots, np.sqrt(targets), atol=1e-12)

    def test_end_correction_is_exact_for_cubics(self):
        x = np.linspace(0.0, 2.0, 9)
        plain = cumulative_integral(x, 3 * x ** 2)
        corrected = cumulative_integral(x, 3 * x ** 2, slopes=6 * x)
        self.assertGreater(abs(plain[-1] - 8.0), 1e-3)
        np.testing.assert_allclose(corrected, x ** 3, atol=1e-12)

    def test_uniform_nodes_default_count(self):
        self.assertEqual(uniform_nodes(0.0, 1.0).size, growthlab_setting('TABULATION_POINTS'))
        self.assertEqual(uniform_nodes(0.0, 1.0, 5)[-1], 1.0)


class SettingsTests(SimpleTestCase):

    @override_settings(GROWTHLAB={'MIN_DT': 1e-9})
    def test_configured_value_wins(self):
        self.assertEqual(growthlab_setting('MIN_DT'), 1e-9)
        self.assertEqual(growthlab_setting('MAX_STEPS'), DEFAULTS['MAX_STEPS'])


class CheckReportTests(SimpleTestCase):

    def test_failures_and_advisory(self):
        report = CheckReport('demo')
        report.add('small', True, 0.1, 1.0)
        report.add('large', False, 2.0, 1.0, detail='over')
        self.assertFalse(report.passed)
        self.assertEqual([c.name for c in report.failures], ['large'])
        self.assertEqual(report.get('small').margin, 0.9)
        self.assertIn('[BAD] large', report.summary())
        report.advisory = True
        self.assertTrue(report.passed)

    def test_rows(self):
        report = CheckReport('demo')
        report.add('unbounded', True, 1.0)
        self.assertEqual(report.to_rows(), [{'check': 'unbounded', 'passed': True, 'value': 1.0, 'bound': '',
                                             'detail': ''}])


class ExceptionTests(SimpleTestCase):

    def test_hierarchy(self):
        self.assertTrue(issubclass(InvalidParameter, ValueError))
        error = ConfigError(['grid.cells: too small', 'horizon: required'])
        self.assertIsInstance(error, GrowthLabError)
        self.assertEqual(str(error), 'grid.cells: too small; horizon: required')
