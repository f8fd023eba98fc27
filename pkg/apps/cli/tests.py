import json
import math
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from apps.families.domain import CoefficientFamily, Variant
from apps.families.services import enumerate_below
from apps.testing.domain import Sample
from apps.testing.services import make_test_spec, rate_weights, run_test
from .io import read_index_set, read_sample_columns, read_weights

SOBOLEV_1D = ('--family', 'sobolev-sum', '--d', '1', '--sigma', '1')


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self):
        self.directory.cleanup()

    def gof(self, *args):
        stdout, stderr = StringIO(), StringIO()
        call_command('gof', *[str(a) for a in args], stdout=stdout, stderr=stderr)
        return stdout.getvalue()

    def assertExitCode(self, code, *args):
        with self.assertRaises(CommandError) as raised:
            self.gof(*args)
        self.assertEqual(raised.exception.returncode, code)
        return raised.exception

    def write(self, name, text):
        path = self.root / name
        path.write_text(text, encoding='utf-8')
        return path

    def values(self, output):
        return dict(line.split('=', 1) for line in output.splitlines() if '=' in line)


class EnumerateCommandTest(CommandTestCase):

    def test_summary_and_file(self):
        out = self.root / 'members.csv'
        output = self.gof('enumerate', *SOBOLEV_1D, '--cutoff', 10, '--out', out)
        self.assertIn('N(C)=2', output)
        lines = out.read_text().splitlines()
        self.assertEqual(lines[0], '# schema_version=1')
        self.assertEqual(lines[1], 'index,coefficient')
        self.assertEqual(len(lines), 4)
        self.assertEqual({line.split(',')[0] for line in lines[2:]}, {'1', '-1'})

    def test_empty_set(self):
        out = self.root / 'members.csv'
        output = self.gof('enumerate', '--family', 'tensor-sobolev', '--d', 2, '--sigma', 1,
                          '--cutoff', 0.5, '--out', out)
        self.assertIn('N(C)=0', output)

    def test_json_format(self):
        out = self.root / 'members.json'
        self.gof('enumerate', *SOBOLEV_1D, '--cutoff', 20, '--out', out, '--format', 'json')
        data = json.loads(out.read_text())
        self.assertEqual(data['schema_version'], 1)
        self.assertEqual(data['N'], 6)
        self.assertEqual(data['family']['variant'], 'sobolev-sum')

    def test_missing_sigma(self):
        out = self.root / 'members.csv'
        self.assertExitCode(2, 'enumerate', '--family', 'sobolev-sum', '--d', 1, '--cutoff', 10, '--out', out)
        self.assertFalse(out.exists())

    @override_settings(MINIMAXGOF_MAX_INDICES=5)
    def test_cap_exceeded(self):
        out = self.root / 'members.csv'
        error = self.assertExitCode(3, 'enumerate', *SOBOLEV_1D, '--cutoff', 1000, '--out', out)
        self.assertIn('cap', str(error))
        self.assertFalse(out.exists())
        self.assertEqual(list(self.root.iterdir()), [])


class RatesCommandTest(CommandTestCase):

    def test_sobolev_slope(self):
        out = self.root / 'rates.json'
        self.gof('rates', '--family', 'sobolev-sum', '--d', 1, '--sigma', 2,
                 '--n-grid', '1e6,1e8,1e10,1e12', '--out', out, '--format', 'json')
        data = json.loads(out.read_text())
        self.assertEqual(len(data['rows']), 4)
        self.assertAlmostEqual(data['slope'], -4 / 9, delta=0.02)
        for row in data['rows']:
            self.assertAlmostEqual(row['r_n'] * row['C_n'], 1.0, places=12)

    def test_single_sample_size(self):
        out = self.root / 'rates.csv'
        output = self.gof('rates', *SOBOLEV_1D, '--n-grid', 1000, '--out', out)
        self.assertIn('slope=n/a', output)
        self.assertEqual(len(out.read_text().splitlines()), 3)

    def test_duplicate_sample_sizes(self):
        self.assertExitCode(2, 'rates', *SOBOLEV_1D, '--n-grid', '1000,1000')


class ExtremalCommandTest(CommandTestCase):

    def solve(self, *extra):
        out = self.root / 'solution.json'
        self.gof('extremal', *SOBOLEV_1D, '--n', 1000, '--r', 0.05, '--out', out, *extra)
        return json.loads(out.read_text())

    def test_residuals_and_weights(self):
        data = self.solve()
        for name, value in data['residuals'].items():
            with self.subTest(residual=name):
                self.assertLess(abs(value), 1e-8)
        weights = [item['w'] for item in data['weights']]
        self.assertEqual(len(weights), data['N'])
        self.assertAlmostEqual(0.5 * math.fsum(w * w for w in weights), 1.0, places=10)

    def test_rescaling(self):
        unit = self.solve()
        doubled = self.solve('--b', 2, '--B', 2)
        self.assertAlmostEqual(doubled['u_sq'] / unit['u_sq'], 16.0, delta=1e-4)

    def test_infeasible(self):
        out = self.root / 'solution.json'
        error = self.assertExitCode(4, 'extremal', *SOBOLEV_1D, '--n', 1000, '--r', 1, '--out', out)
        self.assertIn('smallest coefficient', str(error))
        self.assertFalse(out.exists())


class TestCommandTest(CommandTestCase):

    def setUp(self):
        super().setUp()
        self.data = self.write('data.csv', 't_1,x\n0.1,1\n0.9,1\n')
        self.weights = self.write('weights.csv', f"index,weight\n0,{math.sqrt(2)!r}\n")

    def test_constant_kernel(self):
        values = self.values(self.gof('test', '--data', self.data, '--weights', self.weights))
        self.assertAlmostEqual(float(values['U_n']), 0.70711, places=5)
        self.assertAlmostEqual(float(values['H']), 1.64485, places=5)
        self.assertEqual(values['decision'], 'accept')

    def test_known_variance_scales_the_statistic(self):
        unit = self.values(self.gof('test', '--data', self.data, '--weights', self.weights))
        half = self.values(self.gof('test', '--data', self.data, '--weights', self.weights, '--tau2', 0.5))
        self.assertAlmostEqual(float(half['U_n']), 2 * float(unit['U_n']), places=8)

    def test_empty_data(self):
        empty = self.write('empty.csv', '')
        self.assertExitCode(2, 'test', '--data', empty, '--weights', self.weights)
        header_only = self.write('header.csv', 't_1,x\n')
        self.assertExitCode(2, 'test', '--data', header_only, '--weights', self.weights)

    def test_schema_mismatch(self):
        wide = self.write('wide.csv', 't_1,t_2,x\n0.1,0.2,1\n0.3,0.4,2\n')
        self.assertExitCode(2, 'test', '--data', wide, '--weights', self.weights, '--d', 1)
        renamed = self.write('renamed.csv', 'time,x\n0.1,1\n')
        self.assertExitCode(2, 'test', '--data', renamed, '--weights', self.weights)
        outside = self.write('outside.csv', 't_1,x\n1.5,1\n')
        self.assertExitCode(2, 'test', '--data', outside, '--weights', self.weights)

    def test_needs_one_weight_source(self):
        self.assertExitCode(2, 'test', '--data', self.data)
        self.assertExitCode(2, 'test', '--data', self.data, '--weights', self.weights, *SOBOLEV_1D, '--cutoff', 20)

    def test_enumerate_output_round_trip(self):
        rows = '\n'.join(f"{t},{x}" for t, x in zip((0.05, 0.2, 0.33, 0.5, 0.61, 0.77, 0.9), (1, -2, 0.5, 3, -1, 0.25, 2)))
        data = self.write('sample.csv', 't_1,x\n' + rows + '\n')
        members_path = self.root / 'members.csv'
        self.gof('enumerate', *SOBOLEV_1D, '--cutoff', 40, '--out', members_path)
        out = self.root / 'outcome.json'
        self.gof('test', '--data', data, '--index-set', members_path, '--out', out)

        family = CoefficientFamily(Variant.SOBOLEV_SUM, d=1, sigma=1)
        points, responses = read_sample_columns(data)
        spec = make_test_spec(rate_weights(enumerate_below(family, 40)), alpha=0.05)
        expected = run_test(Sample(points, responses), spec)
        reported = json.loads(out.read_text())['outcome']
        self.assertEqual(reported['statistic'], expected.statistic)
        self.assertEqual(reported['reject'], expected.reject)

        indices, coefficients = read_index_set(members_path)
        self.assertEqual(indices.shape, (12, 1))
        self.assertEqual(list(coefficients), list(enumerate_below(family, 40).coefficients))

    def test_sharp_weights_report_predicted_power(self):
        values = self.values(self.gof('test', '--data', self.data, *SOBOLEV_1D, '--r', 0.1, '--alpha', 0.05))
        self.assertIn('predicted_beta', values)
        self.assertIn(values['decision'], ('accept', 'reject'))

    def test_design_transform(self):
        raw = self.write('raw.csv', 't_1,x\n0.6931471805599453,1\n3.0,1\n')
        design = self.write('design.json', json.dumps({'kind': 'product-cdf', 'cdfs': [{'distribution': 'expon'}]}))
        values = self.values(self.gof('test', '--data', raw, '--weights', self.weights, '--design', design))
        self.assertAlmostEqual(float(values['U_n']), 0.70711, places=5)
        self.assertEqual(read_weights(self.weights).size, 1)


class SimulateCommandTest(CommandTestCase):

    def test_worker_count_does_not_change_the_rows(self):
        out = self.root / 'sweep.csv'
        common = ('simulate', *SOBOLEV_1D, '--n', 200, '--r', 0.05, '--reps', 40, '--seed', 123, '--out', out)
        self.gof(*common, '--workers', 1)
        self.gof(*common, '--workers', 2)
        lines = out.read_text().splitlines()
        self.assertEqual(lines[0], '# schema_version=1')
        self.assertEqual(lines[1].split(','), [
            'family', 'd', 'sigma', 's', 'kappa', 'm', 'n', 'r_n', 'N', 'C', 'u_n', 'H', 'mode',
            'reps', 'rejections', 'rate', 'ci_lo', 'ci_hi', 'predicted', 'seed',
        ])
        self.assertEqual(len(lines), 4)
        self.assertEqual(lines[2], lines[3])

    def test_boundary_prediction(self):
        out = self.root / 'report.json'
        self.gof('simulate', *SOBOLEV_1D, '--n', 500, '--target-u', 2, '--source', 'deterministic',
                 '--alpha', 0.05, '--reps', 20, '--seed', 5, '--out', out, '--format', 'json')
        data = json.loads(out.read_text())
        self.assertAlmostEqual(data['report']['u_n'], 2.0, places=6)
        self.assertAlmostEqual(data['report']['predicted'], 0.63873, places=4)
        self.assertAlmostEqual(data['predicted_beta'], 1 - 0.63873, places=4)
        self.assertAlmostEqual(data['gamma_half_boundary'], 0.31731, places=5)
        self.assertEqual(data['report']['replications'], 20)

    def test_rate_test_with_prior(self):
        output = self.gof('simulate', *SOBOLEV_1D, '--n', 300, '--r', 0.05, '--source', 'prior',
                          '--test', 'rate', '--reps', 10, '--out', self.root / 'prior.csv')
        self.assertIn('rate=', output)
        row = (self.root / 'prior.csv').read_text().splitlines()[2].split(',')
        self.assertEqual(row[12], 'prior')

    def test_failed_replication(self):
        out = self.root / 'sweep.csv'
        self.assertExitCode(5, 'simulate', *SOBOLEV_1D, '--n', 50, '--r', 0.05, '--variance', 'plugin',
                            '--tau', 0, '--reps', 3, '--out', out)
        self.assertFalse(out.exists())

    def test_invalid_seed(self):
        self.assertExitCode(2, 'simulate', *SOBOLEV_1D, '--n', 50, '--r', 0.05, '--seed', -4)
