"""
Batch front end: family exploration, rate tables, extremal solves, tests on
ingested data and Monte Carlo sweeps

    python manage.py gof enumerate --family sobolev-sum --d 1 --sigma 1 --cutoff 10
    python manage.py gof simulate --family sobolev-sum --d 1 --sigma 2 --n 2000 --r 0.01 --source null
"""

import json
import logging
import math
from dataclasses import replace

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from apps.basis.domain import BasisKind
from apps.cli.config import RunConfig
from apps.cli.io import (
    append_csv_rows,
    atomic_write,
    format_index,
    read_index_set,
    read_sample_columns,
    read_weights,
    render_csv,
    render_json,
)
from apps.core.exceptions import DomainError, MinimaxGofError
from apps.extremal.domain import ExtremalProblem
from apps.extremal.serializers import ExtremalSolutionSerializer
from apps.extremal.services import (
    balance_constant,
    calibrate_radius,
    rate_index_set,
    solve_extremal,
    test_weights,
)
from apps.families.serializers import dump_family
from apps.families.services import asymptotic_count, embedding_condition_holds, enumerate_below
from apps.sim.domain import AlternativeSource, DesignModel, SignRule
from apps.sim.serializers import REPORT_COLUMNS, MonteCarloReportSerializer, load_design, report_row
from apps.sim.services import (
    check_index_growth,
    gaussian_prior,
    least_favorable,
    monte_carlo,
    predicted_errors,
    smirnov_transform,
    total_error_forms,
)
from apps.testing.domain import Criterion, Sample, VarianceMode
from apps.testing.serializers import TestOutcomeSerializer, TestSpecSerializer
from apps.testing.services import make_test_spec, rate_weights, run_test

logger = logging.getLogger(__name__)

FAMILIES = (
    'sobolev-sum', 'sobolev-euclid', 'tensor-sobolev', 'anova-exact',
    'anova-at-most', 'analytic-strip', 'sloan-wozniakowski',
)
SOURCES = ('null', 'deterministic', 'rademacher', 'prior')


def sample_size(value):
    """Integer sample size; accepts 1e4-style input"""
    number = float(value)
    if not number.is_integer():
        raise ValueError(value)
    return int(number)


def sample_size_grid(value):
    grid = [sample_size(part) for part in value.split(',') if part.strip()]
    if not grid:
        raise ValueError(value)
    return grid


class Command(BaseCommand):
    help = 'Minimax goodness-of-fit tools: enumerate | rates | extremal | test | simulate'

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='command', required=True)

        enumerate_parser = subparsers.add_parser('enumerate', help='List N(C) = {l : c_l < C}')
        self._add_common(enumerate_parser)
        enumerate_parser.add_argument('--cutoff', type=float, required=True)

        rates_parser = subparsers.add_parser('rates', help='Balance constants and separation rates')
        self._add_common(rates_parser)
        rates_parser.add_argument('--n-grid', type=sample_size_grid, required=True,
                                  help='Comma-separated sample sizes, e.g. 1e3,1e4,1e5')

        extremal_parser = subparsers.add_parser('extremal', help='Solve the water-filling problem')
        self._add_common(extremal_parser)
        extremal_parser.add_argument('--n', type=sample_size, required=True)
        extremal_parser.add_argument('--r', type=float, required=True)
        extremal_parser.add_argument('--b', type=float, default=1.0)
        extremal_parser.add_argument('--B', type=float, default=1.0)

        test_parser = subparsers.add_parser('test', help='Run a U-statistic test on a data file')
        self._add_common(test_parser)
        test_parser.add_argument('--data', required=True, help='CSV with header t_1,...,t_d,x')
        test_parser.add_argument('--weights', help='CSV with columns index,weight')
        test_parser.add_argument('--index-set', help='CSV written by gof enumerate (rate weights)')
        test_parser.add_argument('--cutoff', type=float, help='Rate weights over N(cutoff) of --family')
        test_parser.add_argument('--r', type=float, help='Sharp weights of --family at radius r')
        test_parser.add_argument('--u', type=float, help='Detection boundary for --criterion total')
        test_parser.add_argument('--design', help='JSON design model mapping raw t onto [0, 1]^d')
        self._add_test_flags(test_parser)
        test_parser.add_argument('--tau2', type=float, default=1.0)

        simulate_parser = subparsers.add_parser('simulate', help='Monte Carlo error rates')
        self._add_common(simulate_parser)
        simulate_parser.add_argument('--n', type=sample_size, required=True)
        radius = simulate_parser.add_mutually_exclusive_group(required=True)
        radius.add_argument('--r', type=float)
        radius.add_argument('--target-u', type=float, help='Calibrate r so that the solved u_n matches')
        simulate_parser.add_argument('--source', choices=SOURCES, default='null')
        simulate_parser.add_argument('--reps', type=int, default=1000)
        simulate_parser.add_argument('--test', choices=('sharp', 'rate'), default='sharp')
        simulate_parser.add_argument('--cutoff-scale', type=float, default=1.0)
        simulate_parser.add_argument('--delta', type=float, help='Prior (b, B) = (1 - delta, 1 + delta)')
        simulate_parser.add_argument('--tau', type=float, default=1.0, help='Noise standard deviation')
        simulate_parser.add_argument('--weak-a2', action='store_true',
                                     help='Check N against n^(2/3) instead of n')
        self._add_test_flags(simulate_parser)

    def _add_common(self, parser):
        parser.add_argument('--family', choices=FAMILIES)
        parser.add_argument('--d', type=int)
        parser.add_argument('--sigma', type=float)
        parser.add_argument('--s', type=float)
        parser.add_argument('--kappa', type=float)
        parser.add_argument('--m', type=int)
        parser.add_argument('--out')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--workers', type=int)
        parser.add_argument('--format', choices=('json', 'csv'))

    def _add_test_flags(self, parser):
        parser.add_argument('--alpha', type=float)
        parser.add_argument('--criterion', choices=Criterion.values, default=Criterion.NEYMAN_PEARSON.value)
        parser.add_argument('--basis', choices=BasisKind.values, default=BasisKind.FOURIER.value)
        parser.add_argument('--variance', choices=VarianceMode.values, default=VarianceMode.KNOWN.value)

    def handle(self, *args, **options):
        try:
            config = RunConfig.from_options(options)
            getattr(self, f"handle_{config.command}")(config)
        except MinimaxGofError as exc:
            logger.error(f"gof {options.get('command')} failed: {exc}")
            raise CommandError(str(exc), returncode=exc.exit_code)

    def emit(self, config, text):
        """Write the main artifact to --out, or to stdout without one"""
        if config.out is None:
            self.stdout.write(text, ending='')
        else:
            atomic_write(config.out, text)

    def summary(self, config, line):
        """Summary lines share stdout only when the artifact went to a file"""
        stream = self.stdout if config.out is not None else self.stderr
        stream.write(line)

    def handle_enumerate(self, config):
        family = config.require_family()
        cutoff = config.options['cutoff']
        if not embedding_condition_holds(family):
            logger.warning(f"{family.describe()} is outside the documented smoothness range")

        members = enumerate_below(family, cutoff)
        approximate = asymptotic_count(family, cutoff)
        ratio = members.size / approximate if approximate else None
        logger.info(f"Enumerated N({cutoff:g}) = {members.size} for {family.describe()}")

        if config.output_format == 'json':
            self.emit(config, render_json({
                'family': dump_family(family),
                'cutoff': cutoff,
                'N': members.size,
                'asymptotic': approximate,
                'ratio': ratio,
                'members': [
                    {'index': [int(e) for e in key], 'c': float(c)}
                    for key, c in zip(members.keys(), members.coefficients)
                ],
            }))
        else:
            rows = [
                {'index': format_index(row), 'coefficient': repr(float(c))}
                for row, c in zip(members.indices, members.coefficients)
            ]
            self.emit(config, render_csv(('index', 'coefficient'), rows))

        approximate_text = f"{approximate:.6g}" if approximate is not None else 'n/a'
        ratio_text = f"{ratio:.6g}" if ratio is not None else 'n/a'
        self.summary(config, f"N(C)={members.size}, asymptotic={approximate_text}, ratio={ratio_text}")

    def handle_rates(self, config):
        family = config.require_family()
        grid = config.options['n_grid']
        if len(set(grid)) != len(grid):
            raise DomainError("--n-grid values must be distinct")

        rows = []
        for n in grid:
            cutoff = balance_constant(family, n)
            count = enumerate_below(family, cutoff).size
            rows.append({'n': n, 'C_n': cutoff, 'N': count, 'r_n': 1.0 / cutoff})
            logger.info(f"n={n}: C_n={cutoff:.6g}, N={count}")

        slope = None
        if len(rows) > 1:
            log_n = np.log([row['n'] for row in rows])
            log_r = np.log([row['r_n'] for row in rows])
            slope = float(np.polyfit(log_n, log_r, 1)[0])

        if config.output_format == 'json':
            self.emit(config, render_json({'family': dump_family(family), 'rows': rows, 'slope': slope}))
        else:
            self.emit(config, render_csv(('n', 'C_n', 'N', 'r_n'), rows))
        self.summary(config, f"slope={slope:.6g}" if slope is not None else 'slope=n/a')

    def handle_extremal(self, config):
        family = config.require_family()
        options = config.options
        problem = ExtremalProblem(family, options['n'], options['r'], options['b'], options['B'])
        solution = solve_extremal(problem)
        data = ExtremalSolutionSerializer(solution).data

        if config.output_format == 'json':
            self.emit(config, render_json(dict(data)))
        else:
            rows = [dict(item, index=format_index(item['index'])) for item in data['weights']]
            self.emit(config, render_csv(('index', 'c', 'v_sq', 'w'), rows))

        cutoff = 'inf' if math.isinf(solution.cutoff) else f"{solution.cutoff:.10g}"
        self.summary(
            config,
            f"C={cutoff}, N={solution.index_set.size}, u^2={solution.u_squared:.10g}, u={solution.u:.10g}",
        )

    def _test_weights(self, config, n):
        """Kernel weights from exactly one of the test's weight sources; also returns the solved u_n"""
        options = config.options
        chosen = [name for name in ('weights', 'index_set', 'cutoff', 'r') if options.get(name) is not None]
        if len(chosen) != 1:
            raise DomainError("gof test needs exactly one of --weights, --index-set, --cutoff or --r")
        source = chosen[0]
        if source == 'weights':
            return read_weights(config.inputs['weights']), None
        if source == 'index_set':
            indices, _ = read_index_set(config.inputs['index_set'])
            return rate_weights(indices), None
        family = config.require_family()
        if source == 'cutoff':
            return rate_weights(enumerate_below(family, options['cutoff'])), None
        solution = solve_extremal(ExtremalProblem(family, n, options['r']))
        return test_weights(solution), solution.u

    def handle_test(self, config):
        options = config.options
        points, responses = read_sample_columns(config.inputs['data'], d=options.get('d'))
        if config.inputs.get('design') is not None:
            with open(config.inputs['design'], encoding='utf-8') as stream:
                try:
                    design = load_design(json.load(stream))
                except json.JSONDecodeError as exc:
                    raise DomainError(f"Invalid design file: {exc}")
            points = smirnov_transform(design, points)
        sample = Sample(points, responses)

        weights, solved_u = self._test_weights(config, sample.n)
        u = options.get('u') if options.get('u') is not None else solved_u
        alpha = options.get('alpha')
        criterion = Criterion(options['criterion'])
        spec = make_test_spec(
            weights,
            alpha=0.05 if alpha is None and criterion == Criterion.NEYMAN_PEARSON else alpha,
            criterion=criterion,
            u=u,
            basis=options['basis'],
            variance_mode=options['variance'],
            tau2=options['tau2'],
        )
        outcome = run_test(sample, spec)
        decision = 'reject' if outcome.reject else 'accept'

        predicted = None
        if alpha is not None and u is not None:
            predicted = predicted_errors(alpha, u)._asdict()

        if config.out is not None:
            if config.output_format == 'json':
                self.emit(config, render_json({
                    'outcome': dict(TestOutcomeSerializer(outcome).data),
                    'decision': decision,
                    'u_n': u,
                    'predicted': predicted,
                    'spec': dict(TestSpecSerializer(spec).data),
                }))
            else:
                row = dict(TestOutcomeSerializer(outcome).data, decision=decision)
                self.emit(config, render_csv(('statistic', 'threshold', 'reject', 'tau2', 'n', 'decision'), [row]))

        self.stdout.write(f"U_n={outcome.statistic:.10g}")
        self.stdout.write(f"H={outcome.threshold:.10g}")
        self.stdout.write(f"decision={decision}")
        if predicted is not None:
            self.stdout.write(f"predicted_beta={predicted['beta']:.6g} at u_n={u:.6g}")

    def _simulation_source(self, config, family, n, r):
        options = config.options
        kind = options['source']
        if kind == 'null':
            return AlternativeSource.null()
        if kind == 'prior':
            return gaussian_prior(family, n, r, delta=options.get('delta'))
        sign_rule = SignRule.RADEMACHER if kind == 'rademacher' else SignRule.POSITIVE
        return least_favorable(family, n, r, sign_rule=sign_rule)

    def handle_simulate(self, config):
        family = config.require_family()
        options = config.options
        n = options['n']
        tau = options['tau']
        if options['reps'] < 1:
            raise DomainError(f"--reps must be positive, got {options['reps']}")
        if options['variance'] == VarianceMode.KNOWN and not tau > 0:
            raise DomainError("Known-variance tests need --tau > 0")

        if options.get('target_u') is not None:
            r = calibrate_radius(family, n, options['target_u'])
        else:
            r = options['r']
        source = self._simulation_source(config, family, n, r)
        boundary = source.solution
        if boundary is None or boundary.problem.b != 1.0:
            boundary = solve_extremal(ExtremalProblem(family, n, r))

        if options['test'] == 'sharp':
            weights = test_weights(boundary)
        else:
            weights = rate_weights(rate_index_set(family, n, options['cutoff_scale']))
        alpha = options.get('alpha')
        criterion = Criterion(options['criterion'])
        spec = make_test_spec(
            weights,
            alpha=0.05 if alpha is None and criterion == Criterion.NEYMAN_PEARSON else alpha,
            criterion=criterion,
            u=boundary.u,
            basis=options['basis'],
            variance_mode=options['variance'],
            tau2=tau * tau,
        )
        check_index_growth(spec.size, n, weak_a2=options['weak_a2'])

        report = monte_carlo(
            spec, source, DesignModel.uniform(), n, tau, options['reps'], config.seed,
            workers=config.workers, family=family, radius=r,
        )
        if source.solution is None:
            report = replace(report, u_n=boundary.u, cutoff=boundary.cutoff)

        if config.output_format == 'json':
            forms = total_error_forms(boundary.u)
            self.emit(config, render_json({
                'report': dict(MonteCarloReportSerializer(report).data),
                'test': options['test'],
                'alpha': spec.alpha,
                'predicted_beta': predicted_errors(spec.alpha, boundary.u).beta if spec.alpha else None,
                'gamma_half_boundary': forms.half_boundary,
                'gamma_full_boundary': forms.full_boundary,
            }))
        elif config.out is not None:
            append_csv_rows(config.out, REPORT_COLUMNS, [report_row(report)])
        else:
            self.emit(config, render_csv(REPORT_COLUMNS, [report_row(report)]))

        lo, hi = report.wilson_ci
        self.summary(
            config,
            f"rate={report.empirical_rate:.5f} ({report.rejections}/{report.replications}), "
            f"95% CI=[{lo:.5f}, {hi:.5f}], predicted={report.predicted:.5f}, u_n={report.u_n:.6g}",
        )
