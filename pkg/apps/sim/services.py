"""
Services for the sim app
Design and response generation, least-favorable alternatives, predicted
error probabilities and seeded Monte Carlo runs
"""

import logging
import math
import time
from typing import NamedTuple

import numpy as np
from billiard import Pool
from django.conf import settings
from scipy.stats import norm

from apps.basis.domain import as_points
from apps.basis.services import evaluate
from apps.core.exceptions import DomainError, SimulationError
from apps.extremal.domain import ExtremalProblem
from apps.extremal.services import solve_extremal
from apps.families.domain import IndexWeights
from apps.testing.domain import Sample
from apps.testing.services import decide, h_shift, threshold_np, u_statistic
from .domain import AlternativeSource, DesignKind, MonteCarloReport, SignRule, SourceKind

logger = logging.getLogger(__name__)

MAX_SEED = 2 ** 64
_STREAMS = 3
_CHUNKS_PER_WORKER = 4


class PredictedErrors(NamedTuple):
    beta: float
    gamma: float


class TotalErrorForms(NamedTuple):
    half_boundary: float
    full_boundary: float


def check_seed(seed):
    if int(seed) != seed or not 0 <= seed < MAX_SEED:
        raise DomainError(f"Seed must be an integer in [0, 2^64), got {seed}")
    return int(seed)


def replication_streams(seed, replication):
    """
    Generators for (design, alternative, noise) of one replication

    Keyed on (seed, replication) only, so any schedule reproduces them.
    """
    root = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=(int(replication),))
    return tuple(np.random.default_rng(child) for child in root.spawn(_STREAMS))


def sample_design(model, n, d, rng):
    """
    n iid design points in [0, 1]^d

    A product design is sampled through uniforms: F(Y) is uniform when Y
    has the continuous CDF F.
    """
    if int(n) != n or n < 1 or int(d) != d or d < 1:
        raise DomainError(f"Design needs positive integers n and d, got n={n}, d={d}")
    if model.kind == DesignKind.PRODUCT_CDF:
        model.coordinate_cdfs(int(d))
    return rng.random((int(n), int(d)))


def draw_raw_design(model, n, d, rng):
    """Points y on the original scale of each coordinate CDF"""
    cdfs = model.coordinate_cdfs(int(d))
    uniforms = rng.random((int(n), int(d)))
    return np.column_stack([cdf.ppf(uniforms[:, axis]) for axis, cdf in enumerate(cdfs)])


def smirnov_transform(model, y):
    """Map externally supplied design points onto [0, 1]^d coordinate-wise"""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    cdfs = model.coordinate_cdfs(y.shape[1])
    transformed = np.column_stack([cdf.cdf(y[:, axis]) for axis, cdf in enumerate(cdfs)])
    return np.clip(transformed, 0.0, 1.0).reshape(y.shape)


def sample_response(theta, points, tau, rng, basis='fourier'):
    """x_i = sum_l theta_l phi_l(t_i) + tau * xi_i"""
    if not tau >= 0:
        raise DomainError(f"Noise level tau must be nonnegative, got {tau}")
    points = as_points(points)
    if theta is None or theta.size == 0:
        signal = np.zeros(points.shape[0])
    else:
        signal = evaluate(basis, theta.indices, points) @ theta.values
    if tau > 0:
        signal = signal + tau * rng.standard_normal(points.shape[0])
    return Sample(points=points, responses=signal)


def boundary_amplitudes(solution):
    """v_l / sqrt(n) over the solution's index set"""
    return np.sqrt(solution.v_squared / solution.problem.n)


def draw_alternative(source, rng):
    """
    Coefficients theta of one replication

    Deterministic sources put theta on the shell, sum theta^2 = (B r)^2;
    the Gaussian prior draws theta_l ~ N(0, v_l^2 / n) independently.
    """
    if source.kind == SourceKind.NULL:
        return IndexWeights(np.zeros((0, 0), dtype=np.int64), [])
    if source.kind == SourceKind.FIXED:
        return source.theta

    indices = source.solution.index_set.indices
    amplitudes = boundary_amplitudes(source.solution)
    if source.kind == SourceKind.PRIOR:
        return IndexWeights(indices, amplitudes * rng.standard_normal(amplitudes.size))
    if source.sign_rule == SignRule.RADEMACHER:
        amplitudes = amplitudes * rng.choice((-1.0, 1.0), size=amplitudes.size)
    return IndexWeights(indices, amplitudes)


def least_favorable(family, n, r, sign_rule=SignRule.POSITIVE, max_indices=None):
    """Deterministic boundary alternative from the (1, 1) extremal solution"""
    solution = solve_extremal(ExtremalProblem(family, n, r), max_indices)
    return AlternativeSource(SourceKind.DETERMINISTIC, solution=solution, sign_rule=sign_rule)


def gaussian_prior(family, n, r, delta=None, max_indices=None):
    """Gaussian prior built on the (1 - delta, 1 + delta) extremal solution"""
    delta = settings.MINIMAXGOF_PRIOR_DELTA if delta is None else delta
    if not 0 < delta < 1:
        raise DomainError(f"Prior delta must lie in (0, 1), got {delta}")
    solution = solve_extremal(ExtremalProblem(family, n, r, b=1.0 - delta, B=1.0 + delta), max_indices)
    return AlternativeSource(SourceKind.PRIOR, solution=solution)


def in_alternative_set(theta, coefficients, r, b=1.0, B=1.0):
    """sum theta^2 >= (B r)^2 and sum c^2 theta^2 <= b^2"""
    values = np.asarray(theta.values if isinstance(theta, IndexWeights) else theta, dtype=float)
    coefficients = np.asarray(coefficients, dtype=float)
    energy = math.fsum(values * values)
    smoothness = math.fsum((coefficients * values) ** 2)
    return energy >= (B * r) ** 2 and smoothness <= b * b


def prior_feasibility(source, draws, seed):
    """Fraction of prior draws landing in the (1, 1) alternative set"""
    if source.kind != SourceKind.PRIOR:
        raise DomainError("Feasibility is measured for Gaussian prior sources")
    if draws < 1:
        raise DomainError(f"Draw count must be positive, got {draws}")
    coefficients = source.solution.coefficients
    r = source.solution.problem.r
    inside = 0
    for draw in range(draws):
        _, alternative_rng, _ = replication_streams(seed, draw)
        inside += in_alternative_set(draw_alternative(source, alternative_rng), coefficients, r)
    return inside / draws


def predicted_errors(alpha, u):
    """(Phi(H^(alpha) - u), 2 Phi(-u/2))"""
    if not u >= 0:
        raise DomainError(f"Detection boundary must be nonnegative, got {u}")
    return PredictedErrors(
        beta=float(norm.cdf(threshold_np(alpha) - u)),
        gamma=float(2.0 * norm.cdf(-0.5 * u)),
    )


def total_error_forms(u):
    """Both stated forms of the minimal total error: 2 Phi(-u/2) and 2 Phi(-u)"""
    if not u >= 0:
        raise DomainError(f"Detection boundary must be nonnegative, got {u}")
    return TotalErrorForms(
        half_boundary=float(2.0 * norm.cdf(-0.5 * u)),
        full_boundary=float(2.0 * norm.cdf(-u)),
    )


def expected_shift(source, spec, n):
    """Shift h_n of U_n averaged over the source's draws"""
    if source.kind == SourceKind.NULL:
        return 0.0
    if source.kind == SourceKind.FIXED:
        return h_shift(source.theta, spec, n)
    amplitudes = IndexWeights(source.solution.index_set.indices, boundary_amplitudes(source.solution))
    return h_shift(amplitudes, spec, n)


def predicted_rejection(spec, source, n):
    """Gaussian prediction Phi(h - H) of the rejection rate; 1 - Phi(H) under the null"""
    return float(norm.cdf(expected_shift(source, spec, n) - spec.threshold))


def wilson_interval(successes, total, confidence=0.95):
    """Wilson score interval for a binomial proportion"""
    if total < 1 or not 0 <= successes <= total:
        raise DomainError(f"Invalid binomial counts: {successes} of {total}")
    z = float(norm.isf(0.5 * (1.0 - confidence)))
    rate = successes / total
    z_sq = z * z
    denominator = 1.0 + z_sq / total
    center = (rate + z_sq / (2.0 * total)) / denominator
    margin = z * math.sqrt(rate * (1.0 - rate) / total + z_sq / (4.0 * total * total)) / denominator
    return (max(0.0, min(rate, center - margin)), min(1.0, max(rate, center + margin)))


def check_index_growth(N, n, weak_a2=False):
    """
    Sample-size guidance: N = o(n), or N = o(n^(2/3)) in the weak mode

    Returns False (and logs a warning) when N exceeds the guide.
    """
    limit = float(n) ** (2.0 / 3.0) if weak_a2 else float(n)
    if N > limit:
        mode = 'n^(2/3)' if weak_a2 else 'n'
        logger.warning(f"N={N} exceeds {mode}={limit:.6g} for n={n}; Gaussian asymptotics may be poor")
        return False
    return True


def run_replication(spec, source, model, n, d, tau, seed, replication):
    """U_n of one replication"""
    design_rng, alternative_rng, noise_rng = replication_streams(seed, replication)
    points = sample_design(model, n, d, design_rng)
    theta = draw_alternative(source, alternative_rng)
    sample = sample_response(theta, points, tau, noise_rng, basis=spec.basis)
    return u_statistic(sample, spec)


def run_chunk(task):
    """
    Replications start..stop of a run

    Returns (statistics, failure); failure is (replication, message) or None.
    """
    spec, source, model, n, d, tau, seed, start, stop = task
    statistics = []
    for replication in range(start, stop):
        try:
            statistics.append(run_replication(spec, source, model, n, d, tau, seed, replication))
        except Exception as exc:
            return statistics, (replication, f"{type(exc).__name__}: {exc}")
    return statistics, None


def _chunks(replications, workers):
    count = min(replications, max(1, workers * _CHUNKS_PER_WORKER))
    bounds = np.linspace(0, replications, count + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_dimension(spec, source, model):
    d = max(spec.weights.dimension, source.dimension, 1)
    if model.kind == DesignKind.PRODUCT_CDF and len(model.cdfs) > 1:
        d = max(d, len(model.cdfs))
    return d


def monte_carlo(spec, source, model, n, tau, replications, seed, workers=None, family=None, radius=None):
    """
    Rejection rate of a test over independent replications

    Replications are split into contiguous chunks; with workers > 1 the
    chunks run on a process pool. Every replication draws from its own
    (seed, replication) streams, so the report does not depend on workers.

    Raises:
        DomainError: for invalid run parameters
        SimulationError: when a replication fails
    """
    seed = check_seed(seed)
    workers = settings.MINIMAXGOF_DEFAULT_WORKERS if workers is None else int(workers)
    if int(replications) != replications or replications < 1:
        raise DomainError(f"Replications must be a positive integer, got {replications}")
    if workers < 1:
        raise DomainError(f"Worker count must be at least 1, got {workers}")
    if int(n) != n or n < 1:
        raise DomainError(f"Sample size must be a positive integer, got {n}")
    if not tau >= 0:
        raise DomainError(f"Noise level tau must be nonnegative, got {tau}")
    replications, n = int(replications), int(n)
    d = _run_dimension(spec, source, model)
    model.coordinate_cdfs(d)

    tasks = [(spec, source, model, n, d, tau, seed, a, b) for a, b in _chunks(replications, workers)]
    logger.info(
        f"Starting Monte Carlo run: {source.mode} source, n={n}, N={spec.size}, "
        f"{replications} replications, seed={seed}, workers={workers}"
    )
    started = time.perf_counter()
    if workers == 1:
        results = [run_chunk(task) for task in tasks]
    else:
        pool = Pool(processes=workers)
        try:
            results = pool.map(run_chunk, tasks)
        finally:
            pool.close()
            pool.join()
    runtime = time.perf_counter() - started

    statistics = []
    for chunk_statistics, failure in results:
        if failure is not None:
            replication, message = failure
            logger.error(f"Monte Carlo replication {replication} failed: {message}")
            raise SimulationError(f"Replication {replication} failed: {message}", replication=replication)
        statistics.extend(chunk_statistics)

    rejections = sum(decide(value, spec.threshold) for value in statistics)
    solution = source.solution
    report = MonteCarloReport(
        replications=replications,
        rejections=rejections,
        empirical_rate=rejections / replications,
        wilson_ci=wilson_interval(rejections, replications),
        seed=seed,
        runtime=runtime,
        predicted=predicted_rejection(spec, source, n),
        u_n=solution.u if solution is not None else None,
        mode=source.mode,
        n=n,
        threshold=spec.threshold,
        index_count=spec.size,
        cutoff=solution.cutoff if solution is not None else None,
        radius=solution.problem.r if solution is not None else radius,
        family=solution.problem.family if solution is not None else family,
        mean_statistic=math.fsum(statistics) / replications,
    )
    logger.info(
        f"Monte Carlo run finished in {runtime:.2f}s: rate={report.empirical_rate:.5f} "
        f"({rejections}/{replications}), predicted={report.predicted:.5f}"
    )
    return report

