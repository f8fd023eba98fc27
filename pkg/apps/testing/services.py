"""
Services for the testing app
Kernel weights, the U-statistic in spectral and naive form, thresholds
and the shift of the statistic under alternatives
"""

import logging
import math

import numpy as np
from scipy.stats import norm

from apps.basis.services import design_block
from apps.core.exceptions import DegenerateSampleError, DomainError
from apps.families.domain import IndexSet, IndexWeights
from .domain import Criterion, Sample, TestOutcome, TestSpec, VarianceMode

logger = logging.getLogger(__name__)

# Basis values evaluated at once (indices x points)
_BLOCK_ENTRIES = 1 << 22


def rate_weights(members):
    """
    Equal kernel weights sqrt(2/N) over an index set

    Raises:
        DomainError: if the set is empty
    """
    indices = members.indices if isinstance(members, IndexSet) else np.asarray(members, dtype=np.int64)
    if indices.shape[0] == 0:
        raise DomainError("Rate weights need a nonempty index set")
    return IndexWeights(indices, np.full(indices.shape[0], math.sqrt(2.0 / indices.shape[0])))


def make_test_spec(weights, alpha=None, criterion=Criterion.NEYMAN_PEARSON, u=None,
                   basis='fourier', variance_mode=VarianceMode.KNOWN, tau2=1.0):
    """
    Assemble a TestSpec, choosing H^(alpha) or u/2 as the threshold

    Raises:
        DomainError: if the chosen criterion lacks alpha or u
    """
    criterion = Criterion(criterion)
    if criterion == Criterion.NEYMAN_PEARSON:
        if alpha is None:
            raise DomainError("The Neyman-Pearson criterion needs a level alpha")
        threshold = threshold_np(alpha)
    else:
        if u is None:
            raise DomainError("The total-error criterion needs the detection boundary u_n")
        threshold = threshold_total(u)
    return TestSpec(
        weights=weights,
        threshold=threshold,
        basis=basis,
        variance_mode=variance_mode,
        tau2=tau2 if VarianceMode(variance_mode) == VarianceMode.KNOWN else None,
        alpha=alpha,
        criterion=criterion,
    )


def projections(basis, indices, sample):
    """
    Per-index sums p_l = sum_i x_i phi_l(t_i) and q_l = sum_i x_i^2 phi_l(t_i)^2

    Indices are processed in blocks; each sum runs over all n points at once,
    so the result does not depend on the block size.
    """
    indices = np.asarray(indices, dtype=np.int64)
    x = sample.responses
    x_sq = x * x
    p = np.empty(indices.shape[0])
    q = np.empty(indices.shape[0])
    step = max(1, _BLOCK_ENTRIES // max(1, sample.n))
    for start in range(0, indices.shape[0], step):
        block = design_block(basis, indices[start:start + step], sample.points)
        p[start:start + step] = np.sum(block * x, axis=1)
        q[start:start + step] = np.sum(block * block * x_sq, axis=1)
    return p, q


def estimate_variance(sample):
    """
    Plug-in noise level (1/n) sum x_i^2

    Raises:
        DegenerateSampleError: if every response is zero
    """
    if sample.n < 1:
        raise DomainError("Variance estimation needs at least one observation")
    estimate = math.fsum(sample.responses * sample.responses) / sample.n
    if estimate <= 0:
        raise DegenerateSampleError("All responses are zero; the plug-in variance vanishes")
    return estimate


def resolve_variance(sample, spec):
    if spec.variance_mode == VarianceMode.KNOWN:
        return float(spec.tau2)
    if sample.n < 2:
        raise DomainError("The plug-in variance needs at least two observations")
    return estimate_variance(sample)


def _check_sample(sample, spec):
    if sample.n == 0:
        raise DomainError("The U-statistic needs at least one observation")
    if spec.weights.dimension > sample.dimension and np.any(spec.weights.indices[:, sample.dimension:]):
        raise DomainError(
            f"Kernel indices use more coordinates than the sample dimension d={sample.dimension}"
        )


def u_statistic(sample: Sample, spec: TestSpec):
    """
    U_n = (1 / (n tau^2)) sum_{i<k} x_i x_k G_n(t_i, t_k)

    G_n = sum_l w_l phi_l phi_l; the pair sum is 1/2 (p_l^2 - q_l) per index,
    which costs O(nN).
    """
    _check_sample(sample, spec)
    if sample.n == 1:
        return 0.0
    tau2 = resolve_variance(sample, spec)
    p, q = projections(spec.basis, spec.weights.indices, sample)
    pair_sum = math.fsum(spec.weights.values * 0.5 * (p * p - q))
    return pair_sum / (sample.n * tau2)


def u_statistic_naive(sample: Sample, spec: TestSpec):
    """Direct O(n^2 N) evaluation of the pair sum; reference for u_statistic"""
    _check_sample(sample, spec)
    if sample.n == 1:
        return 0.0
    tau2 = resolve_variance(sample, spec)
    block = design_block(spec.basis, spec.weights.indices, sample.points)
    kernel = (block.T * spec.weights.values) @ block
    x = sample.responses
    pairs = np.triu(np.outer(x, x) * kernel, k=1)
    return math.fsum(pairs.ravel()) / (sample.n * tau2)


def threshold_np(alpha):
    """H^(alpha), the standard normal upper alpha quantile"""
    if not 0 < alpha < 1:
        raise DomainError(f"Level alpha must lie in (0, 1), got {alpha}")
    return float(norm.isf(alpha))


def threshold_total(u):
    """u_n / 2, the threshold minimizing the total error"""
    if not u >= 0:
        raise DomainError(f"Detection boundary must be nonnegative, got {u}")
    return 0.5 * float(u)


def decide(statistic, threshold):
    """Reject when U > H; ties accept"""
    return bool(statistic > threshold)


def run_test(sample, spec):
    statistic = u_statistic(sample, spec)
    tau2 = resolve_variance(sample, spec) if sample.n > 1 else (spec.tau2 or 0.0)
    reject = decide(statistic, spec.threshold)
    logger.debug(f"U_n = {statistic:.6g} against H = {spec.threshold:.6g}: {'reject' if reject else 'accept'}")
    return TestOutcome(statistic=statistic, threshold=spec.threshold, reject=reject, tau2=tau2, n=sample.n)


def h_shift(theta, spec, n):
    """
    Shift of U_n under theta: 1/2 sum_l w_l n theta_l^2

    Coefficients outside the kernel's support contribute nothing.
    """
    if not isinstance(theta, IndexWeights):
        theta = IndexWeights.from_mapping(theta)
    weights = spec.weights
    if theta.indices.shape == weights.indices.shape and np.array_equal(theta.indices, weights.indices):
        aligned = theta.values
    else:
        aligned = theta.aligned_to(weights.indices)
    return 0.5 * n * math.fsum(weights.values * aligned * aligned)


def h_lower_bound(n, r, N, C):
    """
    (n r^2 / sqrt(2N)) (1 - (r C)^-2), floored at 0

    The bound is informative only for r C >= 1; below that the correction
    factor is negative and the trivial bound h >= 0 is returned. The
    correction vanishes for C = inf.
    """
    if N < 1:
        raise DomainError(f"Index count must be at least 1, got {N}")
    correction = 1.0 if math.isinf(C) else 1.0 - (r * C) ** -2
    return n * r * r / math.sqrt(2.0 * N) * max(correction, 0.0)
