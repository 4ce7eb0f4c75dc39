"""Slow, independent reference computations used as test oracles.

Nothing here imports the package under test; everything is plain Python
loops over ``itertools`` with ``math.fsum`` or ``mpmath`` accumulation.
"""
import itertools
import math

import mpmath


def probs_of(log_probs):
    """Nested lists of probabilities from a [N, K, C] array of log-probabilities."""
    return [[[math.exp(v) for v in row] for row in cand] for cand in log_probs.tolist()]


def entropy(dist):
    return -math.fsum(p * math.log(p) for p in dist if p > 0)


def marginal_mp(probs_nkc, n, dps=50):
    """Mean over K of the class distributions of candidate n, in extended precision."""
    with mpmath.workdps(dps):
        slices = probs_nkc[n]
        k = len(slices)
        return [mpmath.fsum(mpmath.mpf(s[c]) for s in slices) / k for c in range(len(slices[0]))]


def predictive_entropy(probs_nkc, n):
    k = len(probs_nkc[n])
    c = len(probs_nkc[n][0])
    marg = [math.fsum(probs_nkc[n][j][y] for j in range(k)) / k for y in range(c)]
    return entropy(marg)


def expected_conditional_entropy(probs_nkc, n):
    return math.fsum(entropy(s) for s in probs_nkc[n]) / len(probs_nkc[n])


def bald(probs_nkc, n):
    return predictive_entropy(probs_nkc, n) - expected_conditional_entropy(probs_nkc, n)


def joint_entropy(probs_nkc, indices):
    """Enumerate every label configuration of ``indices``."""
    if not indices:
        return 0.0
    k = len(probs_nkc[indices[0]])
    c = len(probs_nkc[indices[0]][0])
    total = []
    for config in itertools.product(range(c), repeat=len(indices)):
        per_sample = []
        for j in range(k):
            prod = 1.0
            for idx, y in zip(indices, config):
                prod *= probs_nkc[idx][j][y]
            per_sample.append(prod)
        p = math.fsum(per_sample) / k
        if p > 0:
            total.append(-p * math.log(p))
    return math.fsum(total)


def joint_mi(probs_nkc, indices):
    """I[(y)_batch; omega] = H[joint] - sum of expected conditional entropies."""
    return joint_entropy(probs_nkc, list(indices)) - math.fsum(
        expected_conditional_entropy(probs_nkc, i) for i in indices)


def best_batch(probs_nkc, b, objective):
    """Exhaustive maximum of ``objective`` over all size-b subsets."""
    best = None
    for combo in itertools.combinations(range(len(probs_nkc)), b):
        value = objective(combo)
        if best is None or value > best[0]:
            best = (value, combo)
    return best


def plackett_luce_ordered(weights, b):
    """Probability of every ordered b-tuple under sequential sampling without replacement."""
    out = {}
    total = math.fsum(weights)
    for seq in itertools.permutations(range(len(weights)), b):
        p, remaining = 1.0, total
        for i in seq:
            p *= weights[i] / remaining
            remaining -= weights[i]
        out[seq] = p
    return out


def t_quantile_975(dof):
    """Two-sided 95% Student-t critical values from the standard table."""
    table = {1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 9: 2.262}
    return table[dof]


def clamped_gaussian_abs_mean(x, sigma, nodes=4000):
    """E|clip(x + sigma Z, 0, 1) - x| by trapezoid quadrature over Z."""
    lo, hi = -10.0, 10.0
    h = (hi - lo) / nodes
    acc = []
    for i in range(nodes + 1):
        z = lo + i * h
        w = 0.5 if i in (0, nodes) else 1.0
        v = min(max(x + sigma * z, 0.0), 1.0)
        acc.append(w * abs(v - x) * math.exp(-0.5 * z * z))
    return math.fsum(acc) * h / math.sqrt(2 * math.pi)
