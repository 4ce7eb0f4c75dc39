"""Instance builders shared by the test modules."""
import numpy as np

from infoacq.predictive import PosteriorPredictions


def random_preds(rng, n, k, c, concentration=1.0):
    """Random posterior predictions with Dirichlet class distributions."""
    return PosteriorPredictions.from_probs(rng.dirichlet(np.full(c, concentration), size=(n, k)))


def two_slice_preds():
    """Two candidates that both predict class 0 under sample 1 and class 1 under sample 2."""
    p = np.zeros((2, 2, 2))
    p[:, 0, 0] = 1.0
    p[:, 1, 1] = 1.0
    return PosteriorPredictions.from_probs(p)
