"""Metrics and paired comparisons."""
import logging

import numpy as np
from scipy import stats

from histopy.errors import InvalidInput, Undefined


logger = logging.getLogger('histopy')

# largest number of non-zero differences using the exact signed-rank null
WILCOXON_EXACT_MAX = 25


###############################################################################
###############################################################################
#                               CLASSIFICATION
###############################################################################
###############################################################################


def accuracy_and_confusion(pred, truth, n_classes=None):
    """Overall accuracy and confusion matrix.

    Parameters
    ----------
    pred, truth : array_like
        Predicted and true class indices
    n_classes : int | None
        Number of classes (inferred if None)

    Returns
    -------
    accuracy : float
        Fraction of correct predictions
    confusion : array_like
        Array of shape (n_classes, n_classes) where rows are the true classes
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if (len(pred) == 0) or (len(pred) != len(truth)):
        raise InvalidInput("predictions and truth must have the same "
                           "non-zero length")
    if n_classes is None:
        n_classes = int(max(pred.max(), truth.max())) + 1
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (truth, pred), 1)
    return float(np.mean(pred == truth)), conf


def per_class_accuracy(confusion):
    """Row-normalized diagonal of a confusion matrix (NaN for empty rows)."""
    confusion = np.asarray(confusion, dtype=float)
    rows = confusion.sum(axis=1)
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(rows > 0, np.diag(confusion) / rows, np.nan)


###############################################################################
###############################################################################
#                               CORRELATION / AUC
###############################################################################
###############################################################################


def pearson(a, b):
    """Sample Pearson correlation.

    Raises Undefined when a vector is constant.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if (len(a) < 2) or (len(a) != len(b)):
        raise InvalidInput("two vectors of equal length >= 2 are required")
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(da @ da), np.sqrt(db @ db)
    if (na == 0.) or (nb == 0.):
        raise Undefined("correlation of a constant vector")
    return float(np.clip((da @ db) / (na * nb), -1., 1.))


def correlation_p_value(r, n):
    """Two-sided p-value of a Pearson correlation (t test, n - 2 dof)."""
    if n < 4:
        raise InvalidInput("at least four samples are required")
    if abs(r) >= 1.:
        return 0.
    t = r * np.sqrt((n - 2) / (1. - r ** 2))
    return float(min(1., 2. * stats.t.sf(abs(t), n - 2)))


def auc(scores, labels):
    """Area under the ROC curve.

    Fraction of (positive, negative) pairs where the positive is scored
    higher, ties counting for one half. Computed from the rank sum of the
    positives (average ranks for ties).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if len(scores) != len(labels):
        raise InvalidInput("one label per score is required")
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if (n_pos == 0) or (n_neg == 0):
        raise Undefined("AUC needs both classes")
    ranks = stats.rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.
    return float(u / (n_pos * n_neg))


###############################################################################
###############################################################################
#                               PAIRED TESTS
###############################################################################
###############################################################################


def _signed_rank_exact_cdf(doubled_ranks):
    """Null distribution of twice the positive rank sum.

    Ranks are doubled so that tied (half-integer) ranks stay integers.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros((total + 1,), dtype=float)
    counts[0] = 1.
    for r in doubled_ranks.astype(int):
        counts[r:] = counts[r:] + counts[:total + 1 - r].copy()
    return counts / counts.sum()


def wilcoxon_signed_rank(a, b):
    """Two-sided Wilcoxon signed-rank test on paired values.

    Zero differences are dropped. The null distribution is exact for up to
    25 non-zero differences and a normal approximation (tie and continuity
    corrected) above.

    Returns
    -------
    w : float
        Sum of the ranks of the positive differences b - a
    p : float
        Two-sided p-value
    """
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    d = d[d != 0.]
    n = len(d)
    if n == 0:
        return 0., 1.
    ranks = stats.rankdata(np.abs(d))
    w = float(ranks[d > 0].sum())
    if n <= WILCOXON_EXACT_MAX:
        pmf = _signed_rank_exact_cdf(2. * ranks)
        w2 = int(round(2. * w))
        p_low, p_high = pmf[:w2 + 1].sum(), pmf[w2:].sum()
        return w, float(min(1., 2. * min(p_low, p_high)))
    mean = n * (n + 1) / 4.
    _, ties = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24. - (ties ** 3 - ties).sum() / 48.
    z = (abs(w - mean) - .5) / np.sqrt(var)
    return w, float(min(1., 2. * stats.norm.sf(max(z, 0.))))


def paired_ttest(a, b):
    """Two-sided paired t-test of b against a (p = 1 without differences)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    d = b - a
    if np.all(d == d[0]):
        if d[0] == 0.:
            return 0., 1.
        return float(np.copysign(np.inf, d[0])), 0.
    t, p = stats.ttest_rel(b, a)
    return float(t), float(p)


def paired_compare(metric_a, metric_b, test='wilcoxon'):
    """Compare two extractors from their per-repeat metric values.

    Parameters
    ----------
    metric_a, metric_b : array_like
        Per-repeat metric of extractor a (baseline) and b (fine-tuned)
    test : {'wilcoxon', 'ttest'}
        Paired test

    Returns
    -------
    mean_diff : float
        mean(metric_b - metric_a)
    p : float
        Two-sided p-value

    Notes
    -----
    Below 6 pairs the exact two-sided Wilcoxon p-value cannot fall below
    2 / 2**n (0.0625 for 5 pairs), so no difference can reach the usual 0.05
    level and the p-value is uninformative. A warning is logged and the
    value is still returned.
    """
    a, b = np.asarray(metric_a, dtype=float), np.asarray(metric_b,
                                                         dtype=float)
    if (len(a) != len(b)) or (len(a) == 0):
        raise InvalidInput("paired series must have the same non-zero "
                           "length")
    if len(a) < 6:
        logger.warning(f"    paired comparison over only {len(a)} values, the "
                       f"p-value is uninformative")
    mean_diff = float(np.mean(b - a))
    if test == 'wilcoxon':
        p = wilcoxon_signed_rank(a, b)[1]
    elif test == 'ttest':
        p = paired_ttest(a, b)[1]
    else:
        raise InvalidInput(f"unknown paired test {test}")
    return mean_diff, p


def count_improved_genes(corr_a, corr_b, p_b, alpha=0.05):
    """Count the significant genes improved by extractor b.

    Parameters
    ----------
    corr_a, corr_b : array_like
        Per-gene correlation of extractors a and b (NaN for undefined)
    p_b : array_like
        Per-gene p-value under extractor b
    alpha : float | 0.05
        Significance level

    Returns
    -------
    n_significant : int
        Number of genes with p_b < alpha
    n_improved : int
        Number of significant genes where corr_b > corr_a
    """
    corr_a, corr_b = np.asarray(corr_a, float), np.asarray(corr_b, float)
    p_b = np.asarray(p_b, dtype=float)
    sig = (p_b < alpha) & np.isfinite(corr_a) & np.isfinite(corr_b)
    return int(sig.sum()), int((corr_b[sig] > corr_a[sig]).sum())
