"""Repeated (stratified) k-fold plans."""
import logging
from dataclasses import dataclass

import numpy as np

from histopy.errors import InvalidPlan
from histopy.utils import make_rng


logger = logging.getLogger('histopy')


@dataclass(frozen=True)
class FoldPlan:
    """Partition of units into k held-out folds for a single repeat.

    Attributes
    ----------
    repeat_index : int
        Index of the repeat
    folds : tuple
        Tuple of k lists of held-out unit ids
    seed : int
        Root seed of the plan
    """

    repeat_index: int
    folds: tuple
    seed: int

    @property
    def k(self):
        return len(self.folds)

    def fold_of(self):
        """Mapping {unit_id: fold index}."""
        return {u: f for f, fold in enumerate(self.folds) for u in fold}

    def split(self, fold):
        """Get the (train, test) unit ids of a fold."""
        test = list(self.folds[fold])
        train = [u for f, other in enumerate(self.folds) if f != fold for
                 u in other]
        return train, test


def make_fold_plan(unit_ids, labels=None, k=5, n_repeats=1, seed=0,
                   warn=True):
    """Build repeated k-fold plans.

    In every repeat, units are shuffled with a generator derived from
    (seed, repeat) and unit i of the shuffled list goes to fold i % k. For
    stratified plans, the shuffled units of each class are concatenated in
    class order before the cyclic assignment, which balances both the fold
    sizes and the per-class counts.

    Parameters
    ----------
    unit_ids : array_like
        Unique unit identifiers (tile or patient ids)
    labels : array_like | None
        Class of each unit for stratified plans
    k : int | 5
        Number of folds
    n_repeats : int | 1
        Number of repeats
    seed : int | 0
        Root seed
    warn : bool | True
        Warn when a class has less than k members

    Returns
    -------
    plans : list
        List of FoldPlan, one per repeat
    """
    unit_ids = list(unit_ids)
    n = len(unit_ids)
    if k < 2:
        raise InvalidPlan(f"at least two folds are required (k={k})")
    if n < k:
        raise InvalidPlan(f"{n} units cannot be split into {k} folds")
    if len(set(unit_ids)) != n:
        raise InvalidPlan("unit ids must be unique")
    if labels is not None:
        labels = np.asarray(labels)
        if len(labels) != n:
            raise InvalidPlan("one label per unit is required")
        classes, counts = np.unique(labels, return_counts=True)
        small = classes[counts < k]
        if warn and len(small):
            logger.warning(f"    classes {small.tolist()} have less than {k} "
                           "members, their units are spread without "
                           "stratification")
    plans = []
    for r in range(n_repeats):
        rng = make_rng(seed, r)
        if labels is None:
            order = rng.permutation(n)
        else:
            order = np.concatenate([np.flatnonzero(labels == c)[
                rng.permutation(int((labels == c).sum()))] for c in classes])
        folds = [[] for _ in range(k)]
        for i, u in enumerate(order):
            folds[i % k] += [unit_ids[u]]
        plans += [FoldPlan(r, tuple(folds), seed)]
    return plans
