"""Utility functions."""
import hashlib
import logging

import numpy as np
from joblib import Parallel, delayed

from histopy.errors import NumericalError


logger = logging.getLogger('histopy')


def derive_seed(seed, *keys):
    """Derive a child seed from a root seed and integer keys.

    Parameters
    ----------
    seed : int
        Root seed
    keys : int
        Integer keys (e.g repeat index, epoch)

    Returns
    -------
    seed : int
        Derived 32-bit seed, stable across platforms
    """
    ss = np.random.SeedSequence([int(seed)] + [int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def make_rng(seed, *keys):
    """Get a numpy random generator from a root seed and keys."""
    return np.random.default_rng(derive_seed(seed, *keys))


def checksum(arrays):
    """Compute a sha256 checksum of named arrays.

    Parameters
    ----------
    arrays : dict
        Dictionary of named arrays. Names are hashed in insertion order

    Returns
    -------
    digest : str
        Hexadecimal digest
    """
    h = hashlib.sha256()
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        h.update(name.encode('utf-8'))
        h.update(str(arr.dtype).encode('ascii'))
        h.update(np.asarray(arr.shape, dtype=np.int64).tobytes())
        h.update(arr.tobytes())
    return h.hexdigest()


def parallel_map(fcn, items, n_threads=1):
    """Apply a function to items using joblib threads.

    Parameters
    ----------
    fcn : callable
        Function taking a single item
    items : iterable
        Items to process
    n_threads : int | 1
        Number of worker threads. With 1, items are processed serially

    Returns
    -------
    results : list
        Results in the order of the input items, whatever the completion
        order
    """
    items = list(items)
    if (n_threads is None) or (n_threads <= 1) or (len(items) <= 1):
        return [fcn(k) for k in items]
    return Parallel(n_jobs=int(n_threads), prefer='threads')(
        delayed(fcn)(k) for k in items)


def check_finite(arr, what='array'):
    """Raise a NumericalError if an array contains NaN or Inf."""
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non finite values in {what}")
    return arr
