"""Writing functions."""
import logging
import os
import struct

import os.path as op

import numpy as np
import pandas as pd
from PIL import Image

from histopy.errors import IoError
from histopy.io.read import CHECKPOINT_MAGIC, FEATURES_MAGIC


logger = logging.getLogger('histopy')


def make_dirs(path):
    """Create a folder (and its parents) if needed."""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {path} ({e})")
    return path


def _write_bytes(path, payload):
    try:
        folder = op.dirname(path)
        if folder:
            make_dirs(folder)
        with open(path, 'wb') as f:
            f.write(payload)
    except OSError as e:
        raise IoError(f"cannot write {path} ({e})")


def write_image(path, image):
    """Write an RGB uint8 image as PNG (or TIFF if the extension says so)."""
    try:
        folder = op.dirname(path)
        if folder:
            make_dirs(folder)
        Image.fromarray(np.asarray(image, dtype=np.uint8), mode='RGB').save(
            path)
    except OSError as e:
        raise IoError(f"cannot write {path} ({e})")


def write_checkpoint(path, tensors):
    """Write a parameter checkpoint.

    Parameters
    ----------
    path : string
        Path to the checkpoint file
    tensors : dict
        Named tensors, written in insertion order as little-endian float32
    """
    chunks = [CHECKPOINT_MAGIC, struct.pack('<I', 1)]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        b_name = name.encode('utf-8')
        chunks += [struct.pack('<I', len(b_name)), b_name,
                   struct.pack('<I', arr.ndim),
                   struct.pack(f'<{arr.ndim}I', *arr.shape),
                   np.ascontiguousarray(arr, dtype='<f4').tobytes()]
    _write_bytes(path, b''.join(chunks))
    logger.info(f"    Checkpoint saved to {path}")


def write_features(path, ids, values):
    """Write a feature matrix as a PFV1 file and its CSV export.

    Parameters
    ----------
    path : string
        Path to the PFV1 file. The CSV export is written next to it with the
        '.csv' extension
    ids : list
        Row identifiers
    values : array_like
        Array of shape (n_rows, dim)
    """
    values = np.asarray(values, dtype='<f4')
    n_rows, dim = values.shape
    assert len(ids) == n_rows
    chunks = [FEATURES_MAGIC, struct.pack('<II', n_rows, dim)]
    for _id, row in zip(ids, values):
        b_id = _id.encode('utf-8')
        chunks += [struct.pack('<I', len(b_id)), b_id, row.tobytes()]
    _write_bytes(path, b''.join(chunks))
    # CSV export
    df = pd.DataFrame(values, columns=[f"f{k}" for k in range(dim)])
    df.insert(0, 'id', list(ids))
    write_csv(op.splitext(path)[0] + '.csv', df)
    logger.info(f"    {n_rows} feature rows (dim={dim}) saved to {path}")


def write_csv(path, df):
    """Write a DataFrame as CSV with a fixed float representation."""
    try:
        folder = op.dirname(path)
        if folder:
            make_dirs(folder)
        df.to_csv(path, index=False, float_format='%.9g', lineterminator='\n')
    except OSError as e:
        raise IoError(f"cannot write {path} ({e})")


def write_text(path, text):
    """Write a text file (utf-8, unix line endings)."""
    _write_bytes(path, text.encode('utf-8'))
