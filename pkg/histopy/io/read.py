"""Reading functions."""
import logging
import struct

import os.path as op
from collections import OrderedDict

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError

from histopy.errors import ItemError, IoError, InvalidDataset


logger = logging.getLogger('histopy')

IMAGE_EXTENSIONS = ('.png', '.tif', '.tiff')
CHECKPOINT_MAGIC = b'HFNN'
FEATURES_MAGIC = b'PFV1'


def read_image(path):
    """Read an RGB image.

    Parameters
    ----------
    path : string
        Path to a PNG or 8-bit TIFF file

    Returns
    -------
    image : array_like
        uint8 array of shape (height, width, 3)
    """
    try:
        with Image.open(path) as img:
            if img.mode not in ('RGB', 'RGBA', 'L', 'P'):
                raise ItemError(path, f"unsupported image mode {img.mode}")
            return np.asarray(img.convert('RGB'), dtype=np.uint8)
    except (OSError, UnidentifiedImageError, ValueError) as e:
        raise ItemError(path, str(e))


def _unpack(fmt, buf, pos, path):
    size = struct.calcsize(fmt)
    if pos + size > len(buf):
        raise IoError(f"truncated file {path}")
    return struct.unpack_from(fmt, buf, pos), pos + size


def _read_bytes(path):
    try:
        with open(path, 'rb') as f:
            return f.read()
    except OSError as e:
        raise IoError(f"cannot read {path} ({e})")


def read_checkpoint(path):
    """Read a parameter checkpoint.

    Parameters
    ----------
    path : string
        Path to a HFNN checkpoint file

    Returns
    -------
    tensors : OrderedDict
        Named float32 tensors in file order
    """
    buf = _read_bytes(path)
    if buf[0:4] != CHECKPOINT_MAGIC:
        raise IoError(f"{path} is not a HFNN checkpoint")
    (version,), pos = _unpack('<I', buf, 4, path)
    if version != 1:
        raise IoError(f"unsupported checkpoint version {version}")
    tensors = OrderedDict()
    while pos < len(buf):
        (n_name,), pos = _unpack('<I', buf, pos, path)
        name = buf[pos:pos + n_name].decode('utf-8')
        pos += n_name
        (rank,), pos = _unpack('<I', buf, pos, path)
        shape, pos = _unpack(f'<{rank}I', buf, pos, path)
        n_bytes = 4 * int(np.prod(shape, dtype=np.int64))
        if pos + n_bytes > len(buf):
            raise IoError(f"truncated tensor {name} in {path}")
        arr = np.frombuffer(buf, dtype='<f4', count=n_bytes // 4, offset=pos)
        tensors[name] = arr.reshape(shape).astype(np.float32)
        pos += n_bytes
    return tensors


def read_features(path):
    """Read a feature matrix file.

    Parameters
    ----------
    path : string
        Path to a PFV1 file

    Returns
    -------
    ids : list
        Row identifiers
    values : array_like
        float32 array of shape (n_rows, dim)
    """
    buf = _read_bytes(path)
    if buf[0:4] != FEATURES_MAGIC:
        raise IoError(f"{path} is not a PFV1 feature file")
    (n_rows, dim), pos = _unpack('<II', buf, 4, path)
    ids = []
    values = np.zeros((n_rows, dim), dtype=np.float32)
    for k in range(n_rows):
        (n_id,), pos = _unpack('<I', buf, pos, path)
        ids += [buf[pos:pos + n_id].decode('utf-8')]
        pos += n_id
        if pos + 4 * dim > len(buf):
            raise IoError(f"truncated row {k} in {path}")
        values[k] = np.frombuffer(buf, dtype='<f4', count=dim, offset=pos)
        pos += 4 * dim
    return ids, values


def read_target_table(path, binary=False):
    """Read a patient target table (expression or mutation).

    Parameters
    ----------
    path : string
        CSV file with `patient_id` as first column and one column per target
    binary : bool | False
        Check that every value is 0 or 1 (mutation flags)

    Returns
    -------
    df : DataFrame
        Targets indexed by patient id (string), sorted by patient id
    """
    if not op.isfile(path):
        raise IoError(f"target file not found ({path})")
    df = pd.read_csv(path, dtype={'patient_id': str})
    if (len(df.columns) < 2) or (df.columns[0] != 'patient_id'):
        raise InvalidDataset(f"{path} must start with a 'patient_id' column")
    df = df.set_index('patient_id').sort_index()
    if df.index.has_duplicates:
        raise InvalidDataset(f"duplicated patient ids in {path}")
    if df.isna().any().any():
        raise InvalidDataset(f"missing values in {path}")
    try:
        df = df.astype(float)
    except ValueError as e:
        raise InvalidDataset(f"non numeric target in {path} ({e})")
    if binary and not df.isin([0., 1.]).all().all():
        raise InvalidDataset(f"{path} must only contain 0/1 flags")
    logger.info(f"    {df.shape[1]} targets for {df.shape[0]} patients read "
                f"from {path}")
    return df
