"""Feature extraction and patient-level pooling."""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from histopy.errors import EmptyPatient, InvalidInput, NumericalError
from histopy.io.read import read_features
from histopy.io.syslog import set_log_level
from histopy.io.write import write_features
from histopy.nn import forward
from histopy.utils import parallel_map


logger = logging.getLogger('histopy')


@dataclass
class FeatureMatrix:
    """Feature vectors with row identifiers.

    Attributes
    ----------
    ids : list
        Unique row identifiers (tile or patient ids)
    values : array_like
        float32 array of shape (n_rows, dim)
    """

    ids: list
    values: np.ndarray

    def __post_init__(self):
        self.ids = [str(k) for k in self.ids]
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise InvalidInput("feature values should be a 2D array")
        if len(self.ids) != self.values.shape[0]:
            raise InvalidInput("one identifier per row is required")
        if len(set(self.ids)) != len(self.ids):
            raise InvalidInput("row identifiers must be unique")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("non finite feature values")

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.values.shape[1]

    def to_frame(self):
        """DataFrame indexed by the row identifiers."""
        return pd.DataFrame(self.values, index=pd.Index(self.ids, name='id'),
                            columns=[f"f{k}" for k in range(self.dim)])

    def save(self, path):
        """Save as a PFV1 file and its CSV export."""
        write_features(path, self.ids, self.values)

    @classmethod
    def load(cls, path):
        return cls(*read_features(path))


def extract_tile_features(params, tiles, n_threads=1, verbose=None):
    """Extract the penultimate activations of each tile.

    Every tile is evaluated through its own forward pass (inference mode) so
    that a row never depends on the other tiles nor on the threads.

    Parameters
    ----------
    params : NetworkParams
        The network
    tiles : list
        List of preprocessed Tile
    n_threads : int | 1
        Number of worker threads

    Returns
    -------
    features : FeatureMatrix
        One row per tile, identified by the tile id
    """
    set_log_level(verbose)
    if not len(tiles):
        raise InvalidInput("no tile to extract features from")
    scale = np.float32(255.)

    def _fcn(tile):
        batch = tile.pixels[np.newaxis].astype(np.float32) / scale
        return forward(params, batch, train_mode=False)[0][0]

    rows = parallel_map(_fcn, tiles, n_threads=n_threads)
    logger.info(f"    {len(tiles)} tiles -> features of dimension "
                f"{len(rows[0])}")
    return FeatureMatrix([t.tile_id for t in tiles], np.stack(rows))


def tile_patient_map(tiles):
    """Get the {tile_id: patient_id} mapping of tiles."""
    mapping = dict()
    for t in tiles:
        if t.patient_id is None:
            raise InvalidInput(f"tile {t.tile_id} has no patient")
        mapping[t.tile_id] = t.patient_id
    return mapping


def aggregate_patient(features, tile_to_patient, patient_ids=None):
    """Average the tile rows of each patient.

    Parameters
    ----------
    features : FeatureMatrix
        Tile features
    tile_to_patient : dict
        Patient id of every tile id
    patient_ids : list | None
        Expected patients. By default, the patients of the mapping

    Returns
    -------
    patients : FeatureMatrix
        One row per patient, in ascending patient id order. Each row is the
        arithmetic mean of the tile rows, summed in ascending tile id order
    """
    missing = [k for k in features.ids if k not in tile_to_patient]
    if len(missing):
        raise InvalidInput(f"{len(missing)} tiles without patient "
                           f"(e.g {missing[0]})")
    if patient_ids is None:
        patient_ids = set(tile_to_patient.values())
    patient_ids = sorted(set(str(k) for k in patient_ids))
    rows = {p: [] for p in patient_ids}
    order = sorted(range(len(features)), key=lambda k: features.ids[k])
    for k in order:
        p = str(tile_to_patient[features.ids[k]])
        if p not in rows:
            raise InvalidInput(f"unexpected patient {p}")
        rows[p] += [k]
    values = np.zeros((len(patient_ids), features.dim), dtype=np.float32)
    for n_p, p in enumerate(patient_ids):
        if not len(rows[p]):
            raise EmptyPatient(f"patient {p} has no tile")
        acc = np.zeros((features.dim,), dtype=np.float64)
        for k in rows[p]:
            acc += features.values[k]
        values[n_p] = acc / len(rows[p])
    return FeatureMatrix(patient_ids, values)
