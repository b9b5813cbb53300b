"""Loading functions."""
import logging
import math
import os

import os.path as op
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from histopy.errors import InvalidDataset, IoError, ItemError
from histopy.io.read import read_image, IMAGE_EXTENSIONS
from histopy.io.syslog import set_log_level
from histopy.tiling import Tile, make_tile_id


logger = logging.getLogger('histopy')


@dataclass
class LabeledDataset:
    """Tiles annotated with a tissue class.

    Attributes
    ----------
    tiles : list
        List of Tile
    labels : array_like
        Class index of each tile, in [0, n_classes)
    class_names : list
        Class names (index k is the name of class k)
    """

    tiles: list
    labels: np.ndarray
    class_names: list

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.labels) != len(self.tiles):
            raise InvalidDataset("one label per tile is required")
        if len(self.class_names) < 2:
            raise InvalidDataset("at least two classes are required")
        if len(self.labels) and ((self.labels.min() < 0) or (
                self.labels.max() >= len(self.class_names))):
            raise InvalidDataset("labels must be in [0, n_classes)")

    def __len__(self):
        return len(self.tiles)

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def tile_ids(self):
        return [t.tile_id for t in self.tiles]

    def as_batch(self, idx=None):
        """Get the tiles as a float32 batch in [0, 1].

        Parameters
        ----------
        idx : array_like | None
            Indices of the tiles to take (all if None)

        Returns
        -------
        batch : array_like
            Array of shape (n_tiles, size, size, 3)
        """
        idx = np.arange(len(self.tiles)) if idx is None else idx
        return np.stack([self.tiles[k].pixels for k in idx]).astype(
            np.float32) / np.float32(255.)


@dataclass
class PatientManifest:
    """Images of each patient.

    Attributes
    ----------
    patient_ids, image_paths : list
        Patient identifier and absolute image path of each row
    mpp : array_like
        Resolution (microns per pixel) of each image
    """

    patient_ids: list
    image_paths: list
    mpp: np.ndarray = field(default_factory=lambda: np.zeros((0,)))

    def __len__(self):
        return len(self.patient_ids)

    def rows(self):
        return zip(self.patient_ids, self.image_paths, self.mpp)


def _list_images(folder):
    return sorted(k for k in os.listdir(folder) if op.isfile(
        op.join(folder, k)) and op.splitext(k)[1].lower() in IMAGE_EXTENSIONS)


def scan_class_dataset(root):
    """List the images of a folder-per-class dataset without decoding them.

    Parameters
    ----------
    root : string
        Folder containing one sub-folder per class (e.g root/ADI/*.png)

    Returns
    -------
    files : list
        Tuples (path, source_id, label). The source id is 'CLASS/filename'
    class_names : list
        Sorted class names. The class index is the lexicographic rank
    """
    if not op.isdir(root):
        raise InvalidDataset(f"{root} is not a folder")
    class_names = sorted(k for k in os.listdir(root) if op.isdir(
        op.join(root, k)))
    if len(class_names) < 2:
        raise InvalidDataset(f"{root} must contain at least two class "
                             f"folders (found {len(class_names)})")
    files = []
    for label, name in enumerate(class_names):
        images = _list_images(op.join(root, name))
        if not len(images):
            raise InvalidDataset(f"class folder {name} contains no image")
        files += [(op.join(root, name, k), f"{name}/{k}", label)
                  for k in images]
    return files, class_names


def scan_class_labels(root):
    """Map the tile ids of a class dataset to their label.

    Returns
    -------
    labels : dict
        Dictionary tile_id -> class index
    class_names : list
        Sorted class names
    """
    files, class_names = scan_class_dataset(root)
    labels = {make_tile_id(s): lab for _, s, lab in files}
    return labels, class_names


def load_class_dataset(root, verbose=None):
    """Load a folder-per-class dataset.

    Parameters
    ----------
    root : string
        Folder containing one sub-folder per class, each one holding PNG or
        TIFF images (e.g NCT-CRC-HE-100K layout)

    Returns
    -------
    dataset : LabeledDataset
        Deterministically ordered dataset (classes then files in
        lexicographic order)
    """
    set_log_level(verbose)
    logger.info(f"-> Loading class dataset {root}")
    files, class_names = scan_class_dataset(root)
    tiles, labels = [], []
    for path, source_id, label in files:
        img = read_image(path)
        if img.shape[0] != img.shape[1]:
            raise ItemError(path, f"tile must be square, got {img.shape}")
        tiles += [Tile(pixels=img, source_id=source_id)]
        labels += [label]
    logger.info(f"    {len(tiles)} tiles in {len(class_names)} classes "
                f"({', '.join(class_names)})")
    return LabeledDataset(tiles=tiles, labels=np.array(labels),
                          class_names=class_names)


def load_patient_manifest(path, verbose=None):
    """Load a patient manifest.

    Parameters
    ----------
    path : string
        CSV file with the header `patient_id,image_path,mpp`. Relative image
        paths are resolved against the folder of the manifest

    Returns
    -------
    manifest : PatientManifest
        The manifest, in file order
    """
    set_log_level(verbose)
    if not op.isfile(path):
        raise IoError(f"manifest not found ({path})")
    df = pd.read_csv(path, dtype={'patient_id': str, 'image_path': str})
    if list(df.columns) != ['patient_id', 'image_path', 'mpp']:
        raise InvalidDataset(f"{path} header must be patient_id,image_path,mpp"
                             f" (got {','.join(df.columns)})")
    if df['patient_id'].isna().any() or (df['patient_id'].str.strip() == ''
                                         ).any():
        raise InvalidDataset(f"empty patient id in {path}")
    mpp = pd.to_numeric(df['mpp'], errors='coerce').to_numpy(dtype=float)
    if not all(math.isfinite(k) and k > 0 for k in mpp):
        raise InvalidDataset(f"mpp values must be finite and positive in "
                             f"{path}")
    folder = op.dirname(op.abspath(path))
    paths = [k if op.isabs(k) else op.join(folder, k)
             for k in df['image_path']]
    logger.info(f"-> Manifest {path} : {len(df)} images, "
                f"{df['patient_id'].nunique()} patients")
    return PatientManifest(patient_ids=list(df['patient_id']),
                           image_paths=paths, mpp=mpp)
