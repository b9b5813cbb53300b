"""Tiling of histology images."""
import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image

from histopy.errors import InvalidInput


logger = logging.getLogger('histopy')


@dataclass(frozen=True)
class Tile:
    """Square RGB patch with its provenance.

    Attributes
    ----------
    pixels : array_like
        uint8 raster of shape (tile_size, tile_size, 3)
    source_id : str
        Identifier of the parent image
    grid_xy : tuple
        Integer tile coordinates (column, row) in the tiling grid
    patient_id : str | None
        Patient identifier (None for class datasets)
    """

    pixels: np.ndarray
    source_id: str
    grid_xy: tuple = (0, 0)
    patient_id: str = None

    def __post_init__(self):
        px = self.pixels
        if (px.ndim != 3) or (px.shape[2] != 3) or (
                px.shape[0] != px.shape[1]):
            raise InvalidInput(f"tile raster must be (size, size, 3), got "
                               f"{px.shape}")

    @property
    def tile_id(self):
        """Identifier sorting in row-major order within a source image."""
        return make_tile_id(self.source_id, self.grid_xy)

    @property
    def size(self):
        return self.pixels.shape[0]


def make_tile_id(source_id, grid_xy=(0, 0)):
    """Build the identifier of a tile from its source and grid position."""
    gx, gy = grid_xy
    return f"{source_id}@{gy:05d}_{gx:05d}"


def _round_half_up(x):
    return int(np.floor(x + .5))


def rescale_to_mpp(image, source_mpp, target_mpp):
    """Rescale an image to a target resolution.

    Parameters
    ----------
    image : array_like
        RGB uint8 image of shape (height, width, 3)
    source_mpp : float
        Resolution of the image in microns per pixel
    target_mpp : float
        Target resolution in microns per pixel (e.g 0.25)

    Returns
    -------
    image : array_like
        Bilinearly resampled image with dimensions
        round(dim * source_mpp / target_mpp). The input is returned untouched
        when both resolutions are equal
    """
    for name, mpp in (('source_mpp', source_mpp), ('target_mpp', target_mpp)):
        if not (0 < mpp < 100):
            raise InvalidInput(f"{name} must be in (0, 100), got {mpp}")
    image = np.asarray(image)
    if source_mpp == target_mpp:
        return image
    factor = source_mpp / target_mpp
    h, w = image.shape[0:2]
    new_h, new_w = _round_half_up(h * factor), _round_half_up(w * factor)
    if (new_h == 0) or (new_w == 0):
        raise InvalidInput(f"rescaling {h}x{w} by {factor} gives an empty "
                           "image")
    pil = Image.fromarray(image.astype(np.uint8), mode='RGB')
    out = pil.resize((new_w, new_h), resample=Image.BILINEAR)
    logger.debug(f"    Rescaled {h}x{w} -> {new_h}x{new_w} ({source_mpp} -> "
                 f"{target_mpp} mpp)")
    return np.asarray(out, dtype=np.uint8)


def tile_image(image, tile_size=224, stride=224, source_id='',
               patient_id=None):
    """Cut an image into square tiles.

    Parameters
    ----------
    image : array_like
        RGB image of shape (height, width, 3)
    tile_size : int | 224
        Tile side in pixels
    stride : int | 224
        Step between two consecutive tiles
    source_id : str | ''
        Identifier of the image, stored in each tile
    patient_id : str | None
        Patient identifier, stored in each tile

    Returns
    -------
    tiles : list
        List of Tile in row-major order. Partial edge tiles are discarded and
        an image smaller than `tile_size` gives an empty list
    """
    if (tile_size < 1) or (stride < 1):
        raise InvalidInput("tile_size and stride must be >= 1")
    image = np.asarray(image)
    h, w = image.shape[0:2]
    tiles = []
    for gy, y in enumerate(range(0, h - tile_size + 1, stride)):
        for gx, x in enumerate(range(0, w - tile_size + 1, stride)):
            px = np.ascontiguousarray(image[y:y + tile_size, x:x + tile_size])
            tiles += [Tile(pixels=px, source_id=source_id, grid_xy=(gx, gy),
                           patient_id=patient_id)]
    return tiles


def content_filter(tile, white_threshold=220, max_white_fraction=0.5):
    """Decide whether a tile contains enough tissue.

    Parameters
    ----------
    tile : Tile | array_like
        Tile (or raster) to test
    white_threshold : int | 220
        A pixel is background when all its channels are >= this value
    max_white_fraction : float | 0.5
        Maximum tolerated fraction of background pixels, in (0, 1]

    Returns
    -------
    keep : bool
        False iff the background fraction strictly exceeds
        `max_white_fraction`
    """
    if not (0 < max_white_fraction <= 1):
        raise InvalidInput("max_white_fraction must be in (0, 1]")
    px = tile.pixels if isinstance(tile, Tile) else np.asarray(tile)
    white = np.all(px >= white_threshold, axis=-1)
    return bool(white.mean() <= max_white_fraction)
