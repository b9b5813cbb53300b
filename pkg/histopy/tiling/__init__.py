"""Tiling functions."""
from .tiles import (Tile, make_tile_id, rescale_to_mpp, tile_image,  # noqa
                    content_filter)
