"""Stain normalization functions."""
from .macenko import (OdImage, StainBasis, make_stain_basis,  # noqa
                      default_reference, rgb_to_od, od_to_rgb,
                      estimate_stain_basis, stain_concentrations,
                      normalize_to_reference, normalize_image, angular_error)
