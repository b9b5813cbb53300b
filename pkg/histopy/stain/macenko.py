"""Macenko stain normalization.

The stain vectors of an H&E image are estimated from its optical density
(OD) cloud by projecting the tissue pixels on the plane spanned by the two
main principal directions and taking robust extreme angles [1]_. The image is
then unmixed into hematoxylin / eosin concentrations and rebuilt with the
stain vectors of a reference image.

References
----------
.. [1] Macenko, M., Niethammer, M., Marron, J. S., Borland, D., Woosley,
   J. T., Guan, X., ... & Thomas, N. E. (2009). A method for normalizing
   histology slides for quantitative analysis. IEEE International Symposium
   on Biomedical Imaging, 1107-1110.
"""
import logging
from dataclasses import dataclass

import numpy as np

from histopy.errors import InvalidInput, InsufficientTissue, DegenerateStains
from histopy.io.syslog import verbose


logger = logging.getLogger('histopy')

# canonical hematoxylin / eosin OD directions
H_REF = (0.65, 0.70, 0.29)
E_REF = (0.07, 0.99, 0.11)
MAX_C_REF = (1.9705, 1.0308)
MIN_TISSUE_PIXELS = 50


@dataclass(frozen=True)
class OdImage:
    """Optical density image.

    Attributes
    ----------
    pixels : array_like
        OD values of shape (height, width, 3), finite and >= 0
    io : int
        Transmitted-light reference intensity
    """

    pixels: np.ndarray
    io: int = 255

    def flat(self):
        """Get the OD values as an array of shape (n_pixels, 3)."""
        return self.pixels.reshape(-1, 3)


@dataclass(frozen=True)
class StainBasis:
    """Stain basis of an image.

    Attributes
    ----------
    vectors : array_like
        Array of shape (3, 2). Columns are the unit hematoxylin and eosin OD
        directions
    max_concentrations : array_like
        99th percentile concentration of each stain, shape (2,)
    """

    vectors: np.ndarray
    max_concentrations: np.ndarray


def make_stain_basis(vectors, max_concentrations):
    """Build a stain basis, normalizing and ordering the stain vectors.

    Parameters
    ----------
    vectors : array_like
        Two stain OD directions, either of shape (3, 2) (columns) or (2, 3)
        (rows)
    max_concentrations : array_like
        Reference maximum concentration of each stain, in the order of the
        provided vectors

    Returns
    -------
    basis : StainBasis
        The stain basis, hematoxylin first
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.shape == (2, 3):
        v = v.T
    if v.shape != (3, 2):
        raise InvalidInput(f"stain vectors must be (3, 2), got {v.shape}")
    mc = np.asarray(max_concentrations, dtype=np.float64).ravel()
    if (mc.shape != (2,)) or np.any(mc <= 0) or np.any(v < 0):
        raise InvalidInput("stain vectors must be non-negative and maximum "
                           "concentrations positive")
    norms = np.linalg.norm(v, axis=0)
    if np.any(norms == 0):
        raise DegenerateStains("null stain vector")
    v = v / norms
    if v[2, 0] < v[2, 1]:
        v, mc = v[:, ::-1], mc[::-1]
    return StainBasis(vectors=np.ascontiguousarray(v),
                      max_concentrations=mc.copy())


def default_reference():
    """Get the built-in reference basis (canonical H&E directions)."""
    return make_stain_basis([H_REF, E_REF], MAX_C_REF)


def _check_rgb(image):
    image = np.asarray(image)
    if (image.ndim != 3) or (image.shape[-1] != 3) or (image.size == 0):
        raise InvalidInput("expected a non-empty (height, width, 3) RGB image"
                           f", got shape {image.shape}")
    return image


def rgb_to_od(image, io=255):
    """Convert an RGB image into optical density.

    Parameters
    ----------
    image : array_like
        RGB image of shape (height, width, 3) with values in [0, 255]
    io : int | 255
        Transmitted-light reference intensity

    Returns
    -------
    od : OdImage
        OD = -log10((v + 1) / io). The +1 guard keeps black pixels finite and
        values are clamped at 0 (v >= io - 1 is treated as pure background)
    """
    image = _check_rgb(image)
    if io <= 0:
        raise InvalidInput("io must be positive")
    od = -np.log10((image.astype(np.float64) + 1.) / io)
    np.maximum(od, 0., out=od)
    return OdImage(pixels=od, io=int(io))


def od_to_rgb(od, io=255):
    """Convert optical density back into an RGB uint8 image.

    Parameters
    ----------
    od : array_like
        OD values of shape (..., 3)
    io : int | 255
        Transmitted-light reference intensity

    Returns
    -------
    image : array_like
        io * 10 ** (-od) - 1, clamped to [0, 255] and rounded. The -1 undoes
        the +1 guard of :func:`rgb_to_od`, so OD 0 (background, including
        pure white 255) comes back as io - 1 = 254
    """
    rgb = io * np.power(10., -np.asarray(od, dtype=np.float64)) - 1.
    return np.clip(np.round(rgb), 0, 255).astype(np.uint8)


def _symmetric_eig(cov):
    """Eigen-decomposition of a symmetric matrix, largest eigenvalue first.

    The sign of each eigenvector is fixed so that its largest-magnitude entry
    is positive.
    """
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    for k in range(eigvecs.shape[1]):
        if eigvecs[np.abs(eigvecs[:, k]).argmax(), k] < 0:
            eigvecs[:, k] *= -1
    return eigvals, eigvecs


def stain_concentrations(od, vectors):
    """Unmix OD pixels into stain concentrations.

    Parameters
    ----------
    od : array_like
        OD pixels of shape (n_pixels, 3)
    vectors : array_like
        Stain vectors of shape (3, 2)

    Returns
    -------
    conc : array_like
        Least-squares concentrations with negative values clamped to 0, of
        shape (2, n_pixels)
    """
    conc = np.linalg.lstsq(vectors, np.asarray(od).T, rcond=None)[0]
    return np.maximum(conc, 0.)


def estimate_stain_basis(od, alpha=1., beta=0.15):
    """Estimate the stain basis of an image.

    Parameters
    ----------
    od : OdImage
        Optical density image
    alpha : float | 1.
        Percentile used for the robust extreme angles, in (0, 50)
    beta : float | 0.15
        OD threshold. Pixels with any channel below `beta` are discarded as
        background

    Returns
    -------
    basis : StainBasis
        Estimated stain basis (hematoxylin first)
    """
    assert 0 < alpha < 50, "alpha should be in (0, 50)"
    assert beta > 0, "beta should be positive"
    od_all = od.flat()
    # pixel order must not matter : sort rows lexicographically
    od_all = od_all[np.lexsort(od_all.T[::-1])]
    od_hat = od_all[~np.any(od_all < beta, axis=1)]
    if od_hat.shape[0] < MIN_TISSUE_PIXELS:
        raise InsufficientTissue(
            f"{od_hat.shape[0]} tissue pixels above OD={beta} (at least "
            f"{MIN_TISSUE_PIXELS} required)")

    # -------------------------------------------------------------------------
    # plane of the two main principal directions
    eigvals, eigvecs = _symmetric_eig(np.cov(od_hat.T))
    if eigvals[1] <= max(eigvals[0], 0.) * 1e-10:
        raise DegenerateStains("the OD cloud spans a single stain direction")
    plane = eigvecs[:, 0:2]
    proj = od_hat @ plane
    phi = np.arctan2(proj[:, 1], proj[:, 0])

    # -------------------------------------------------------------------------
    # robust extreme angles mapped back to OD directions
    phi_min, phi_max = np.percentile(phi, [alpha, 100 - alpha])
    v_min = plane @ np.array([np.cos(phi_min), np.sin(phi_min)])
    v_max = plane @ np.array([np.cos(phi_max), np.sin(phi_max)])
    vectors = np.maximum(np.c_[v_min, v_max], 0.)
    norms = np.linalg.norm(vectors, axis=0)
    if np.any(norms < 1e-12):
        raise DegenerateStains("a stain vector vanished after clamping")
    vectors /= norms
    # hematoxylin has the larger blue OD coefficient
    if vectors[2, 0] < vectors[2, 1]:
        vectors = vectors[:, ::-1]

    # -------------------------------------------------------------------------
    # reference concentrations
    conc = stain_concentrations(od_all, vectors)
    max_c = np.percentile(conc, 99, axis=1)
    if np.any(max_c <= 0):
        raise DegenerateStains("null 99th percentile stain concentration")
    logger.debug(f"    Stain basis estimated from {od_hat.shape[0]} pixels")
    return StainBasis(vectors=np.ascontiguousarray(vectors),
                      max_concentrations=max_c)


def normalize_to_reference(image, source, reference, io=255):
    """Normalize an RGB image to a reference stain basis.

    Parameters
    ----------
    image : array_like
        RGB uint8 image of shape (height, width, 3)
    source : StainBasis
        Stain basis estimated on `image`
    reference : StainBasis
        Target stain basis
    io : int | 255
        Transmitted-light reference intensity

    Returns
    -------
    norm : array_like
        Normalized RGB uint8 image. Background pixels (OD 0) come out as
        io - 1, see :func:`od_to_rgb`
    """
    image = _check_rgb(image)
    od = rgb_to_od(image, io=io).flat()
    conc = stain_concentrations(od, source.vectors)
    conc *= (reference.max_concentrations / source.max_concentrations)[:, None]
    return od_to_rgb((reference.vectors @ conc).T, io=io).reshape(image.shape)


@verbose
def normalize_image(image, reference=None, alpha=1., beta=0.15, io=255,
                    verbose=None):
    """Estimate the stain basis of an image and normalize it.

    Parameters
    ----------
    image : array_like
        RGB uint8 image of shape (height, width, 3)
    reference : StainBasis | None
        Target basis. Uses :func:`default_reference` if None
    alpha, beta, io : float, float, int
        See :func:`estimate_stain_basis` and :func:`rgb_to_od`

    Returns
    -------
    norm : array_like
        Normalized RGB uint8 image
    source : StainBasis
        Basis estimated on the input image
    """
    if reference is None:
        reference = default_reference()
    source = estimate_stain_basis(rgb_to_od(image, io=io), alpha=alpha,
                                  beta=beta)
    return normalize_to_reference(image, source, reference, io=io), source


def angular_error(u, v):
    """Angle in degrees between two vectors."""
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    cos = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.degrees(np.arccos(np.clip(cos, -1., 1.))))
