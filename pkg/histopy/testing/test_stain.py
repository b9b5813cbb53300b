"""Test stain normalization."""
import numpy as np
import pytest

from histopy.errors import InvalidInput, InsufficientTissue, DegenerateStains
from histopy.stain import (rgb_to_od, od_to_rgb, estimate_stain_basis,
                           normalize_to_reference, make_stain_basis,
                           default_reference, angular_error, OdImage)
from histopy.stain.macenko import H_REF, E_REF

# seeded instances of the randomized checks
N_CLOUDS = 100
N_SHUFFLES = 10
N_IMAGES = 100


def _concentrations(n, rng, noise=0.01):
    """Concentrations with pure hematoxylin, pure eosin and mixed pixels."""
    mag = rng.uniform(.5, 1., size=n)
    kind = rng.integers(0, 3, size=n)
    frac = np.where(kind == 0, 1., np.where(kind == 1, 0.,
                                            rng.uniform(.2, .8, size=n)))
    conc = np.c_[mag * frac, mag * (1. - frac)].T
    conc += noise * rng.standard_normal(conc.shape) * (conc > 0)
    return np.maximum(conc, 0.)


def _od_cloud(vectors, n=10000, seed=0, noise=0.01):
    rng = np.random.default_rng(seed)
    od = (np.asarray(vectors) @ _concentrations(n, rng, noise)).T
    return OdImage(pixels=od.reshape(100, n // 100, 3))


def _generators():
    return make_stain_basis([H_REF, E_REF], (1., 1.)).vectors


# -----------------------------------------------------------------------------
# optical density


def test_rgb_to_od_values():
    """Test the OD transform on known pixels."""
    img = np.array([[[254, 254, 254], [0, 0, 0], [127, 127, 127]]],
                   dtype=np.uint8)
    od = rgb_to_od(img).pixels
    np.testing.assert_allclose(od[0, 0], 0., atol=1e-12)
    np.testing.assert_allclose(od[0, 1], 2.40654, atol=1e-5)
    np.testing.assert_allclose(od[0, 2], 0.29989, atol=1e-5)
    assert np.isfinite(od).all() and (od >= 0).all()


def test_rgb_to_od_monotone():
    """Test that the OD decreases with the channel value."""
    v = np.arange(0, 255, dtype=np.uint8)
    od = rgb_to_od(np.repeat(v[None, :, None], 3, axis=2)).pixels[0, :, 0]
    assert np.all(np.diff(od) < 0)


def test_rgb_to_od_errors():
    with pytest.raises(InvalidInput):
        rgb_to_od(np.zeros((0, 0, 3), dtype=np.uint8))
    with pytest.raises(InvalidInput):
        rgb_to_od(np.zeros((4, 4), dtype=np.uint8))


# -----------------------------------------------------------------------------
# stain basis estimation


def test_estimate_recovers_generators():
    """Test the angular recovery of Beer-Lambert synthesized clouds."""
    gen = _generators()
    n_ok = 0
    for seed in range(N_CLOUDS):
        b = estimate_stain_basis(_od_cloud(gen, seed=seed, noise=.05),
                                 beta=0.02)
        n_ok += max(angular_error(b.vectors[:, k], gen[:, k]) for k in
                    range(2)) < 2.
    assert n_ok >= .98 * N_CLOUDS
    basis = estimate_stain_basis(_od_cloud(gen), beta=0.02)
    # basis invariants
    np.testing.assert_allclose(np.linalg.norm(basis.vectors, axis=0), 1.,
                               atol=1e-9)
    assert (basis.vectors >= 0).all()
    assert basis.vectors[2, 0] >= basis.vectors[2, 1]
    assert (basis.max_concentrations > 0).all()


@pytest.mark.parametrize('seed', range(N_SHUFFLES))
def test_estimate_pixel_order(seed):
    """Test that the estimated basis does not depend on the pixel order."""
    od = _od_cloud(_generators(), seed=100 + seed)
    flat = od.flat()
    perm = np.random.default_rng(seed).permutation(len(flat))
    od_perm = OdImage(pixels=flat[perm].reshape(od.pixels.shape))
    b1 = estimate_stain_basis(od, beta=0.02)
    b2 = estimate_stain_basis(od_perm, beta=0.02)
    np.testing.assert_array_equal(b1.vectors, b2.vectors)
    np.testing.assert_array_equal(b1.max_concentrations,
                                  b2.max_concentrations)


def test_estimate_errors():
    """Test the failures of the stain basis estimation."""
    # background only
    od = OdImage(pixels=np.full((20, 20, 3), 0.05))
    with pytest.raises(InsufficientTissue):
        estimate_stain_basis(od, beta=0.15)
    # single stain ray
    c = np.random.default_rng(0).uniform(.5, 1.5, size=400)
    ray = (np.asarray(H_REF)[:, None] * c).T.reshape(20, 20, 3)
    with pytest.raises(DegenerateStains):
        estimate_stain_basis(OdImage(pixels=ray))


# -----------------------------------------------------------------------------
# normalization


def _reference_image(basis, seed=0, shape=(100, 100)):
    rng = np.random.default_rng(seed)
    conc = _concentrations(shape[0] * shape[1], rng, noise=0.)
    od = (basis.vectors @ conc).T
    return od_to_rgb(od).reshape(shape + (3,))


@pytest.mark.parametrize('seed', range(N_IMAGES))
def test_normalize_identity(seed):
    """Test that equal bases leave the image untouched."""
    ref = default_reference()
    img = _reference_image(ref, seed=seed)
    out = normalize_to_reference(img, ref, ref)
    assert out.dtype == np.uint8 and out.shape == img.shape
    assert np.abs(out.astype(int) - img.astype(int)).max() <= 2


def test_normalize_white():
    ref = default_reference()
    white = np.full((16, 16, 3), 255, dtype=np.uint8)
    out = normalize_to_reference(white, ref, ref)
    # OD 0 is reconstructed as io - 1
    assert (out == 254).all()
    np.testing.assert_array_equal(od_to_rgb(np.zeros((2, 3)), io=200), 199)


@pytest.mark.parametrize('seed', range(N_IMAGES))
def test_normalize_idempotent(seed):
    """Test that a second normalization changes nothing."""
    ref = default_reference()
    src = make_stain_basis([(0.55, 0.75, 0.37), (0.15, 0.95, 0.25)],
                           (1.5, 1.2))
    img = _reference_image(src, seed=seed)
    once = normalize_to_reference(img, src, ref)
    twice = normalize_to_reference(once, ref, ref)
    assert np.abs(once.astype(int) - twice.astype(int)).max() <= 2


@pytest.mark.parametrize('seed', range(N_IMAGES))
def test_normalize_round_trip(seed):
    """Test the normalization of a tile stained with a perturbed basis."""
    ref_gen = _generators()
    src_gen = make_stain_basis([(0.55, 0.75, 0.37), (0.15, 0.95, 0.25)],
                               (1., 1.)).vectors
    rng = np.random.default_rng(seed)
    conc = _concentrations(64 * 64, rng, noise=0.)
    ref_img = od_to_rgb((ref_gen @ conc).T).reshape(64, 64, 3)
    src_img = od_to_rgb((src_gen @ conc).T).reshape(64, 64, 3)
    reference = estimate_stain_basis(rgb_to_od(ref_img), beta=0.02)
    source = estimate_stain_basis(rgb_to_od(src_img), beta=0.02)
    out = normalize_to_reference(src_img, source, reference)
    mae = np.abs(out.astype(float) - ref_img.astype(float)).mean()
    assert mae < 5.


def test_make_stain_basis():
    """Test the ordering and normalization of user provided bases."""
    basis = make_stain_basis([E_REF, H_REF], (1., 2.))
    assert angular_error(basis.vectors[:, 0], H_REF) < 1e-6
    np.testing.assert_array_equal(basis.max_concentrations, [2., 1.])
    with pytest.raises(InvalidInput):
        make_stain_basis([(-.1, 1., 0.), E_REF], (1., 1.))
    with pytest.raises(InvalidInput):
        make_stain_basis([H_REF, E_REF], (0., 1.))
