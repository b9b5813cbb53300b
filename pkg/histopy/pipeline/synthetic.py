"""Synthetic H&E-like datasets.

Tiles are rendered with the Beer-Lambert law : every class has its own
stain concentrations and oriented stripe texture. The source domain differs
from the target domain by a rotation of the stain vectors around the gray
axis (a hue shift) and a higher texture frequency. Patient images are grids
of target-domain tiles drawn from a patient-specific class mixture, and the
patient targets are noisy functions of the realized class proportions.
A held-out set of target-domain tiles, rendered from other seeds than the
fine-tuning tiles, serves the tissue classification experiment.
"""
import logging
import os.path as op
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import expit

from histopy.config import (CLASS_NAMES, EXPRESSION_GENES, MUTATION_GENES,
                            dump_config)
from histopy.errors import ConfigError, InvalidDataset
from histopy.io.syslog import set_log_level
from histopy.io.write import make_dirs, write_image, write_csv, write_text
from histopy.stain import od_to_rgb, default_reference
from histopy.tiling import rescale_to_mpp
from histopy.utils import make_rng


logger = logging.getLogger('histopy')

DOMAINS = {'source': 0, 'target': 1, 'patients': 2, 'eval': 3}
# resolution at which the patient images are rendered
RENDER_MPP = 0.25
# smallest accepted KS distance between source and target pixel values
KS_FLOOR = 0.05


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic datasets.

    Attributes
    ----------
    n_classes : int | 9
        Number of tissue classes
    tiles_per_class : int | 200
        Target-domain tiles per class
    source_tiles_per_class : int | 200
        Source-domain tiles per class
    eval_tiles_per_class : int | 100
        Held-out target-domain tiles per class (tissue experiment)
    tile_size : int | 32
        Tile side in pixels
    n_patients : int | 60
        Number of patients
    patient_grid : int | 4
        Patient images hold patient_grid x patient_grid tissue tiles plus a
        row of background
    hue_shift : float | 25.
        Rotation (degrees) of the source stain vectors around the gray axis
    freq_offset : float | 0.5
        Relative increase of the source texture frequencies
    noise : float | 0.05
        Standard deviation of the per-pixel concentration noise
    expression_noise : float | 0.1
        Standard deviation of the log-expression noise
    seed : int | 0
        Root seed
    """

    n_classes: int = 9
    tiles_per_class: int = 200
    source_tiles_per_class: int = 200
    eval_tiles_per_class: int = 100
    tile_size: int = 32
    n_patients: int = 60
    patient_grid: int = 4
    hue_shift: float = 25.
    freq_offset: float = .5
    noise: float = .05
    expression_noise: float = .1
    seed: int = 0
    expression_genes: tuple = field(default=tuple(EXPRESSION_GENES))
    mutation_genes: tuple = field(default=tuple(MUTATION_GENES))

    def __post_init__(self):
        if not (2 <= self.n_classes <= len(CLASS_NAMES)):
            raise ConfigError(f"must be in [2, {len(CLASS_NAMES)}]",
                              field='synthetic.n_classes')
        for f in ('tiles_per_class', 'source_tiles_per_class',
                  'eval_tiles_per_class', 'n_patients', 'patient_grid'):
            if getattr(self, f) < 1:
                raise ConfigError("must be >= 1", field=f"synthetic.{f}")
        if self.tile_size < 8:
            raise ConfigError("must be >= 8", field='synthetic.tile_size')
        if (self.tile_size % 2) != 0:
            raise ConfigError("must be even (images are stored at half "
                              "resolution)", field='synthetic.tile_size')

    @property
    def class_names(self):
        return CLASS_NAMES[0:self.n_classes]

    @classmethod
    def from_config(cls, cfg):
        kw = {k: cfg[f"synthetic.{k}"] for k in (
            'n_classes', 'tiles_per_class', 'source_tiles_per_class',
            'eval_tiles_per_class', 'tile_size', 'n_patients', 'patient_grid',
            'hue_shift', 'freq_offset', 'noise', 'expression_noise')}
        return cls(seed=cfg['run.seed'], **kw)


###############################################################################
###############################################################################
#                                 RENDERING
###############################################################################
###############################################################################


def class_parameters(spec):
    """Draw the class-specific parameters.

    Returns
    -------
    params : dict
        'conc_h', 'conc_e' (mean stain concentrations), 'freq' (cycles per
        tile), 'angle' (stripe orientation) of shape (n_classes,),
        'expr_mean' (log-expression mean, shape (n_genes, n_classes)),
        'mut_coef' and 'mut_bias' (mutation logit coefficients)
    """
    rng = make_rng(spec.seed, 1000)
    c = spec.n_classes
    return dict(
        conc_h=rng.uniform(.3, 1.5, c), conc_e=rng.uniform(.2, 1.2, c),
        freq=rng.permutation(np.linspace(1., 7., c)),
        angle=rng.uniform(0., np.pi, c),
        expr_mean=rng.uniform(.5, 4., (len(spec.expression_genes), c)),
        mut_coef=rng.uniform(-4., 4., (len(spec.mutation_genes), c)),
        mut_bias=rng.uniform(-1., 1., len(spec.mutation_genes)))


def _rotate(v, degrees):
    """Rotate a vector around the gray axis (Rodrigues formula)."""
    a = np.ones((3,)) / np.sqrt(3.)
    t = np.radians(degrees)
    r = v * np.cos(t) + np.cross(a, v) * np.sin(t) + a * (a @ v) * (
        1. - np.cos(t))
    r = np.maximum(r, 0.)
    return r / np.linalg.norm(r)


def domain_stains(spec, domain):
    """Stain vectors (3, 2) used to render a domain."""
    ref = default_reference().vectors
    if domain != 'source':
        return ref
    return np.c_[_rotate(ref[:, 0], spec.hue_shift),
                 _rotate(ref[:, 1], spec.hue_shift)]


def render_tile(spec, params, k, domain, rng):
    """Render a tile of class k.

    Parameters
    ----------
    spec : SyntheticSpec
        Synthetic parameters
    params : dict
        Class parameters (see `class_parameters`)
    k : int
        Class index
    domain : {'source', 'target', 'patients', 'eval'}
        Rendering domain. Every domain but the source one uses the target
        stains
    rng : numpy.random.Generator
        Generator of the tile variations

    Returns
    -------
    tile : array_like
        RGB uint8 array of shape (tile_size, tile_size, 3)
    """
    n = spec.tile_size
    yy, xx = np.mgrid[0:n, 0:n] / n
    freq = params['freq'][k] * (1. + .1 * rng.standard_normal())
    if domain == 'source':
        freq *= 1. + spec.freq_offset
    angle = params['angle'][k] + .2 * rng.standard_normal()
    phase = rng.uniform(0., 2. * np.pi)
    scale = 1. + .1 * rng.standard_normal()
    p = .5 + .5 * np.sin(2. * np.pi * freq * (xx * np.cos(angle) + yy *
                                              np.sin(angle)) + phase)
    c_h = params['conc_h'][k] * (.3 + .7 * p) * scale
    c_e = params['conc_e'][k] * (.3 + .7 * (1. - p)) * scale
    c_h = np.maximum(c_h + spec.noise * rng.standard_normal((n, n)), 0.)
    c_e = np.maximum(c_e + spec.noise * rng.standard_normal((n, n)), 0.)
    vectors = domain_stains(spec, domain)
    od = c_h[..., np.newaxis] * vectors[:, 0] + c_e[..., np.newaxis] * \
        vectors[:, 1]
    return od_to_rgb(od)


def render_background(spec, rng):
    """Near-white tile (slide background)."""
    n = spec.tile_size
    return rng.integers(235, 251, (n, n, 3)).astype(np.uint8)


###############################################################################
###############################################################################
#                                  TARGETS
###############################################################################
###############################################################################


def expression_mean(params, proportions):
    """Log-expression mean of each gene for given class proportions."""
    return params['expr_mean'] @ np.asarray(proportions, dtype=float)


def mutation_probability(params, proportions):
    """Mutation probability of each gene for given class proportions."""
    return expit(params['mut_coef'] @ np.asarray(proportions, dtype=float) +
                 params['mut_bias'])


def patient_targets(spec, params, proportions, rng):
    """Draw the expression values and mutation flags of a patient.

    ln(expression + 1) is the class-mixture mean plus a gaussian noise of
    standard deviation `expression_noise`, and mutation flags are Bernoulli
    draws of `mutation_probability`.

    Returns
    -------
    expression : array_like
        Non-negative expression values, one per expression gene
    flags : array_like
        0 / 1 flags, one per mutation gene
    """
    log_expr = expression_mean(params, proportions) + \
        spec.expression_noise * rng.standard_normal(
            len(spec.expression_genes))
    expression = np.expm1(np.maximum(log_expr, 0.))
    prob = mutation_probability(params, proportions)
    flags = (rng.random(len(spec.mutation_genes)) < prob).astype(int)
    return expression, flags


###############################################################################
###############################################################################
#                                 GENERATION
###############################################################################
###############################################################################


def _write_class_dataset(spec, params, root, domain, n_per_class):
    paths = []
    for k, name in enumerate(spec.class_names):
        for i in range(n_per_class):
            rng = make_rng(spec.seed, DOMAINS[domain], k, i)
            path = op.join(root, name, f"{name}_{i:04d}.png")
            write_image(path, render_tile(spec, params, k, domain, rng))
            paths += [path]
    logger.info(f"    {len(paths)} {domain} tiles written to {root}")
    return paths


def make_patient_image(spec, params, p):
    """Render the image of patient p.

    Returns
    -------
    image : array_like
        RGB uint8 image at RENDER_MPP
    proportions : array_like
        Realized class proportions of the tissue tiles
    """
    rng = make_rng(spec.seed, DOMAINS['patients'], p)
    mixture = rng.dirichlet(.5 * np.ones((spec.n_classes,)))
    g, n = spec.patient_grid, spec.tile_size
    cells = rng.choice(spec.n_classes, size=(g, g), p=mixture)
    image = np.zeros(((g + 1) * n, g * n, 3), dtype=np.uint8)
    for gy in range(g):
        for gx in range(g):
            image[gy * n:(gy + 1) * n, gx * n:(gx + 1) * n] = render_tile(
                spec, params, cells[gy, gx], 'patients', rng)
    for gx in range(g):
        image[g * n:, gx * n:(gx + 1) * n] = render_background(spec, rng)
    proportions = np.bincount(cells.ravel(), minlength=spec.n_classes) / (
        g * g)
    return image, proportions


def _domain_sample(spec, params, domain, n_per_class=20):
    """Re-render the first tiles of every class of a domain."""
    n = min(n_per_class, spec.tiles_per_class, spec.source_tiles_per_class)
    return np.stack([render_tile(spec, params, k, domain, make_rng(
        spec.seed, DOMAINS[domain], k, i)) for k in range(spec.n_classes)
        for i in range(n)])


def check_domain_shift(source, target, floor=KS_FLOOR, seed=0,
                       n_samples=20000):
    """Kolmogorov-Smirnov distance between the channels of two domains.

    Parameters
    ----------
    source, target : array_like
        RGB uint8 pixels of each domain (any shape ending with 3)
    floor : float | 0.05
        Smallest accepted distance (largest over the channels)
    seed : int | 0
        Seed of the pixel subsampling
    n_samples : int | 20000
        Maximum number of pixels per domain

    Returns
    -------
    distances : array_like
        KS distance of each channel
    """
    rng = make_rng(seed, 3000)
    src = np.asarray(source).reshape(-1, 3)
    tgt = np.asarray(target).reshape(-1, 3)
    src = src[rng.permutation(len(src))[:n_samples]]
    tgt = tgt[rng.permutation(len(tgt))[:n_samples]]
    dist = np.array([stats.ks_2samp(src[:, c], tgt[:, c]).statistic for c in
                     range(3)])
    if dist.max() < floor:
        raise InvalidDataset(f"source and target domains are too close "
                             f"(KS={dist.max():.3f} < {floor})")
    return dist


def synthetic_config(spec):
    """Configuration of a generated tree (paths relative to the tree)."""
    values = {
        'paths.source_dataset': 'source', 'paths.target_dataset': 'target',
        'paths.eval_dataset': 'eval',
        'paths.manifest': 'manifest.csv', 'paths.expression':
        'expression.csv', 'paths.mutation': 'mutation.csv', 'paths.out': '.',
        'network.n_classes': spec.n_classes, 'tiling.target_mpp': RENDER_MPP,
        'tiling.tile_size': spec.tile_size, 'tiling.stride': spec.tile_size}
    for k in ('n_classes', 'tiles_per_class', 'source_tiles_per_class',
              'eval_tiles_per_class', 'tile_size', 'n_patients',
              'patient_grid', 'hue_shift', 'freq_offset', 'noise',
              'expression_noise'):
        values[f"synthetic.{k}"] = getattr(spec, k)
    values['run.seed'] = spec.seed
    return values


def cmd_gen_synthetic(spec, out_dir, verbose=None):
    """Generate the synthetic datasets.

    The output folder receives :

        * source/<CLASS>/*.png : source-domain class dataset
        * target/<CLASS>/*.png : target-domain class dataset (fine-tuning)
        * eval/<CLASS>/*.png : held-out target-domain class dataset
        * patients/<patient>.png : patient images (mixed resolutions)
        * manifest.csv : patient_id,image_path,mpp
        * expression.csv / mutation.csv : patient targets
        * config.toml : configuration pointing to the files above

    Parameters
    ----------
    spec : SyntheticSpec
        Synthetic parameters
    out_dir : string
        Output folder

    Returns
    -------
    files : dict
        Paths of the generated files
    """
    set_log_level(verbose)
    logger.info(f"-> Generating synthetic datasets in {out_dir}")
    make_dirs(out_dir)
    params = class_parameters(spec)
    files = dict()
    files['source'] = _write_class_dataset(
        spec, params, op.join(out_dir, 'source'), 'source',
        spec.source_tiles_per_class)
    files['target'] = _write_class_dataset(
        spec, params, op.join(out_dir, 'target'), 'target',
        spec.tiles_per_class)
    files['eval'] = _write_class_dataset(
        spec, params, op.join(out_dir, 'eval'), 'eval',
        spec.eval_tiles_per_class)
    shift = check_domain_shift(*[_domain_sample(spec, params, d) for d in
                                 ('source', 'target')], seed=spec.seed)
    logger.info(f"    domain shift : KS distances "
                f"{np.round(shift, 3).tolist()}")

    # -------------------------------------------------------------------------
    # patients
    rows, expr, mut = [], [], []
    for p in range(spec.n_patients):
        pid = f"P{p:03d}"
        image, prop = make_patient_image(spec, params, p)
        # every other patient is stored at half resolution
        mpp = RENDER_MPP if p % 2 == 0 else 2 * RENDER_MPP
        image = rescale_to_mpp(image, RENDER_MPP, mpp)
        rel = op.join('patients', f"{pid}.png")
        write_image(op.join(out_dir, rel), image)
        e, m = patient_targets(spec, params, prop,
                               make_rng(spec.seed, 4000, p))
        rows += [(pid, rel, mpp)]
        expr += [[pid] + list(e)]
        mut += [[pid] + list(m)]
    write_csv(op.join(out_dir, 'manifest.csv'), pd.DataFrame(
        rows, columns=['patient_id', 'image_path', 'mpp']))
    write_csv(op.join(out_dir, 'expression.csv'), pd.DataFrame(
        expr, columns=['patient_id'] + list(spec.expression_genes)))
    write_csv(op.join(out_dir, 'mutation.csv'), pd.DataFrame(
        mut, columns=['patient_id'] + list(spec.mutation_genes)))
    write_text(op.join(out_dir, 'config.toml'),
               dump_config(synthetic_config(spec)))
    logger.info(f"    {spec.n_patients} patients written")
    files.update({k: op.join(out_dir, f"{k}.csv") for k in (
        'manifest', 'expression', 'mutation')})
    files['config'] = op.join(out_dir, 'config.toml')
    return files
