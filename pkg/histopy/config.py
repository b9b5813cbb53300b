"""Configuration file.

Defaults are stored as flat dotted keys in the `CONFIG` dict. A TOML file
(nested tables are flattened) and command-line flags override them through
:func:`load_config`.
"""
import logging
import math
import os.path as op
import sys

from histopy.errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


logger = logging.getLogger('histopy')

CONFIG = dict()

# -----------------------------------------------------------------------------
# TISSUE CLASSES / GENES

# NCT-CRC-HE class codes (folder names), lexicographic order
CLASS_NAMES = ['ADI', 'BACK', 'DEB', 'LYM', 'MUC', 'MUS', 'NORM', 'STR', 'TUM']
# immune-related genes displayed as examples of expression prediction
EXPRESSION_GENES = ['CD274', 'CD3G', 'TNFRSF9', 'FGF7', 'CYTIP', 'RAC2',
                    'RHBDF2', 'CD53', 'SH2D1A']
# nine most frequently mutated genes in LUAD
MUTATION_GENES = ['STK11', 'TP53', 'LRP1B', 'NF1', 'FAT1', 'FAT4', 'KEAP1',
                  'EGFR', 'KRAS']

# -----------------------------------------------------------------------------
# PATHS

CONFIG['paths.source_dataset'] = ''
CONFIG['paths.target_dataset'] = ''
# held-out class dataset of the tissue experiment (disjoint from the
# fine-tuning tiles). Empty falls back to paths.target_dataset
CONFIG['paths.eval_dataset'] = ''
CONFIG['paths.manifest'] = ''
CONFIG['paths.expression'] = ''
CONFIG['paths.mutation'] = ''
CONFIG['paths.out'] = '.'

# -----------------------------------------------------------------------------
# NETWORK (reduced depthwise-separable backbone + add-on head)

CONFIG['network.widths'] = [16, 32, 64]
CONFIG['network.feature_dim'] = 64  # 2048 for full-size runs
CONFIG['network.n_classes'] = 9

# -----------------------------------------------------------------------------
# TRAINING

CONFIG['pretrain.lr'] = 1e-3
CONFIG['pretrain.epochs'] = 15
CONFIG['pretrain.batch_size'] = 128
CONFIG['finetune.lr_step1'] = 4e-4
CONFIG['finetune.epochs_step1'] = 20
CONFIG['finetune.lr_step2'] = 5e-5
CONFIG['finetune.epochs_step2'] = 10
CONFIG['finetune.batch_size'] = 128

# -----------------------------------------------------------------------------
# TILING

CONFIG['tiling.target_mpp'] = 0.25
CONFIG['tiling.tile_size'] = 224
CONFIG['tiling.stride'] = 224
CONFIG['tiling.white_threshold'] = 220
CONFIG['tiling.max_white_fraction'] = 0.5

# -----------------------------------------------------------------------------
# STAIN NORMALIZATION (Macenko)

CONFIG['stain.enabled'] = True
CONFIG['stain.normalize_class_datasets'] = False
CONFIG['stain.alpha'] = 1.
CONFIG['stain.beta'] = 0.15
CONFIG['stain.io'] = 255
# hematoxylin then eosin optical density directions (normalized on load)
CONFIG['stain.reference_vectors'] = [0.65, 0.70, 0.29, 0.07, 0.99, 0.11]
CONFIG['stain.reference_max_concentrations'] = [1.9705, 1.0308]

# -----------------------------------------------------------------------------
# DOWNSTREAM MODELS

CONFIG['svc.c_reg'] = 1.
CONFIG['svc.tol'] = 1e-4
CONFIG['svc.max_passes'] = 1000
CONFIG['svr.c_reg'] = 1.
CONFIG['svr.epsilon'] = 0.1
CONFIG['svr.n_passes'] = 5000
CONFIG['lasso.family'] = 'logistic'
CONFIG['lasso.n_lambda'] = 50
CONFIG['lasso.lambda_decades'] = 2.
CONFIG['lasso.inner_folds'] = 5

# -----------------------------------------------------------------------------
# EVALUATION

CONFIG['eval.k'] = 5
CONFIG['eval.repeats'] = 50
CONFIG['eval.alpha'] = 0.05
CONFIG['eval.paired_test'] = 'wilcoxon'
CONFIG['eval.scatter_genes'] = 9

# -----------------------------------------------------------------------------
# SYNTHETIC DATA

CONFIG['synthetic.n_classes'] = 9
CONFIG['synthetic.tiles_per_class'] = 200
CONFIG['synthetic.source_tiles_per_class'] = 200
CONFIG['synthetic.eval_tiles_per_class'] = 100
CONFIG['synthetic.tile_size'] = 32
CONFIG['synthetic.n_patients'] = 60
CONFIG['synthetic.patient_grid'] = 4
CONFIG['synthetic.hue_shift'] = 25.
CONFIG['synthetic.freq_offset'] = 0.5
CONFIG['synthetic.noise'] = 0.05
CONFIG['synthetic.expression_noise'] = 0.1

# -----------------------------------------------------------------------------
# RUN

CONFIG['run.seed'] = 0
CONFIG['run.threads'] = 1
CONFIG['run.verbose'] = 'info'


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _mpp(v):
    return 0 < v < 100


def _fraction(v):
    return 0 < v <= 1


def _percentile(v):
    return 0 < v < 50


_INT, _FLOAT, _STR, _BOOL, _LIST = int, float, str, bool, list
# key -> (type, check, description of the check)
_RULES = {
    'network.widths': (_LIST, lambda v: len(v) == 3 and all(
        isinstance(k, int) and k > 0 for k in v), "3 positive integers"),
    'network.feature_dim': (_INT, _pos, "> 0"),
    'network.n_classes': (_INT, lambda v: v >= 2, ">= 2"),
    'pretrain.lr': (_FLOAT, _pos, "> 0"),
    'pretrain.epochs': (_INT, _nonneg, ">= 0"),
    'pretrain.batch_size': (_INT, _pos, ">= 1"),
    'finetune.lr_step1': (_FLOAT, _pos, "> 0"),
    'finetune.epochs_step1': (_INT, _nonneg, ">= 0"),
    'finetune.lr_step2': (_FLOAT, _pos, "> 0"),
    'finetune.epochs_step2': (_INT, _nonneg, ">= 0"),
    'finetune.batch_size': (_INT, _pos, ">= 1"),
    'tiling.target_mpp': (_FLOAT, _mpp, "in (0, 100)"),
    'tiling.tile_size': (_INT, _pos, ">= 1"),
    'tiling.stride': (_INT, _pos, ">= 1"),
    'tiling.white_threshold': (_INT, lambda v: 0 <= v <= 255, "in [0, 255]"),
    'tiling.max_white_fraction': (_FLOAT, _fraction, "in (0, 1]"),
    'stain.alpha': (_FLOAT, _percentile, "in (0, 50)"),
    'stain.beta': (_FLOAT, _pos, "> 0"),
    'stain.io': (_INT, _pos, "> 0"),
    'stain.reference_vectors': (_LIST, lambda v: len(v) == 6 and all(
        k >= 0 for k in v), "6 non-negative floats"),
    'stain.reference_max_concentrations': (
        _LIST, lambda v: len(v) == 2 and all(k > 0 for k in v),
        "2 positive floats"),
    'svc.c_reg': (_FLOAT, _pos, "> 0"),
    'svc.tol': (_FLOAT, _pos, "> 0"),
    'svc.max_passes': (_INT, _pos, ">= 1"),
    'svr.c_reg': (_FLOAT, _pos, "> 0"),
    'svr.epsilon': (_FLOAT, _nonneg, ">= 0"),
    'svr.n_passes': (_INT, _pos, ">= 1"),
    'lasso.family': (_STR, lambda v: v in ('linear', 'logistic'),
                     "'linear' or 'logistic'"),
    'lasso.n_lambda': (_INT, _pos, ">= 1"),
    'lasso.lambda_decades': (_FLOAT, _pos, "> 0"),
    'lasso.inner_folds': (_INT, lambda v: v >= 2, ">= 2"),
    'eval.k': (_INT, lambda v: v >= 2, ">= 2"),
    'eval.repeats': (_INT, _pos, ">= 1"),
    'eval.alpha': (_FLOAT, _fraction, "in (0, 1]"),
    'eval.paired_test': (_STR, lambda v: v in ('wilcoxon', 'ttest'),
                         "'wilcoxon' or 'ttest'"),
    'eval.scatter_genes': (_INT, _nonneg, ">= 0"),
    'synthetic.n_classes': (_INT, lambda v: 2 <= v <= len(CLASS_NAMES),
                            f"in [2, {len(CLASS_NAMES)}]"),
    'synthetic.tiles_per_class': (_INT, _pos, ">= 1"),
    'synthetic.source_tiles_per_class': (_INT, _pos, ">= 1"),
    'synthetic.eval_tiles_per_class': (_INT, _pos, ">= 1"),
    'synthetic.tile_size': (_INT, lambda v: v >= 8, ">= 8"),
    'synthetic.n_patients': (_INT, lambda v: v >= 2, ">= 2"),
    'synthetic.patient_grid': (_INT, _pos, ">= 1"),
    'synthetic.hue_shift': (_FLOAT, _nonneg, ">= 0"),
    'synthetic.freq_offset': (_FLOAT, _nonneg, ">= 0"),
    'synthetic.noise': (_FLOAT, _nonneg, ">= 0"),
    'synthetic.expression_noise': (_FLOAT, _nonneg, ">= 0"),
    'run.seed': (_INT, _nonneg, ">= 0"),
    'run.threads': (_INT, _pos, ">= 1"),
}


def _flatten(tree, prefix=''):
    """Flatten nested dicts into dotted keys."""
    flat = dict()
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, prefix=key + '.'))
        else:
            flat[key] = v
    return flat


def _coerce(key, value):
    """Coerce a value to the type of its default."""
    default = CONFIG[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ('true', 'false', '1', '0'):
                    raise ValueError(value)
                return value.lower() in ('true', '1')
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                value = [k for k in value.split(',') if k.strip()]
            cast = type(default[0])
            return [cast(k) for k in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot interpret {value!r} as "
                          f"{type(default).__name__}", field=key)


class PipelineConfig(object):
    """Pipeline configuration.

    Parameters
    ----------
    values : dict | None
        Dotted keys overriding the defaults in `CONFIG`
    """

    def __init__(self, values=None):
        self._values = dict(CONFIG)
        for k, v in (values or dict()).items():
            self[k] = v

    def __getitem__(self, key):
        return self._values[key]

    def __setitem__(self, key, value):
        if key not in CONFIG:
            raise ConfigError("unknown configuration key", field=key)
        self._values[key] = _coerce(key, value)

    def __contains__(self, key):
        return key in self._values

    def as_dict(self):
        """Get a copy of the flat dotted dictionary."""
        return dict(self._values)

    def path(self, key):
        """Get a path, resolved against `paths.out` when relative."""
        p = self._values[key]
        if (not p) or op.isabs(p) or key == 'paths.out':
            return p
        return op.join(self._values['paths.out'], p)

    def validate(self, required_paths=()):
        """Validate every field against its precondition.

        Parameters
        ----------
        required_paths : tuple
            Dotted keys of the paths that have to exist

        Returns
        -------
        cfg : PipelineConfig
            The validated configuration (self)
        """
        for key, (typ, check, desc) in _RULES.items():
            value = self._values[key]
            if typ is _FLOAT and isinstance(value, (int, float)):
                if not math.isfinite(value):
                    raise ConfigError("must be finite", field=key)
            if not check(value):
                raise ConfigError(f"must be {desc} (got {value!r})",
                                  field=key)
        if self['tiling.stride'] > self['tiling.tile_size']:
            logger.warning("    tiling.stride larger than tiling.tile_size, "
                           "some pixels are never tiled")
        for key in required_paths:
            p = self.path(key)
            if not p:
                raise ConfigError("path is required", field=key)
            if not op.exists(p):
                raise ConfigError(f"path does not exist ({p})", field=key)
        return self

    def finetune_config(self):
        """Build the fine-tuning configuration."""
        from histopy.finetune import FineTuneConfig
        return FineTuneConfig(
            lr_step1=self['finetune.lr_step1'],
            epochs_step1=self['finetune.epochs_step1'],
            lr_step2=self['finetune.lr_step2'],
            epochs_step2=self['finetune.epochs_step2'],
            batch_size=self['finetune.batch_size'], seed=self['run.seed'])

    def network_kwargs(self):
        """Keyword arguments of build_network."""
        return dict(n_classes=self['network.n_classes'],
                    feature_dim=self['network.feature_dim'],
                    widths=tuple(self['network.widths']),
                    seed=self['run.seed'])

    def stain_reference(self):
        """Build the reference stain basis."""
        from histopy.stain import make_stain_basis
        v = self['stain.reference_vectors']
        return make_stain_basis([v[0:3], v[3:6]],
                                self['stain.reference_max_concentrations'])


def load_config(path=None, overrides=None):
    """Load the pipeline configuration.

    Parameters
    ----------
    path : str | None
        Path to a TOML file. Nested tables are flattened into dotted keys
        (e.g `[eval]` + `k = 5` -> 'eval.k')
    overrides : dict | None
        Dotted keys applied last (e.g command-line flags). None values are
        ignored

    Returns
    -------
    cfg : PipelineConfig
        The configuration (not validated yet)
    """
    values = dict()
    if path:
        if not op.isfile(path):
            raise ConfigError(f"configuration file not found ({path})",
                              field='--config')
        try:
            with open(path, 'rb') as f:
                values = _flatten(tomllib.load(f))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"invalid TOML ({e})", field='--config')
        # relative output folder of a file is relative to the file
        out = values.get('paths.out', '.')
        if isinstance(out, str) and not op.isabs(out):
            values['paths.out'] = op.normpath(op.join(
                op.dirname(op.abspath(path)), out))
        logger.info(f"-> Configuration loaded from {path}")
    cfg = PipelineConfig(values)
    for k, v in (overrides or dict()).items():
        if v is not None:
            cfg[k] = v
    return cfg


def dump_config(values):
    """Render dotted keys as a TOML document.

    Parameters
    ----------
    values : dict
        Dotted keys and values (e.g {'eval.k': 5})

    Returns
    -------
    text : str
        TOML text with one table per section
    """
    sections = dict()
    for key, value in values.items():
        sec, name = key.split('.', 1)
        sections.setdefault(sec, []).append((name, value))
    lines = []
    for sec, items in sections.items():
        lines.append(f"[{sec}]")
        for name, value in items:
            lines.append(f"{name} = {_toml_value(value)}")
        lines.append('')
    return '\n'.join(lines)


def _toml_value(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, str):
        return '"' + value.replace('\\', '\\\\').replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return '[' + ', '.join(_toml_value(k) for k in value) + ']'
    return repr(value)
