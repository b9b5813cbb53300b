"""Pretraining, fine-tuning and feature extraction commands."""
import logging
import os.path as op

import numpy as np
import pandas as pd

from histopy.errors import (DegenerateStains, EmptyPatient,
                            InsufficientTissue, ItemError)
from histopy.finetune import (aggregate_patient, extract_tile_features,
                              finetune_step1, finetune_step2, pretrain,
                              tile_patient_map)
from histopy.io import (load_class_dataset, load_patient_manifest,
                        read_image, set_log_level, write_csv)
from histopy.nn import build_network, load_checkpoint, save_checkpoint
from histopy.stain import normalize_image
from histopy.tiling import Tile, content_filter, rescale_to_mpp, tile_image
from histopy.utils import parallel_map


logger = logging.getLogger('histopy')


def _stain_normalize(pixels, cfg, reference, what=''):
    """Macenko-normalize an image, keeping it as is when the stains cannot
    be estimated."""
    try:
        return normalize_image(pixels, reference, alpha=cfg['stain.alpha'],
                               beta=cfg['stain.beta'], io=cfg['stain.io'])[0]
    except (InsufficientTissue, DegenerateStains) as e:
        logger.warning(f"    {what} not stain normalized ({e})")
        return pixels


def tissue_dataset_key(cfg):
    """Key of the class dataset the tissue experiment is evaluated on."""
    if cfg['paths.eval_dataset']:
        return 'paths.eval_dataset'
    logger.warning("    paths.eval_dataset not set, the tissue experiment "
                   "uses the fine-tuning tiles (paths.target_dataset)")
    return 'paths.target_dataset'


def load_training_dataset(cfg, key, verbose=None):
    """Load a class dataset, stain-normalizing its tiles if requested."""
    ds = load_class_dataset(cfg.path(key), verbose=verbose)
    if cfg['stain.enabled'] and cfg['stain.normalize_class_datasets']:
        reference = cfg.stain_reference()
        n_threads = cfg['run.threads']

        def _norm(t):
            return Tile(_stain_normalize(t.pixels, cfg, reference,
                                         t.tile_id), t.source_id, t.grid_xy,
                        t.patient_id)
        ds.tiles = parallel_map(_norm, ds.tiles, n_threads=n_threads)
        logger.info(f"    {len(ds)} tiles stain normalized")
    return ds


def _history_frame(history):
    return pd.DataFrame(history, columns=['stage', 'epoch', 'loss'])


def cmd_pretrain(cfg, verbose=None):
    """Train a network end-to-end on the source-domain dataset.

    Returns
    -------
    path : str
        Path to the pretrained checkpoint
    """
    set_log_level(verbose)
    cfg.validate(required_paths=('paths.source_dataset',))
    ds = load_training_dataset(cfg, 'paths.source_dataset', verbose)
    params = build_network(**cfg.network_kwargs())
    history = []
    params = pretrain(params, ds, lr=cfg['pretrain.lr'],
                      epochs=cfg['pretrain.epochs'],
                      batch_size=cfg['pretrain.batch_size'],
                      seed=cfg['run.seed'], history=history)
    out = cfg.path('paths.out')
    path = op.join(out, 'checkpoints', 'pretrained.hfnn')
    save_checkpoint(path, params)
    write_csv(op.join(out, 'checkpoints', 'pretrained_history.csv'),
              _history_frame(history))
    return path


def cmd_finetune(cfg, checkpoint, verbose=None):
    """Two-step fine-tuning of a checkpoint on the target-domain dataset.

    Returns
    -------
    path : str
        Path to the fine-tuned checkpoint
    """
    set_log_level(verbose)
    cfg.validate(required_paths=('paths.target_dataset',))
    ft_cfg = cfg.finetune_config()
    params = load_checkpoint(checkpoint)
    ds = load_training_dataset(cfg, 'paths.target_dataset', verbose)
    history = []
    params = finetune_step1(params, ds, ft_cfg, history=history)
    params = finetune_step2(params, ds, ft_cfg, history=history)
    out = cfg.path('paths.out')
    path = op.join(out, 'checkpoints', 'finetuned.hfnn')
    save_checkpoint(path, params)
    write_csv(op.join(out, 'checkpoints', 'finetuned_history.csv'),
              _history_frame(history))
    return path


def _patient_tiles(cfg, reference, pid, path, mpp):
    """Rescale, stain normalize, tile and filter the image of a patient.

    None is returned when the image cannot be read.
    """
    try:
        image = read_image(path)
    except ItemError as e:
        logger.warning(f"    skipped image of {pid} ({e})")
        return None
    image = rescale_to_mpp(image, mpp, cfg['tiling.target_mpp'])
    if cfg['stain.enabled']:
        image = _stain_normalize(image, cfg, reference, path)
    source_id = f"{pid}:{op.splitext(op.basename(path))[0]}"
    tiles = tile_image(image, tile_size=cfg['tiling.tile_size'],
                       stride=cfg['tiling.stride'], source_id=source_id,
                       patient_id=pid)
    kept = [t for t in tiles if content_filter(
        t, white_threshold=cfg['tiling.white_threshold'],
        max_white_fraction=cfg['tiling.max_white_fraction'])]
    logger.debug(f"    {pid} : {len(kept)}/{len(tiles)} tiles kept")
    return kept


def _check_skipped(manifest, per_image):
    """Log the unreadable images and fail on patients without any image."""
    pairs = list(zip(manifest.patient_ids, per_image))
    skipped = [p for p, t in pairs if t is None]
    read = {p for p, t in pairs if t is not None}
    logger.info(f"    {len(per_image) - len(skipped)} images read, "
                f"{len(skipped)} skipped", extra={'fields': dict(
                    n_images=len(per_image), n_skipped=len(skipped))})
    lost = sorted(set(skipped) - read)
    if len(lost):
        raise EmptyPatient(f"no readable image for {len(lost)} patients "
                           f"(e.g {lost[0]})")


def cmd_extract(cfg, checkpoint, name, source='dataset', verbose=None):
    """Extract features with a checkpoint.

    Parameters
    ----------
    cfg : PipelineConfig
        Configuration
    checkpoint : str
        Path to the checkpoint
    name : str
        Name of the extractor, used as the prefix of the feature files
    source : {'dataset', 'manifest'}
        Extract the tiles of the tissue evaluation class dataset
        (paths.eval_dataset, see `tissue_dataset_key`), or the tiles of
        the patient images of the manifest (then also aggregated per patient)

    Returns
    -------
    files : dict
        Paths of the feature files ('tiles' and, for manifests, 'patients')
    """
    set_log_level(verbose)
    key = tissue_dataset_key(cfg) if source == 'dataset' else \
        'paths.manifest'
    cfg.validate(required_paths=(key,))
    params = load_checkpoint(checkpoint)
    n_threads = cfg['run.threads']
    folder = op.join(cfg.path('paths.out'), 'features')
    files = dict()
    if source == 'dataset':
        logger.info(f"-> Extracting {name} features of the class dataset")
        ds = load_training_dataset(cfg, key, verbose)
        feat = extract_tile_features(params, ds.tiles, n_threads=n_threads)
        files['tiles'] = op.join(folder, f"{name}_tiles.pfv")
        feat.save(files['tiles'])
        return files

    logger.info(f"-> Extracting {name} features of the patient images")
    manifest = load_patient_manifest(cfg.path(key), verbose=verbose)
    reference = cfg.stain_reference()
    per_image = parallel_map(lambda row: _patient_tiles(cfg, reference, *row),
                             list(manifest.rows()), n_threads=n_threads)
    _check_skipped(manifest, per_image)
    tiles = [t for image_tiles in per_image if image_tiles is not None for
             t in image_tiles]
    feat = extract_tile_features(params, tiles, n_threads=n_threads)
    files['tiles'] = op.join(folder, f"{name}_patient_tiles.pfv")
    feat.save(files['tiles'])
    patients = aggregate_patient(feat, tile_patient_map(tiles),
                                 patient_ids=np.unique(manifest.patient_ids))
    files['patients'] = op.join(folder, f"{name}_patients.pfv")
    patients.save(files['patients'])
    return files
