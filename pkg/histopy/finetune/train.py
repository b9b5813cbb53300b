"""Two-step fine-tuning and source-domain pretraining."""
import logging
from dataclasses import dataclass

import numpy as np

from histopy.errors import ConfigError
from histopy.io.syslog import set_log_level
from histopy.nn import (OptimizerState, adam_step, loss_and_grads,
                        predict_classes)
from histopy.utils import make_rng


logger = logging.getLogger('histopy')

# seed keys of the shuffling of each training stage
STAGE_KEYS = {'pretrain': 0, 'step1': 1, 'step2': 2}


@dataclass(frozen=True)
class FineTuneConfig:
    """Hyper-parameters of the two-step fine-tuning.

    Attributes
    ----------
    lr_step1 : float | 4e-4
        Learning rate of step 1 (Part B trained, Part A frozen)
    epochs_step1 : int | 20
        Number of epochs of step 1
    lr_step2 : float | 5e-5
        Learning rate of step 2 (Part A trained, Part B frozen)
    epochs_step2 : int | 10
        Number of epochs of step 2
    batch_size : int | 128
        Minibatch size
    seed : int | 0
        Seed of the per-epoch shuffling
    """

    lr_step1: float = 4e-4
    epochs_step1: int = 20
    lr_step2: float = 5e-5
    epochs_step2: int = 10
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        for f in ('lr_step1', 'lr_step2'):
            if not getattr(self, f) > 0:
                raise ConfigError("learning rate must be > 0",
                                  field=f"finetune.{f}")
        for f in ('epochs_step1', 'epochs_step2'):
            if getattr(self, f) < 0:
                raise ConfigError("number of epochs must be >= 0",
                                  field=f"finetune.{f}")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1",
                              field='finetune.batch_size')


def _check_classes(params, dataset):
    if params.n_classes != dataset.n_classes:
        raise ConfigError(f"the classifier has {params.n_classes} outputs "
                          f"but the dataset has {dataset.n_classes} classes",
                          field='network.n_classes')


def train_epochs(params, dataset, frozen=(), lr=1e-3, epochs=1,
                 batch_size=128, seed=0, stage='pretrain', history=None):
    """Train the non-frozen parameters of a network with Adam.

    Each epoch reshuffles the whole dataset using a generator derived from
    (seed, stage, epoch). The final partial minibatch is kept.

    Parameters
    ----------
    params : NetworkParams
        The network
    dataset : LabeledDataset
        Training tiles
    frozen : iterable | ()
        Names of the frozen parameters
    lr : float | 1e-3
        Learning rate
    epochs : int | 1
        Number of epochs
    batch_size : int | 128
        Minibatch size
    seed : int | 0
        Seed of the shuffling
    stage : string | 'pretrain'
        Training stage ('pretrain', 'step1' or 'step2')
    history : list | None
        If a list is provided, one dict (stage, epoch, loss) is appended per
        epoch, where loss is the mean minibatch loss of the epoch

    Returns
    -------
    params : NetworkParams
        Trained network
    """
    frozen = set(frozen)
    state = OptimizerState(lr=lr)
    n = len(dataset)
    for epoch in range(epochs):
        order = make_rng(seed, STAGE_KEYS[stage], epoch).permutation(n)
        total = 0.
        for k in range(0, n, batch_size):
            idx = order[k:k + batch_size]
            loss, grads = loss_and_grads(params, dataset.as_batch(idx),
                                         dataset.labels[idx], frozen=frozen)
            params, state = adam_step(params, grads, state)
            total += loss * len(idx)
        total /= n
        logger.info(f"    {stage} epoch {epoch + 1}/{epochs} "
                    f"(loss={total:.5f})",
                    extra={'fields': {'stage': stage, 'epoch': epoch + 1,
                                      'loss': total}})
        if isinstance(history, list):
            history += [dict(stage=stage, epoch=epoch + 1, loss=total)]
    return params


def finetune_step1(params, dataset, cfg=None, history=None, verbose=None):
    """Step 1 : train Part B with Part A frozen.

    Parameters
    ----------
    params : NetworkParams
        Pretrained network
    dataset : LabeledDataset
        Fine-tuning tiles
    cfg : FineTuneConfig | None
        Hyper-parameters (defaults if None)
    history : list | None
        List receiving the per-epoch losses

    Returns
    -------
    params : NetworkParams
        Network whose Part A is bit-identical to the input
    """
    set_log_level(verbose)
    cfg = FineTuneConfig() if cfg is None else cfg
    _check_classes(params, dataset)
    logger.info(f"-> Fine-tuning step 1 : Part B, {cfg.epochs_step1} epochs "
                f"(lr={cfg.lr_step1})")
    return train_epochs(params, dataset, frozen=params.part_a.keys(),
                        lr=cfg.lr_step1, epochs=cfg.epochs_step1,
                        batch_size=cfg.batch_size, seed=cfg.seed,
                        stage='step1', history=history)


def finetune_step2(params, dataset, cfg=None, history=None, verbose=None):
    """Step 2 : train Part A with Part B frozen.

    See `finetune_step1` for the parameters. Part B of the output is
    bit-identical to the input.
    """
    set_log_level(verbose)
    cfg = FineTuneConfig() if cfg is None else cfg
    _check_classes(params, dataset)
    logger.info(f"-> Fine-tuning step 2 : Part A, {cfg.epochs_step2} epochs "
                f"(lr={cfg.lr_step2})")
    return train_epochs(params, dataset, frozen=params.part_b.keys(),
                        lr=cfg.lr_step2, epochs=cfg.epochs_step2,
                        batch_size=cfg.batch_size, seed=cfg.seed,
                        stage='step2', history=history)


def finetune(params, dataset, cfg=None, history=None, verbose=None):
    """Run both fine-tuning steps."""
    params = finetune_step1(params, dataset, cfg, history, verbose)
    return finetune_step2(params, dataset, cfg, history, verbose)


def pretrain(params, dataset, lr=1e-3, epochs=15, batch_size=128, seed=0,
             history=None, verbose=None):
    """Train the whole network on a source-domain dataset.

    This gives the generic backbone that the two fine-tuning steps adapt to
    the target domain.
    """
    set_log_level(verbose)
    _check_classes(params, dataset)
    if (lr <= 0) or (epochs < 0) or (batch_size < 1):
        raise ConfigError("invalid pretraining hyper-parameters",
                          field='pretrain')
    logger.info(f"-> Pretraining : {epochs} epochs (lr={lr}, "
                f"{len(dataset)} tiles)")
    return train_epochs(params, dataset, frozen=(), lr=lr, epochs=epochs,
                        batch_size=batch_size, seed=seed, stage='pretrain',
                        history=history)


def training_accuracy(params, dataset, batch_size=128):
    """Fraction of tiles of a dataset whose class is correctly predicted."""
    pred = predict_classes(params, dataset.as_batch(), batch_size)
    return float(np.mean(pred == dataset.labels))
