"""Layers, network and optimizer."""
from .layers import (LayerSpec, layer_forward, layer_backward,  # noqa
                     softmax_cross_entropy)
from .network import (NetworkParams, architecture, build_network,  # noqa
                      network_from_params, reset_head, astype,
                      save_checkpoint, load_checkpoint, forward,
                      loss_and_grads, evaluate_loss, predict_classes)
from .optim import OptimizerState, adam_step  # noqa
