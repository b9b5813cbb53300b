"""Reduced depthwise-separable network split into a backbone and a head.

Parameters whose name starts with 'a.' belong to the backbone (Part A,
everything up to and including the global average pooling) and parameters
starting with 'b.' belong to the add-on head (Part B, wide dense layer + ReLU
and the classifier).
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from histopy.errors import ShapeError, InvalidInput
from histopy.io.read import read_checkpoint
from histopy.io.write import write_checkpoint
from histopy.nn.layers import (LayerSpec, layer_forward, layer_backward,
                               output_shape, param_shapes,
                               softmax_cross_entropy)
from histopy.utils import make_rng, check_finite, checksum


logger = logging.getLogger('histopy')


def architecture(widths=(16, 32, 64), feature_dim=64, n_classes=9):
    """Get the layers of the reduced network.

    Parameters
    ----------
    widths : tuple | (16, 32, 64)
        Channels of the stem, of the first and of the second separable block
    feature_dim : int | 64
        Width of the wide dense layer of the head (2048 for full-size runs)
    n_classes : int | 9
        Number of outputs of the classifier

    Returns
    -------
    layers : list
        List of LayerSpec
    """
    assert len(widths) == 3, "three backbone widths are expected"
    w0, w1, w2 = [int(k) for k in widths]
    relu = LayerSpec('relu')
    return [
        # Part A
        LayerSpec('conv2d', 'a.stem', channels=w0, kernel=3, stride=2),
        relu,
        LayerSpec('depthwise_conv2d', 'a.block1.dw', kernel=3),
        LayerSpec('pointwise_conv2d', 'a.block1.pw', channels=w1),
        relu,
        LayerSpec('pointwise_conv2d', 'a.down', channels=w1, stride=2),
        relu,
        LayerSpec('depthwise_conv2d', 'a.block2.dw', kernel=3),
        LayerSpec('pointwise_conv2d', 'a.block2.pw', channels=w2),
        relu,
        LayerSpec('global_avg_pool'),
        # Part B
        LayerSpec('dense', 'b.fc1', channels=int(feature_dim)),
        relu,
        LayerSpec('dense', 'b.fc2', channels=int(n_classes)),
        LayerSpec('softmax_xent_head'),
    ]


@dataclass
class NetworkParams:
    """Layers and named parameters of a network.

    Attributes
    ----------
    layers : list
        List of LayerSpec
    part_a : OrderedDict
        Backbone parameters ('a.' prefix), in layer order
    part_b : OrderedDict
        Head parameters ('b.' prefix), in layer order
    in_channels : int
        Number of channels of the input rasters
    """

    layers: list
    part_a: OrderedDict
    part_b: OrderedDict
    in_channels: int = 3

    def __getitem__(self, name):
        return self.part_b[name] if name.startswith('b.') else \
            self.part_a[name]

    def __contains__(self, name):
        return (name in self.part_a) or (name in self.part_b)

    @property
    def names(self):
        return list(self.part_a.keys()) + list(self.part_b.keys())

    @property
    def n_classes(self):
        return self.layers[self._last_dense()].channels

    @property
    def feature_dim(self):
        """Dimension of the features (input of the classifier)."""
        clf = self.layers[self._last_dense()].name
        return self.part_b[f"{clf}.w"].shape[0]

    @property
    def dtype(self):
        return next(iter(self.part_a.values())).dtype

    def _last_dense(self):
        idx = [k for k, l in enumerate(self.layers) if l.kind == 'dense']
        assert len(idx), "the network has no classifier"
        return idx[-1]

    def tensors(self):
        """All named parameters (Part A then Part B)."""
        tensors = OrderedDict(self.part_a)
        tensors.update(self.part_b)
        return tensors

    def replace(self, updates):
        """Get a copy where some named parameters are replaced.

        Arrays that are not replaced are shared with the original.
        """
        part_a, part_b = OrderedDict(self.part_a), OrderedDict(self.part_b)
        for name, arr in updates.items():
            part = part_b if name.startswith('b.') else part_a
            if name not in part:
                raise ShapeError(f"unknown parameter {name}")
            if part[name].shape != arr.shape:
                raise ShapeError(f"{name} has shape {part[name].shape}, got "
                                 f"{arr.shape}")
            part[name] = arr
        return NetworkParams(self.layers, part_a, part_b, self.in_channels)

    def checksum(self, part=None):
        """sha256 of the parameters of a part ('a', 'b' or None for all)."""
        tensors = {'a': self.part_a, 'b': self.part_b}.get(part,
                                                            self.tensors())
        return checksum(tensors)


###############################################################################
###############################################################################
#                                CONSTRUCTION
###############################################################################
###############################################################################


def _split_parts(tensors):
    part_a, part_b = OrderedDict(), OrderedDict()
    for name, arr in tensors.items():
        if name.startswith('a.'):
            part_a[name] = arr
        elif name.startswith('b.'):
            part_b[name] = arr
        else:
            raise ShapeError(f"parameter {name} is neither in Part A ('a.') "
                             "nor in Part B ('b.')")
    return part_a, part_b


def _expected_shapes(layers, in_channels):
    """Parameter shapes of a layer stack (also checks that shapes compose)."""
    shapes, c = OrderedDict(), in_channels
    for l in layers:
        shapes.update(param_shapes(l, c))
        if l.kind in ('conv2d', 'pointwise_conv2d', 'dense'):
            c = l.channels
    return shapes


def build_network(n_classes=9, feature_dim=64, widths=(16, 32, 64), seed=0,
                  in_channels=3, dtype=np.float32):
    """Build a randomly initialized network.

    Weights are drawn from a He-normal distribution (std = sqrt(2 / fan_in))
    and biases are set to zero.

    Parameters
    ----------
    n_classes : int | 9
        Number of classes of the classifier
    feature_dim : int | 64
        Width of the wide dense layer of the head
    widths : tuple | (16, 32, 64)
        Backbone widths
    seed : int | 0
        Seed of the initialization
    in_channels : int | 3
        Number of input channels
    dtype : numpy dtype | np.float32
        Data type of the parameters

    Returns
    -------
    params : NetworkParams
        The initialized network
    """
    if (n_classes < 1) or (feature_dim < 1) or (min(widths) < 1):
        raise ShapeError("network widths and class count must be positive")
    layers = architecture(widths, feature_dim, n_classes)
    rng = make_rng(seed)
    tensors = OrderedDict()
    for name, shape in _expected_shapes(layers, in_channels).items():
        if name.endswith('.b'):
            tensors[name] = np.zeros(shape, dtype=dtype)
            continue
        # depthwise kernels have a fan-in of k * k, others of k * k * c_in
        fan_in = int(np.prod(shape[:-1])) if len(shape) != 3 else \
            shape[0] * shape[1]
        std = np.sqrt(2. / fan_in)
        tensors[name] = (rng.standard_normal(shape) * std).astype(dtype)
    part_a, part_b = _split_parts(tensors)
    logger.debug(f"    Network built (widths={list(widths)}, "
                 f"features={feature_dim}, classes={n_classes})")
    return NetworkParams(layers, part_a, part_b, in_channels)


def network_from_params(tensors):
    """Rebuild a network from named parameter tensors.

    The widths of the network are inferred from the tensor shapes, which must
    match the reduced architecture exactly.

    Parameters
    ----------
    tensors : dict
        Named parameter tensors (e.g loaded from a checkpoint)

    Returns
    -------
    params : NetworkParams
        The network
    """
    try:
        in_channels, w0 = tensors['a.stem.w'].shape[2:]
        w1 = tensors['a.block1.pw.w'].shape[1]
        w2 = tensors['a.block2.pw.w'].shape[1]
        feature_dim = tensors['b.fc1.w'].shape[1]
        n_classes = tensors['b.fc2.w'].shape[1]
    except (KeyError, ValueError, IndexError) as e:
        raise ShapeError(f"parameters do not describe the network ({e})")
    layers = architecture((w0, w1, w2), feature_dim, n_classes)
    expected = _expected_shapes(layers, in_channels)
    if set(expected) != set(tensors):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise ShapeError(f"parameter names mismatch (missing={missing}, "
                         f"unexpected={extra})")
    ordered = OrderedDict()
    for name, shape in expected.items():
        arr = np.asarray(tensors[name])
        if arr.shape != shape:
            raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
        ordered[name] = arr
    part_a, part_b = _split_parts(ordered)
    return NetworkParams(layers, part_a, part_b, in_channels)


def reset_head(params, n_classes, seed=0):
    """Re-initialize Part B for a new number of classes.

    Part A is shared with the input network.

    Parameters
    ----------
    params : NetworkParams
        Network whose backbone is kept
    n_classes : int
        New number of classes
    seed : int | 0
        Seed of the initialization of the head

    Returns
    -------
    params : NetworkParams
        Network with the same backbone and a fresh head
    """
    widths = (params['a.stem.w'].shape[-1], params['a.block1.pw.w'].shape[1],
              params['a.block2.pw.w'].shape[1])
    fresh = build_network(n_classes, params.feature_dim, widths, seed=seed,
                          in_channels=params.in_channels, dtype=params.dtype)
    return NetworkParams(fresh.layers, OrderedDict(params.part_a),
                         fresh.part_b, params.in_channels)


def astype(params, dtype):
    """Copy of a network with its parameters cast to another dtype."""
    tensors = OrderedDict([(k, v.astype(dtype)) for k, v in
                           params.tensors().items()])
    part_a, part_b = _split_parts(tensors)
    return NetworkParams(params.layers, part_a, part_b, params.in_channels)


def save_checkpoint(path, params):
    """Save the parameters of a network to a HFNN checkpoint."""
    write_checkpoint(path, params.tensors())


def load_checkpoint(path):
    """Load a network from a HFNN checkpoint."""
    return network_from_params(read_checkpoint(path))


###############################################################################
###############################################################################
#                             FORWARD / BACKWARD
###############################################################################
###############################################################################


def _check_batch(params, batch):
    batch = np.asarray(batch)
    if (batch.ndim != 4) or (batch.shape[-1] != params.in_channels):
        raise ShapeError(f"expected a batch of shape (N, H, W, "
                         f"{params.in_channels}), got {batch.shape}")
    if batch.shape[0] == 0:
        raise InvalidInput("empty batch")
    shape = batch.shape[1:]
    for l in params.layers:
        shape = output_shape(l, shape)
    return batch.astype(params.dtype, copy=False)


def forward(params, batch, train_mode=False):
    """Forward pass.

    Parameters
    ----------
    params : NetworkParams
        The network
    batch : array_like
        Array of shape (N, H, W, 3) with values in [0, 1]
    train_mode : bool | False
        Training mode flag. The network has no layer that behaves
        differently during training, so both modes give the same outputs

    Returns
    -------
    features : array_like
        Array of shape (N, D) of the activations feeding the classifier
    logits : array_like
        Array of shape (N, C) of the classifier outputs (before softmax)
    cache : dict
        Inputs of every layer, consumed by `loss_and_grads`
    """
    x = _check_batch(params, batch)
    tensors = params.tensors()
    i_clf = params._last_dense()
    inputs = []
    for l in params.layers:
        inputs += [x]
        x = layer_forward(l, tensors, x)
    logits = check_finite(x, 'logits')
    features = inputs[i_clf]
    return features, logits, {'inputs': inputs, 'logits': logits,
                              'train_mode': bool(train_mode)}


def loss_and_grads(params, batch, labels, frozen=(), cache=None):
    """Softmax cross-entropy loss and exact gradients.

    Parameters
    ----------
    params : NetworkParams
        The network
    batch : array_like
        Array of shape (N, H, W, 3)
    labels : array_like
        Class index of each sample
    frozen : set | ()
        Names of the parameters that receive no gradient
    cache : dict | None
        Cache returned by `forward` on the same batch (recomputed if None)

    Returns
    -------
    loss : float
        Mean cross-entropy over the batch
    grads : OrderedDict
        Gradients of the non-frozen parameters, in parameter order
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = params.n_classes
    if len(labels) and ((labels.min() < 0) or (labels.max() >= n_classes)):
        raise InvalidInput(f"labels must be in [0, {n_classes})")
    if cache is None:
        _, _, cache = forward(params, batch, train_mode=True)
    inputs, logits = cache['inputs'], cache['logits']
    if len(labels) != logits.shape[0]:
        raise ShapeError("one label per sample is required")
    loss, dout = softmax_cross_entropy(logits, labels)
    check_finite(loss, 'loss')
    frozen = set(frozen)
    tensors = params.tensors()

    # lowest layer owning a trainable parameter : no need to go below
    def _trainable(l):
        if not l.has_params:
            return []
        return [k for k in (f"{l.name}.w", f"{l.name}.b") if k not in frozen]
    owners = [k for k, l in enumerate(params.layers) if len(_trainable(l))]
    layer_grads = dict()
    if len(owners):
        lowest = owners[0]
        for k in range(len(params.layers) - 1, lowest - 1, -1):
            l = params.layers[k]
            trainable = _trainable(l)
            dout, g = layer_backward(l, tensors, inputs[k], dout,
                                     need_params=bool(len(trainable)),
                                     need_input=k > lowest)
            layer_grads.update({n: g[n] for n in trainable})
    grads = OrderedDict([(n, layer_grads[n]) for n in tensors.keys() if
                         n in layer_grads])
    return loss, grads


def _chunks(n, batch_size):
    return [np.arange(k, min(k + batch_size, n)) for k in
            range(0, n, batch_size)]


def evaluate_loss(params, batch, labels, batch_size=128):
    """Mean cross-entropy over a (possibly large) set of samples."""
    labels = np.asarray(labels, dtype=np.int64)
    total = 0.
    for idx in _chunks(len(labels), batch_size):
        _, logits, _ = forward(params, batch[idx])
        total += softmax_cross_entropy(logits, labels[idx])[0] * len(idx)
    return total / len(labels)


def predict_classes(params, batch, batch_size=128):
    """Predicted class of each sample (argmax of the logits)."""
    pred = []
    for idx in _chunks(len(batch), batch_size):
        _, logits, _ = forward(params, batch[idx])
        pred += [logits.argmax(axis=1)]
    return np.concatenate(pred)
