"""Layers with exact forward / backward passes.

Tensors are numpy arrays in NHWC layout. Every layer is described by a
`LayerSpec` and its parameters are looked up by name ('<name>.w' and
'<name>.b'). The summation order of every reduction is fixed by the loops
below so that results are reproducible bit for bit.
"""
from dataclasses import dataclass

import numpy as np

from histopy.errors import ShapeError


LAYER_KINDS = ('conv2d', 'depthwise_conv2d', 'pointwise_conv2d', 'relu',
               'global_avg_pool', 'dense', 'softmax_xent_head')


@dataclass(frozen=True)
class LayerSpec:
    """Description of a layer.

    Attributes
    ----------
    kind : str
        One of `LAYER_KINDS`
    name : str | None
        Parameter prefix (None for layers without parameters)
    channels : int
        Output channels (conv2d, pointwise_conv2d) or units (dense)
    kernel : int
        Kernel side (conv2d, depthwise_conv2d)
    stride : int
        Stride (conv2d, depthwise_conv2d, pointwise_conv2d)
    padding : {'same', 'valid'}
        Zero padding of k // 2 pixels ('same') or none ('valid')
    """

    kind: str
    name: str = None
    channels: int = 0
    kernel: int = 1
    stride: int = 1
    padding: str = 'same'

    def __post_init__(self):
        assert self.kind in LAYER_KINDS, f"unknown layer kind {self.kind}"

    @property
    def pad(self):
        return self.kernel // 2 if self.padding == 'same' else 0

    @property
    def has_params(self):
        return self.kind in ('conv2d', 'depthwise_conv2d', 'pointwise_conv2d',
                             'dense')


def param_shapes(spec, in_channels):
    """Shapes of the parameters of a layer.

    Parameters
    ----------
    spec : LayerSpec
        Layer description
    in_channels : int
        Number of input channels (or input units for dense)

    Returns
    -------
    shapes : dict
        Dictionary {'<name>.w': shape, '<name>.b': shape}
    """
    k, c, f = spec.kernel, in_channels, spec.channels
    if spec.kind == 'conv2d':
        w = (k, k, c, f)
    elif spec.kind == 'depthwise_conv2d':
        w, f = (k, k, c), c
    elif spec.kind in ('pointwise_conv2d', 'dense'):
        w = (c, f)
    else:
        return dict()
    return {f"{spec.name}.w": w, f"{spec.name}.b": (f,)}


def output_shape(spec, in_shape):
    """Shape of the output of a layer (without the batch dimension).

    Parameters
    ----------
    spec : LayerSpec
        Layer description
    in_shape : tuple
        Input shape without the batch dimension, (H, W, C) or (D,)

    Returns
    -------
    out_shape : tuple
        Output shape without the batch dimension
    """
    spatial = spec.kind in ('conv2d', 'depthwise_conv2d', 'pointwise_conv2d',
                            'global_avg_pool')
    if spatial and len(in_shape) != 3:
        raise ShapeError(f"{spec.kind} expects (H, W, C) inputs, got "
                         f"{in_shape}")
    if (spec.kind == 'dense') and len(in_shape) != 1:
        raise ShapeError(f"dense expects flat inputs, got {in_shape}")
    if spec.kind in ('conv2d', 'depthwise_conv2d'):
        h, w, c = in_shape
        p, k, s = spec.pad, spec.kernel, spec.stride
        ho, wo = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
        if (ho < 1) or (wo < 1):
            raise ShapeError(f"input {in_shape} too small for {spec}")
        return (ho, wo, spec.channels if spec.kind == 'conv2d' else c)
    if spec.kind == 'pointwise_conv2d':
        h, w, _ = in_shape
        s = spec.stride
        return ((h - 1) // s + 1, (w - 1) // s + 1, spec.channels)
    if spec.kind == 'global_avg_pool':
        return (in_shape[-1],)
    if spec.kind == 'dense':
        return (spec.channels,)
    return tuple(in_shape)


def _window(xp, i, j, s, ho, wo):
    """View of the padded input seen by kernel offset (i, j)."""
    return xp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :]


def _padded(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))


###############################################################################
###############################################################################
#                                  FORWARD
###############################################################################
###############################################################################


def layer_forward(spec, params, x):
    """Forward pass of a single layer.

    Parameters
    ----------
    spec : LayerSpec
        Layer description
    params : dict
        Parameters, looked up by '<name>.w' / '<name>.b'
    x : array_like
        Input batch

    Returns
    -------
    y : array_like
        Output batch
    """
    kind = spec.kind
    if kind == 'relu':
        return np.maximum(x, 0)
    if kind == 'global_avg_pool':
        return x.mean(axis=(1, 2))
    if kind == 'softmax_xent_head':
        return x
    w, b = params[f"{spec.name}.w"], params[f"{spec.name}.b"]
    if kind == 'dense':
        return x @ w + b
    if kind == 'pointwise_conv2d':
        s = spec.stride
        return x[:, ::s, ::s, :] @ w + b
    # sliding kernels
    n, h, wd, c = x.shape
    ho, wo, f = output_shape(spec, (h, wd, c))
    k, s = spec.kernel, spec.stride
    xp = _padded(x, spec.pad)
    out = np.zeros((n, ho, wo, f), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            patch = _window(xp, i, j, s, ho, wo)
            if kind == 'conv2d':
                out += patch @ w[i, j]
            else:
                out += patch * w[i, j]
    out += b
    return out


###############################################################################
###############################################################################
#                                  BACKWARD
###############################################################################
###############################################################################


def layer_backward(spec, params, x, dout, need_params=True, need_input=True):
    """Backward pass of a single layer.

    Parameters
    ----------
    spec : LayerSpec
        Layer description
    params : dict
        Parameters, looked up by '<name>.w' / '<name>.b'
    x : array_like
        Input of the layer during the forward pass
    dout : array_like
        Gradient of the loss with respect to the output of the layer
    need_params : bool | True
        Compute the gradients of the parameters of the layer
    need_input : bool | True
        Compute the gradient with respect to the input

    Returns
    -------
    dx : array_like | None
        Gradient with respect to the input
    grads : dict
        Gradients of the parameters (empty if `need_params` is False)
    """
    kind, grads, dx = spec.kind, dict(), None
    if kind == 'relu':
        return (dout * (x > 0) if need_input else None), grads
    if kind == 'global_avg_pool':
        if need_input:
            n, h, w, c = x.shape
            dx = np.broadcast_to(dout[:, None, None, :] / np.asarray(
                h * w, dtype=dout.dtype), x.shape).copy()
        return dx, grads
    if kind == 'softmax_xent_head':
        return dout, grads
    wn, bn = f"{spec.name}.w", f"{spec.name}.b"
    w = params[wn]
    if kind == 'dense':
        if need_params:
            grads[wn] = x.T @ dout
            grads[bn] = dout.sum(axis=0)
        if need_input:
            dx = dout @ w.T
        return dx, grads
    if kind == 'pointwise_conv2d':
        s = spec.stride
        xs = x[:, ::s, ::s, :]
        if need_params:
            grads[wn] = np.tensordot(xs, dout, axes=([0, 1, 2], [0, 1, 2]))
            grads[bn] = dout.sum(axis=(0, 1, 2))
        if need_input:
            dx = np.zeros_like(x)
            dx[:, ::s, ::s, :] = dout @ w.T
        return dx, grads
    # sliding kernels
    n, h, wd, c = x.shape
    _, ho, wo, _ = dout.shape
    k, s, p = spec.kernel, spec.stride, spec.pad
    xp = _padded(x, p)
    dxp = np.zeros_like(xp) if need_input else None
    gw = np.zeros_like(w) if need_params else None
    for i in range(k):
        for j in range(k):
            patch = _window(xp, i, j, s, ho, wo)
            if kind == 'conv2d':
                if need_params:
                    gw[i, j] = np.tensordot(patch, dout,
                                            axes=([0, 1, 2], [0, 1, 2]))
                if need_input:
                    _window(dxp, i, j, s, ho, wo)[...] += dout @ w[i, j].T
            else:
                if need_params:
                    gw[i, j] = (patch * dout).sum(axis=(0, 1, 2))
                if need_input:
                    _window(dxp, i, j, s, ho, wo)[...] += dout * w[i, j]
    if need_params:
        grads[wn] = gw
        grads[bn] = dout.sum(axis=(0, 1, 2))
    if need_input:
        dx = dxp[:, p:p + h, p:p + wd, :]
    return dx, grads


def softmax_cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient.

    Parameters
    ----------
    logits : array_like
        Array of shape (n_samples, n_classes)
    labels : array_like
        Class index of each sample

    Returns
    -------
    loss : float
        mean(-log softmax(logits)[label])
    dlogits : array_like
        Gradient of the loss with respect to the logits
    """
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e.sum(axis=1, keepdims=True)
    log_p = z - np.log(s)
    loss = -log_p[np.arange(n), labels].sum() / n
    dlogits = e / s
    dlogits[np.arange(n), labels] -= 1
    dlogits /= np.asarray(n, dtype=logits.dtype)
    return float(loss), dlogits
