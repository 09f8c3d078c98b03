#!/usr/bin/env python3
"""
Neural Network
Small feed-forward network written directly against numpy: softplus hidden
layers, optional bounded output units, hand-written reverse mode, Adam, and
an MSE loss. Checkpoints use the shared artifact container.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Any, Optional, List, Sequence, Tuple

import numpy as np
from scipy.special import expit

from artifact_store import ArtifactFormatError, write_container, read_container

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b'DC2ACNN\x00'
CHECKPOINT_VERSION = 1
DEFAULT_HIDDEN = (64, 64, 64)


class CheckpointFormatError(ArtifactFormatError):
    """Checkpoint file is malformed, of another version, or inconsistent with its header."""


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def bounded_output(z: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """y = softplus(z - l) - softplus(z - u) + l and dy/dz; l < y < u, strictly increasing."""
    y = softplus(z - lower) - softplus(z - upper) + lower
    dy = expit(z - lower) - expit(z - upper)
    return y, dy


def inverse_bounded_output(y: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Pre-activation z with bounded_output(z, l, u) == y, for l < y < u."""
    y, lower, upper = (np.asarray(a, dtype=float) for a in (y, lower, upper))
    if np.any(y <= lower) or np.any(y >= upper):
        raise ValueError("inverse_bounded_output needs l < y < u elementwise")
    return np.log(np.expm1(y - lower)) + lower - np.log(-np.expm1(y - upper))


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: List[np.ndarray]
    activations: List[np.ndarray]
    head_slope: np.ndarray
    single: bool


@dataclass
class Mlp:
    """Weights map rows: layer k computes a @ W_k.T + b_k."""
    sizes: Tuple[int, ...]
    params: List[np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    offset: np.ndarray
    input_scale: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        expected = []
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            expected += [(n_out, n_in), (n_out,)]
        if [p.shape for p in self.params] != expected:
            raise ValueError(f"parameter shapes {[p.shape for p in self.params]} do not match sizes {self.sizes}")
        n_out = self.sizes[-1]
        for name in ('lower', 'upper', 'offset'):
            if getattr(self, name).shape != (n_out,):
                raise ValueError(f"{name} must have shape ({n_out},)")
        if self.input_scale.shape != (self.sizes[0],):
            raise ValueError(f"input_scale must have shape ({self.sizes[0]},)")
        if np.any(self.input_scale == 0.0):
            raise ValueError("input_scale entries must be non-zero")
        bounded = self.bounded
        if np.any(np.isfinite(self.lower) != np.isfinite(self.upper)):
            raise ValueError("output bounds must be both finite or both infinite per unit")
        if np.any(self.lower[bounded] >= self.upper[bounded]):
            raise ValueError("output bounds need lower < upper")

    @classmethod
    def create(cls, n_in: int, n_out: int, hidden: Sequence[int] = DEFAULT_HIDDEN, seed: int = 0,
               lower: Optional[np.ndarray] = None, upper: Optional[np.ndarray] = None,
               offset: Optional[np.ndarray] = None, input_scale: Optional[np.ndarray] = None,
               zero_output: bool = True) -> 'Mlp':
        """Uniform fan-in initialization from a fixed seed."""
        sizes = (n_in, *hidden, n_out)
        rng = np.random.default_rng(seed)
        params = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = 1.0 / np.sqrt(fan_in)
            last = k == len(sizes) - 2
            if last and zero_output:
                params += [np.zeros((fan_out, fan_in)), np.zeros(fan_out)]
            else:
                params += [rng.uniform(-limit, limit, size=(fan_out, fan_in)),
                           rng.uniform(-limit, limit, size=fan_out)]
        return cls(
            sizes=sizes, params=params,
            lower=np.full(n_out, -np.inf) if lower is None else np.asarray(lower, dtype=float).copy(),
            upper=np.full(n_out, np.inf) if upper is None else np.asarray(upper, dtype=float).copy(),
            offset=np.zeros(n_out) if offset is None else np.asarray(offset, dtype=float).copy(),
            input_scale=np.ones(n_in) if input_scale is None else np.asarray(input_scale, dtype=float).copy(),
        )

    @property
    def bounded(self) -> np.ndarray:
        return np.isfinite(self.lower)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat_params(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        start = 0
        for p in self.params:
            p[...] = flat[start:start + p.size].reshape(p.shape)
            start += p.size

    def copy(self) -> 'Mlp':
        return Mlp(sizes=self.sizes, params=[p.copy() for p in self.params], lower=self.lower.copy(),
                   upper=self.upper.copy(), offset=self.offset.copy(), input_scale=self.input_scale.copy())

    def predict(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]


def forward(mlp: Mlp, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on one input vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != mlp.sizes[0]:
        raise ValueError(f"input has shape {x.shape}, network expects {mlp.sizes[0]} features")

    a = batch / mlp.input_scale
    pre, acts = [], [a]
    for k in range(mlp.n_layers):
        W, b = mlp.params[2 * k], mlp.params[2 * k + 1]
        z = a @ W.T + b
        pre.append(z)
        if k < mlp.n_layers - 1:
            a = softplus(z)
            acts.append(a)

    z = pre[-1] + mlp.offset
    y = z.copy()
    slope = np.ones_like(z)
    mask = mlp.bounded
    if np.any(mask):
        y[:, mask], slope[:, mask] = bounded_output(z[:, mask], mlp.lower[mask], mlp.upper[mask])

    cache = ForwardCache(inputs=batch, pre_activations=pre, activations=acts, head_slope=slope, single=single)
    return (y[0] if single else y), cache


def backward(mlp: Mlp, cache: ForwardCache, dL_dy: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """Parameter gradients (summed over batch rows) and dL/dx for a cotangent on y."""
    dy = np.asarray(dL_dy, dtype=float)
    dy = dy[None, :] if cache.single else dy
    if dy.shape != cache.head_slope.shape or len(cache.pre_activations) != mlp.n_layers:
        raise ValueError(f"cotangent shape {np.shape(dL_dy)} does not match the cached forward pass")
    if cache.head_slope.shape[1] != mlp.sizes[-1]:
        raise ValueError("cache was produced by a network with a different architecture")

    grads: List[np.ndarray] = [None] * len(mlp.params)
    delta = dy * cache.head_slope
    for k in reversed(range(mlp.n_layers)):
        W = mlp.params[2 * k]
        grads[2 * k] = delta.T @ cache.activations[k]
        grads[2 * k + 1] = delta.sum(axis=0)
        upstream = delta @ W
        if k > 0:
            delta = upstream * expit(cache.pre_activations[k - 1])
    dx = upstream / mlp.input_scale
    return grads, (dx[0] if cache.single else dx)


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, mlp: Mlp, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> 'AdamState':
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        return cls(m=[np.zeros_like(p) for p in mlp.params], v=[np.zeros_like(p) for p in mlp.params],
                   t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(mlp: Mlp, grads: List[np.ndarray], state: AdamState) -> Tuple[Mlp, AdamState]:
    """Bias-corrected Adam update, applied to the network's arrays in place."""
    if len(grads) != len(mlp.params) or any(g.shape != p.shape for g, p in zip(grads, mlp.params)):
        raise ValueError("gradient shapes do not match the network parameters")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(mlp.params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return mlp, state


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} differs from target shape {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def save_checkpoint(path: str, mlp: Mlp, metadata: Optional[Dict[str, Any]] = None) -> str:
    arrays = {f'param_{k}': p for k, p in enumerate(mlp.params)}
    arrays.update(lower=mlp.lower, upper=mlp.upper, offset=mlp.offset, input_scale=mlp.input_scale)
    header = {'sizes': list(mlp.sizes), 'activation': 'softplus', 'info': metadata or {}}
    digest = write_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, header, arrays)
    logger.info(f"💾 Saved checkpoint {path} ({mlp.n_params} parameters)")
    return digest


def load_checkpoint(path: str) -> Tuple[Mlp, Dict[str, Any]]:
    header, arrays = read_container(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, CheckpointFormatError)
    try:
        sizes = tuple(header['sizes'])
        params = [arrays[f'param_{k}'] for k in range(2 * (len(sizes) - 1))]
        mlp = Mlp(sizes=sizes, params=params, lower=arrays['lower'], upper=arrays['upper'],
                  offset=arrays['offset'], input_scale=arrays['input_scale'])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError(f"{path}: inconsistent checkpoint: {e}")
    if not np.all(np.isfinite(mlp.flat_params())):
        raise CheckpointFormatError(f"{path}: non-finite parameters")
    return mlp, header.get('info', {})
