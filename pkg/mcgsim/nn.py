"""
Small fully-connected Q-network with hand-derived backprop and RMSProp.

Topology is fixed to dense layers with ReLU on the hidden layers and a linear output with one
unit per action. Everything runs in float64.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from mcgsim.errors import NumericalError

CHECKPOINT_FORMAT = 1

Gradient = List[Tuple[np.ndarray, np.ndarray]]


@dataclass
class Mlp:
    """Weights are stored (fan_in, fan_out) so a batch is forwarded as x @ W + b."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def initialize(cls, sizes: Sequence[int], rng: np.random.Generator) -> "Mlp":
        """He-uniform weights, zero biases."""
        if len(sizes) < 2:
            raise ValueError(f"need at least input and output sizes, got {list(sizes)}")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> List[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


def _forward_cache(net: Mlp, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    activations = [x]
    pre = []
    a = x
    last = len(net.weights) - 1
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        pre.append(z)
        a = z if layer == last else np.maximum(z, 0.0)
        activations.append(a)
    return a, activations, pre


def forward(net: Mlp, state_vec: np.ndarray) -> np.ndarray:
    """Q-values for one state (1-D) or a batch of states (2-D)."""
    x = np.asarray(state_vec, dtype=float)
    if x.shape[-1] != net.d_in:
        raise ValueError(f"expected input of length {net.d_in}, got shape {x.shape}")
    out, _, _ = _forward_cache(net, x)
    return out


def backward_batch(
    net: Mlp, states: np.ndarray, actions: np.ndarray, targets: np.ndarray
) -> Tuple[Gradient, float]:
    """
    Gradient of the mean of 1/2 (target - Q(s, a))^2 over a batch, with targets held constant.

    Returns the per-layer (dW, db) list and the mean loss.
    """
    x = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if x.shape[1] != net.d_in:
        raise ValueError(f"expected input of length {net.d_in}, got shape {x.shape}")
    if np.any(actions < 0) or np.any(actions >= net.d_out):
        raise ValueError(f"action index outside [0, {net.d_out})")
    batch = x.shape[0]

    q, activations, pre = _forward_cache(net, x)
    rows = np.arange(batch)
    error = q[rows, actions] - targets
    loss = float(0.5 * np.mean(error ** 2))

    delta = np.zeros_like(q)
    delta[rows, actions] = error / batch

    grads: Gradient = [None] * len(net.weights)
    for layer in range(len(net.weights) - 1, -1, -1):
        grads[layer] = (activations[layer].T @ delta, delta.sum(axis=0))
        if layer:
            delta = (delta @ net.weights[layer].T) * (pre[layer - 1] > 0)
    return grads, loss


def backward(net: Mlp, state_vec: np.ndarray, action_index: int, td_target: float) -> Gradient:
    """Single-sample semi-gradient of 1/2 (td_target - Q(s, a))^2."""
    grads, _ = backward_batch(net, np.asarray(state_vec)[None, :], np.array([action_index]),
                              np.array([td_target]))
    return grads


@dataclass
class RmsPropState:
    learning_rate: float = 1e-4
    decay: float = 0.95
    epsilon: float = 1e-6
    accumulators: Optional[List[np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ValueError(f"learning rate must be in (0, 1], got {self.learning_rate}")

    def ensure(self, net: Mlp):
        if self.accumulators is None:
            self.accumulators = [np.zeros_like(p) for p in net.parameters()]


def rmsprop_step(opt: RmsPropState, net: Mlp, gradient: Gradient) -> Mlp:
    """In-place RMSProp update of net; returns net."""
    flat = [g for pair in gradient for g in pair]
    params = net.parameters()
    if len(flat) != len(params) or any(g.shape != p.shape for g, p in zip(flat, params)):
        raise ValueError("gradient shapes do not match the network")
    if not all(np.all(np.isfinite(g)) for g in flat):
        raise NumericalError("non-finite gradient, training halted")
    opt.ensure(net)
    for p, g, acc in zip(params, flat, opt.accumulators):
        acc *= opt.decay
        acc += (1.0 - opt.decay) * g * g
        p -= opt.learning_rate * g / (np.sqrt(acc) + opt.epsilon)
    if not all(np.all(np.isfinite(p)) for p in params):
        raise NumericalError("non-finite parameter after RMSProp step")
    return net


def clone_weights(src: Mlp) -> Mlp:
    return Mlp([w.copy() for w in src.weights], [b.copy() for b in src.biases])


def copy_weights_into(dst: Mlp, src: Mlp):
    """Overwrite dst's parameters with src's (target-network sync)."""
    for d, s in zip(dst.parameters(), src.parameters()):
        d[...] = s


def save_weights(path: Union[str, Path], net: Mlp, opt: Optional[RmsPropState] = None):
    arrays = {}
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{layer}"] = np.ascontiguousarray(w)
        arrays[f"b{layer}"] = b
    meta = {"format_version": CHECKPOINT_FORMAT, "sizes": net.sizes}
    if opt is not None and opt.accumulators is not None:
        for layer in range(len(net.weights)):
            arrays[f"acc_W{layer}"] = opt.accumulators[2 * layer]
            arrays[f"acc_b{layer}"] = opt.accumulators[2 * layer + 1]
        meta["rmsprop"] = {"learning_rate": opt.learning_rate, "decay": opt.decay,
                           "epsilon": opt.epsilon}
    arrays["meta"] = np.array(json.dumps(meta))
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_weights(
    path: Union[str, Path], expected_sizes: Optional[Sequence[int]] = None
) -> Tuple[Mlp, Optional[RmsPropState]]:
    """Load a weight file; a layer-size mismatch with expected_sizes is rejected."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format_version')}")
        sizes = list(meta["sizes"])
        if expected_sizes is not None and list(expected_sizes) != sizes:
            raise ValueError(f"checkpoint layer sizes {sizes} != expected {list(expected_sizes)}")
        n_layers = len(sizes) - 1
        weights = [data[f"W{l}"].astype(float) for l in range(n_layers)]
        biases = [data[f"b{l}"].astype(float) for l in range(n_layers)]
        for l, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l} arrays do not match the declared sizes")
        opt = None
        if "rmsprop" in meta:
            acc = []
            for l in range(n_layers):
                acc.extend([data[f"acc_W{l}"].astype(float), data[f"acc_b{l}"].astype(float)])
            opt = RmsPropState(accumulators=acc, **meta["rmsprop"])
    return Mlp(weights, biases), opt
