"""
Multi-task classifier with stacked task-specific layers.

x --trunk (shared dense ReLU layers)--> h --task layers--> logits --softmax--> p

Task-specific layer l keeps the weights of all T tasks in one tensor of dims
(D_in, D_out, T); mode-3 slice t is task t's weight matrix, so the tensor
normal prior acts on exactly what the network multiplies with. The last
task-specific layer is the classifier (softmax), every other one is ReLU.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from drn.errors import ArgumentError
from drn.kron_gauss import KronCovariance, TensorNormal, mahalanobis
from drn.tensor_core import Tensor3

ACTIVATIONS = ("relu", "softmax", "identity")
BOTTLENECK = "bottleneck"
CLASSIFIER = "classifier"


@dataclass
class DenseLayer:
    weight: NDArray[np.float64]
    bias: NDArray[np.float64]
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ArgumentError(
                f"bias of shape {self.bias.shape} does not match weight of shape {self.weight.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ArgumentError(f"unknown activation {self.activation!r}")


@dataclass
class TaskLayerStack:
    """Per layer: weight tensor (D_in, D_out, T) and biases (T, D_out)."""

    layer_ids: List[str]
    weights: Dict[str, NDArray[np.float64]]
    biases: Dict[str, NDArray[np.float64]]

    def __post_init__(self):
        if not self.layer_ids:
            raise ArgumentError("a task layer stack needs at least one layer")
        num_tasks = None
        previous_out = None
        for layer in self.layer_ids:
            w = self.weights[layer] = np.asarray(self.weights[layer], dtype=np.float64)
            b = self.biases[layer] = np.asarray(self.biases[layer], dtype=np.float64)
            if w.ndim != 3:
                raise ArgumentError(f"layer {layer}: weight tensor must be order 3, got {w.shape}")
            if num_tasks is not None and w.shape[2] != num_tasks:
                raise ArgumentError(f"layer {layer}: expected {num_tasks} tasks, got {w.shape[2]}")
            if previous_out is not None and w.shape[0] != previous_out:
                raise ArgumentError(f"layer {layer}: input dim {w.shape[0]} does not chain to {previous_out}")
            if b.shape != (w.shape[2], w.shape[1]):
                raise ArgumentError(f"layer {layer}: biases must have shape {(w.shape[2], w.shape[1])}")
            num_tasks = w.shape[2]
            previous_out = w.shape[1]

    @property
    def num_tasks(self) -> int:
        return self.weights[self.layer_ids[0]].shape[2]

    def dims(self, layer: str) -> Tuple[int, int, int]:
        return self.weights[layer].shape

    def tensor(self, layer: str) -> Tensor3:
        return Tensor3(self.weights[layer])

    def task_weight(self, layer: str, task: int) -> NDArray[np.float64]:
        return self.weights[layer][:, :, task]


@dataclass
class MultiTaskNet:
    trunk: List[DenseLayer]
    stack: TaskLayerStack
    task_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        width = self.input_dim
        for i, layer in enumerate(self.trunk):
            if layer.activation == "softmax":
                raise ArgumentError(f"trunk layer {i}: softmax is only valid on the classifier")
            if layer.weight.shape[0] != width:
                raise ArgumentError(f"trunk layer {i} expects input {layer.weight.shape[0]}, got {width}")
            width = layer.weight.shape[1]
        if self.trunk and width != self.stack.dims(self.stack.layer_ids[0])[0]:
            raise ArgumentError("trunk output dim does not match the first task-specific layer")
        if not self.task_names:
            self.task_names = [f"task{t}" for t in range(self.num_tasks)]
        if len(self.task_names) != self.num_tasks:
            raise ArgumentError(f"{len(self.task_names)} task names for {self.num_tasks} tasks")

    @property
    def input_dim(self) -> int:
        if self.trunk:
            return self.trunk[0].weight.shape[0]
        return self.stack.dims(self.stack.layer_ids[0])[0]

    @property
    def num_tasks(self) -> int:
        return self.stack.num_tasks

    @property
    def num_classes(self) -> int:
        return self.stack.dims(self.stack.layer_ids[-1])[1]


def parameter_arrays(net: MultiTaskNet) -> List[Tuple[NDArray[np.float64], bool]]:
    """Every parameter array with a flag marking task-specific ones, in `Gradients.arrays()` order."""
    shared = [l.weight for l in net.trunk] + [l.bias for l in net.trunk]
    specific = [net.stack.weights[k] for k in net.stack.layer_ids] + [net.stack.biases[k] for k in net.stack.layer_ids]
    return [(a, False) for a in shared] + [(a, True) for a in specific]


@dataclass
class Gradients:
    """Gradients with the same layout as the network parameters."""

    trunk_weights: List[NDArray[np.float64]]
    trunk_biases: List[NDArray[np.float64]]
    stack_weights: Dict[str, NDArray[np.float64]]
    stack_biases: Dict[str, NDArray[np.float64]]

    @classmethod
    def zeros_like(cls, net: MultiTaskNet) -> Gradients:
        return cls(
            [np.zeros_like(l.weight) for l in net.trunk],
            [np.zeros_like(l.bias) for l in net.trunk],
            {k: np.zeros_like(net.stack.weights[k]) for k in net.stack.layer_ids},
            {k: np.zeros_like(net.stack.biases[k]) for k in net.stack.layer_ids},
        )

    def arrays(self) -> List[NDArray[np.float64]]:
        return [
            *self.trunk_weights,
            *self.trunk_biases,
            *self.stack_weights.values(),
            *self.stack_biases.values(),
        ]

    def scale(self, factor: float) -> Gradients:
        for a in self.arrays():
            a *= factor
        return self

    def add(self, other: Gradients) -> Gradients:
        for a, b in zip(self.arrays(), other.arrays()):
            a += b
        return self

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_net(
    input_dim: int,
    num_classes: int,
    num_tasks: int,
    trunk_widths: Sequence[int] = (),
    task_widths: Sequence[int] = (32,),
    init_scale: float = 0.01,
    rng: Optional[np.random.Generator] = None,
    task_names: Optional[Sequence[str]] = None,
    shared_init: bool = False,
) -> MultiTaskNet:
    """Gaussian weights with std `init_scale`, zero biases.

    `task_widths` lists the hidden task-specific layers (the bottleneck);
    the classifier to `num_classes` is always appended. With an empty
    `task_widths` only the classifier carries the prior.

    With `shared_init` every task starts from the same draw, as when all
    task copies are fine-tuned from one set of weights; hidden units then
    line up across tasks.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    trunk = []
    width = input_dim
    for out in trunk_widths:
        trunk.append(DenseLayer(rng.normal(0.0, init_scale, (width, out)), np.zeros(out), "relu"))
        width = out
    sizes = list(task_widths) + [num_classes]
    layer_ids = [BOTTLENECK if len(sizes) == 2 else f"{BOTTLENECK}{i}" for i in range(len(sizes) - 1)]
    layer_ids.append(CLASSIFIER)
    weights, biases = {}, {}
    for layer, out in zip(layer_ids, sizes):
        if shared_init:
            draw = rng.normal(0.0, init_scale, (width, out, 1))
            weights[layer] = np.repeat(draw, num_tasks, axis=2)
        else:
            weights[layer] = rng.normal(0.0, init_scale, (width, out, num_tasks))
        biases[layer] = np.zeros((num_tasks, out))
        width = out
    stack = TaskLayerStack(layer_ids, weights, biases)
    return MultiTaskNet(trunk, stack, list(task_names) if task_names else [])


def _check_task(net: MultiTaskNet, task: int) -> None:
    if not 0 <= task < net.num_tasks:
        raise ArgumentError(f"task index {task} out of range for {net.num_tasks} tasks")


def _check_inputs(net: MultiTaskNet, X: NDArray[np.float64]) -> NDArray[np.float64]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ArgumentError(f"inputs must have {net.input_dim} features, got shape {X.shape}")
    return X


def _relu(z):
    return np.maximum(z, 0.0)


def _forward_cache(net: MultiTaskNet, task: int, X: NDArray[np.float64]):
    """Layer inputs and pre-activations, ending with the classifier logits."""
    inputs, pre = [], []
    h = X
    for layer in net.trunk:
        inputs.append(h)
        z = h @ layer.weight + layer.bias
        pre.append(z)
        h = _relu(z) if layer.activation == "relu" else z
    stack = net.stack
    for i, layer in enumerate(stack.layer_ids):
        inputs.append(h)
        z = h @ stack.weights[layer][:, :, task] + stack.biases[layer][task]
        pre.append(z)
        h = z if i == len(stack.layer_ids) - 1 else _relu(z)
    return inputs, pre


def logits(net: MultiTaskNet, task: int, X: ArrayLike) -> NDArray[np.float64]:
    _check_task(net, task)
    _, pre = _forward_cache(net, task, _check_inputs(net, X))
    return pre[-1]


def softmax(z: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.exp(z - logsumexp(z, axis=-1, keepdims=True))


def forward(net: MultiTaskNet, task: int, x: ArrayLike) -> NDArray[np.float64]:
    """Class probabilities for one input vector (or a batch of rows)."""
    probs = softmax(logits(net, task, x))
    return probs[0] if np.ndim(x) == 1 else probs


def cross_entropy(z: ArrayLike, label) -> float | NDArray[np.float64]:
    """-ln softmax(z)[label] via log-sum-exp; `z` are logits, batched along the first axis."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        return float(logsumexp(z) - z[int(label)])
    label = np.asarray(label, dtype=np.int64)
    return logsumexp(z, axis=1) - z[np.arange(z.shape[0]), label]


def predict(net: MultiTaskNet, task: int, X: ArrayLike) -> NDArray[np.int64]:
    return np.argmax(logits(net, task, X), axis=1)


def accuracy(net: MultiTaskNet, task: int, X: ArrayLike, y: ArrayLike) -> float:
    y = np.asarray(y)
    if y.size == 0:
        raise ArgumentError("accuracy of an empty set is undefined")
    return float(np.mean(predict(net, task, X) == y))


def backward_batch(net: MultiTaskNet, task: int, X: ArrayLike, y: ArrayLike) -> Tuple[float, Gradients]:
    """Summed cross-entropy over the rows of X and its exact gradient.

    Only task `task`'s slices of the stacked tensors and biases are touched;
    every other task's entries stay zero. ReLU'(0) is taken as 0.
    """
    _check_task(net, task)
    X = _check_inputs(net, X)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.shape[0] != X.shape[0]:
        raise ArgumentError(f"{X.shape[0]} inputs but {y.shape[0]} labels")
    if np.any(y < 0) or np.any(y >= net.num_classes):
        raise ArgumentError(f"labels must lie in [0, {net.num_classes})")

    inputs, pre = _forward_cache(net, task, X)
    z = pre[-1]
    loss = float(np.sum(cross_entropy(z, y)))
    delta = softmax(z)
    delta[np.arange(len(y)), y] -= 1.0

    grads = Gradients.zeros_like(net)
    stack = net.stack
    num_trunk = len(net.trunk)
    for i in reversed(range(len(stack.layer_ids))):
        layer = stack.layer_ids[i]
        if i < len(stack.layer_ids) - 1:
            delta = delta * (pre[num_trunk + i] > 0.0)
        h = inputs[num_trunk + i]
        grads.stack_weights[layer][:, :, task] = h.T @ delta
        grads.stack_biases[layer][task] = delta.sum(axis=0)
        delta = delta @ stack.weights[layer][:, :, task].T
    for i in reversed(range(num_trunk)):
        layer = net.trunk[i]
        if layer.activation == "relu":
            delta = delta * (pre[i] > 0.0)
        grads.trunk_weights[i] = inputs[i].T @ delta
        grads.trunk_biases[i] = delta.sum(axis=0)
        delta = delta @ layer.weight.T
    return loss, grads


def backward(net: MultiTaskNet, task: int, x: ArrayLike, label: int) -> Gradients:
    """Gradient of cross_entropy(forward(net, task, x), label)."""
    _, grads = backward_batch(net, task, np.asarray(x, dtype=np.float64)[None, :], [label])
    return grads


def _check_priors(stack: TaskLayerStack, priors: Mapping[str, KronCovariance]) -> None:
    for layer in stack.layer_ids:
        if layer not in priors:
            raise ArgumentError(f"no prior covariance for layer {layer}")
        if priors[layer].dims != stack.dims(layer):
            raise ArgumentError(
                f"layer {layer}: prior dims {priors[layer].dims} do not match weights {stack.dims(layer)}"
            )


def prior_penalty(stack: TaskLayerStack, priors: Mapping[str, KronCovariance]) -> float:
    """1/2 sum_l [vec(W_l)^T S_l^-1 vec(W_l) - D_in D_out ln|S_task,l|].

    Only the task covariance log-determinant enters.
    """
    _check_priors(stack, priors)
    total = 0.0
    for layer in stack.layer_ids:
        cov = priors[layer]
        d_in, d_out, _ = stack.dims(layer)
        quad = mahalanobis(TensorNormal(Tensor3.zeros(cov.dims), cov), stack.tensor(layer))
        total += quad - d_in * d_out * cov.factors[2].logdet
    return 0.5 * total


def prior_solve(stack: TaskLayerStack, priors: Mapping[str, KronCovariance], layer: str) -> NDArray[np.float64]:
    """S_l^-1 vec(W_l) folded back to (D_in, D_out, T); slice t is task t's prior gradient."""
    _check_priors(stack, priors)
    return priors[layer].solve_array(np.array(stack.weights[layer]))


def prior_gradient(
    stack: TaskLayerStack, priors: Mapping[str, KronCovariance], task: int, layer: str
) -> NDArray[np.float64]:
    if layer not in stack.layer_ids:
        raise ArgumentError(f"unknown task-specific layer {layer!r}")
    if not 0 <= task < stack.num_tasks:
        raise ArgumentError(f"task index {task} out of range for {stack.num_tasks} tasks")
    return prior_solve(stack, priors, layer)[:, :, task]
