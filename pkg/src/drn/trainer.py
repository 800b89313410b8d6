"""
Alternating optimization of the multi-task objective

    sum_t sum_n CE(f_t(x_n^t), y_n^t)
      + lambda * 1/2 sum_l [vec(W_l)^T S_l^-1 vec(W_l) - D_in D_out ln|S_task,l|]

with S_l = S_feature,l kron S_class,l kron S_task,l.

The covariance sweep keeps every factor at unit trace, which pins the
product's mean eigenvalue to 1 / (D_in D_out T). The prior in the
objective and in the SGD step uses the same factors rescaled to trace
equal to their dimension (mean eigenvalue 1), so with identity factors
and lambda = 1 it is plain unit weight decay.

Each epoch runs momentum SGD over the network with the covariances fixed,
then one ridge-regularized, trace-normalized flip-flop sweep over the
covariances with the weights fixed.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from drn.config import TrainConfig
from drn.data import MultiTaskDataset
from drn.errors import ArgumentError, EstimationError, TrainingError
from drn.kron_gauss import KronCovariance, KronEigenbasis, SpdFactor
from drn.mtl_net import (
    Gradients,
    MultiTaskNet,
    TaskLayerStack,
    accuracy,
    backward_batch,
    cross_entropy,
    logits,
    parameter_arrays,
    prior_penalty,
)
from drn.tensor_core import unfold_array

logger = logging.getLogger(__name__)

SHARED = "shared"
FACTOR_NAMES = ("feature", "class", "task")


@dataclass
class CovarianceState:
    """Per task-specific layer: feature, class and task covariance, all unit trace."""

    layers: Dict[str, KronCovariance]
    shared: bool = False
    residuals: Dict[str, float] = field(default_factory=dict)
    mode3_ops: int = 0

    @classmethod
    def initial(cls, stack: TaskLayerStack, shared: bool = False) -> CovarianceState:
        """identity / dim for every factor."""
        task = SpdFactor.identity(stack.num_tasks, 1.0 / stack.num_tasks)
        layers = {}
        for layer in stack.layer_ids:
            d_in, d_out, _ = stack.dims(layer)
            layers[layer] = KronCovariance(
                (SpdFactor.identity(d_in, 1.0 / d_in), SpdFactor.identity(d_out, 1.0 / d_out), task)
            )
        return cls(layers, shared)

    def task_covariance(self, layer: str) -> SpdFactor:
        if layer == SHARED:
            if not self.shared:
                raise ArgumentError("task covariances are not shared across layers")
            layer = next(iter(self.layers))
        if layer not in self.layers:
            raise ArgumentError(f"no covariance for layer {layer!r}")
        return self.layers[layer].factors[2]

    def priors(self) -> Dict[str, KronCovariance]:
        """Prior covariance per layer: the stored factors rescaled to mean eigenvalue 1."""
        return {layer: kc.unit_variance() for layer, kc in self.layers.items()}


@dataclass
class OptimizerState:
    velocity: Optional[List[NDArray[np.float64]]] = None
    iteration: int = 0


@dataclass
class EpochRecord:
    epoch: int
    objective: float
    train_accuracy: List[float]
    test_accuracy: Optional[List[float]]
    residuals: Dict[str, float]
    sgd_seconds: float
    cov_seconds: float


@dataclass
class TrainReport:
    task_names: List[str]
    epochs: List[EpochRecord] = field(default_factory=list)


def _pooled_index(data: MultiTaskDataset) -> Tuple[NDArray[np.int64], NDArray[np.int64]]:
    tasks = np.concatenate([np.full(n, t, dtype=np.int64) for t, n in enumerate(data.sizes)])
    rows = np.concatenate([np.arange(n, dtype=np.int64) for n in data.sizes])
    return tasks, rows


def sgd_epoch(
    net: MultiTaskNet,
    cov: Optional[CovarianceState],
    data: MultiTaskDataset,
    cfg: TrainConfig,
    state: OptimizerState,
    rng: np.random.Generator,
    epoch: int = 0,
) -> Tuple[MultiTaskNet, OptimizerState]:
    """
    One pass over shuffled mini-batches pooled across tasks.

    Per batch the momentum step follows the mean data gradient. The prior
    then enters as the implicit step

        vec(W) <- (I + step * lambda / (N (1 - momentum)) S^-1)^-1 vec(W)

    on every task-specific weight tensor, N counting the examples of all
    tasks, so one epoch applies the prior once per task. The (1 - momentum)
    factor makes fixed points of the iteration stationary points of the
    objective. S is the covariance from CovarianceState.priors(), held
    fixed for the epoch. Task-specific layers step with learning_rate
    times new_layer_lr_multiplier.
    """
    if data.num_tasks != net.num_tasks or any(n == 0 for n in data.sizes):
        raise ArgumentError("every task needs training data")
    use_prior = cov is not None and cfg.prior_weight > 0
    tasks, rows = _pooled_index(data)
    order = rng.permutation(tasks.size)
    params = parameter_arrays(net)
    if state.velocity is None:
        state.velocity = [np.zeros_like(p) for p, _ in params]
    bases = {}
    if use_prior:
        bases = {layer: KronEigenbasis.from_covariance(prior) for layer, prior in cov.priors().items()}
        logger.debug(
            "epoch %d: largest prior precision %s",
            epoch,
            ", ".join(f"{layer} {b.max_precision():.3g}" for layer, b in bases.items()),
        )
    shrinkage = cfg.prior_weight / (tasks.size * (1.0 - cfg.momentum))

    for batch_no, start in enumerate(range(0, order.size, cfg.batch_size)):
        batch = order[start : start + cfg.batch_size]
        grads = Gradients.zeros_like(net)
        for t in np.unique(tasks[batch]):
            t = int(t)
            picked = rows[batch[tasks[batch] == t]]
            _, g = backward_batch(net, t, data.features[t][picked], data.labels[t][picked])
            grads.add(g)
        grads.scale(1.0 / batch.size)
        if not grads.is_finite():
            raise TrainingError(f"non-finite gradient at epoch {epoch}, batch {batch_no}")

        lr = cfg.learning_rate_at(state.iteration)
        for (param, specific), velocity, g in zip(params, state.velocity, grads.arrays()):
            step = lr * cfg.new_layer_lr_multiplier if specific else lr
            velocity *= cfg.momentum
            velocity += step * g
            param -= velocity
        for layer, basis in bases.items():
            weights = net.stack.weights[layer]
            weights[...] = basis.shrink(weights, lr * cfg.new_layer_lr_multiplier * shrinkage)
        state.iteration += 1
    return net, state


def _normalized(
    matrix: NDArray[np.float64], epsilon: float, name: str, tally: Optional[Dict[str, int]] = None
) -> SpdFactor:
    ridged = matrix + epsilon * np.eye(matrix.shape[0])
    try:
        factor = SpdFactor.from_matrix(ridged / np.trace(ridged))
    except EstimationError as e:
        raise TrainingError(f"{name} covariance is not positive definite after the ridge; raise epsilon_ridge") from e
    if tally is not None:
        tally["cholesky"] = tally.get("cholesky", 0) + factor.dim**3 // 3
    return factor


def _gram(
    weights: NDArray[np.float64],
    factors: Sequence[SpdFactor],
    mode: int,
    tally: Optional[Dict[str, int]] = None,
) -> NDArray[np.float64]:
    """W_(mode) (other two factors)^-1 W_(mode)^T, unscaled."""
    white = KronCovariance(tuple(factors)).whiten(weights, skip=(mode,), tally=tally)
    unfolded = unfold_array(white, mode - 1)
    gram = unfolded @ unfolded.T
    if tally is not None:
        tally["gram"] = tally.get("gram", 0) + unfolded.shape[0] ** 2 * unfolded.shape[1]
    return 0.5 * (gram + gram.T)


def update_covariances(stack: TaskLayerStack, cov: CovarianceState, cfg: TrainConfig) -> CovarianceState:
    """
    One sweep per layer, in order feature, class, task:

        S_in   = normalize(W_(1) (S_out kron S_task)^-1 W_(1)^T / (D_out T) + eps I)
        S_out  = normalize(W_(2) (S_in kron S_task)^-1 W_(2)^T / (D_in T) + eps I)
        S_task = normalize(W_(3) (S_in kron S_out)^-1 W_(3)^T / (D_in D_out) + eps I)

    normalize() scales to unit trace. With a shared task covariance the
    unscaled mode-3 Gram matrices of all layers are pooled (each layer
    weighted by its D_in D_out observations) before the ridge.

    The returned state's mode3_ops counts the multiply-adds spent on the
    task updates: whitening, Gram products and Cholesky factorizations.
    """
    eps = cfg.epsilon_ridge
    residuals: Dict[str, float] = {}
    updated: Dict[str, List[SpdFactor]] = {}
    pooled, pooled_count = None, 0
    tally: Dict[str, int] = {}
    for layer in stack.layer_ids:
        weights = stack.weights[layer]
        if not np.all(np.isfinite(weights)):
            raise TrainingError(f"layer {layer}: non-finite weights")
        d_in, d_out, num_tasks = weights.shape
        factors = list(cov.layers[layer].factors)
        scales = (d_out * num_tasks, d_in * num_tasks, d_in * d_out)
        for k in range(2):
            factors[k] = _normalized(_gram(weights, factors, k + 1) / scales[k], eps, f"{layer} {FACTOR_NAMES[k]}")
        gram = _gram(weights, factors, 3, tally)
        if cov.shared:
            pooled = gram if pooled is None else pooled + gram
            pooled_count += d_in * d_out
        else:
            factors[2] = _normalized(gram / scales[2], eps, f"{layer} task", tally)
        updated[layer] = factors
    if cov.shared:
        task = _normalized(pooled / pooled_count, eps, "shared task", tally)
        for factors in updated.values():
            factors[2] = task

    layers = {}
    for layer, factors in updated.items():
        for name, old, new in zip(FACTOR_NAMES, cov.layers[layer].factors, factors):
            residuals[f"{layer}.{name}"] = float(np.linalg.norm(new.matrix - old.matrix))
        layers[layer] = KronCovariance(tuple(factors))
    return CovarianceState(layers, cov.shared, residuals, sum(tally.values()))


def objective(
    net: MultiTaskNet, cov: Optional[CovarianceState], data: MultiTaskDataset, cfg: TrainConfig
) -> float:
    """Summed cross-entropy over every example plus lambda times the prior penalty under cov.priors()."""
    total = 0.0
    for t in range(data.num_tasks):
        total += float(np.sum(cross_entropy(logits(net, t, data.features[t]), data.labels[t])))
    if cov is not None and cfg.prior_weight > 0:
        total += cfg.prior_weight * prior_penalty(net.stack, cov.priors())
    return total


def task_accuracies(net: MultiTaskNet, data: MultiTaskDataset) -> List[float]:
    return [accuracy(net, t, data.features[t], data.labels[t]) for t in range(data.num_tasks)]


def train(
    net: MultiTaskNet,
    data: MultiTaskDataset,
    cfg: TrainConfig,
    test: Optional[MultiTaskDataset] = None,
    learn_relationships: bool = True,
) -> Tuple[MultiTaskNet, Optional[CovarianceState], TrainReport]:
    """
    Alternates sgd_epoch and update_covariances for cfg.epochs epochs.

    With learn_relationships=False no covariance is kept and the prior is
    dropped (single-task and shared-features baselines); the returned
    covariance state is then None.
    """
    cov = CovarianceState.initial(net.stack, cfg.shared_task_sigma) if learn_relationships else None
    report = TrainReport(list(data.task_names))
    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState()
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        net, state = sgd_epoch(net, cov, data, cfg, state, rng, epoch)
        sgd_seconds = time.perf_counter() - started

        started = time.perf_counter()
        if cov is not None:
            cov = update_covariances(net.stack, cov, cfg)
        cov_seconds = time.perf_counter() - started

        value = objective(net, cov, data, cfg)
        if not math.isfinite(value):
            raise TrainingError(f"objective diverged at epoch {epoch}")
        train_acc = task_accuracies(net, data)
        test_acc = task_accuracies(net, test) if test is not None else None
        record = EpochRecord(
            epoch, value, train_acc, test_acc, dict(cov.residuals) if cov else {}, sgd_seconds, cov_seconds
        )
        report.epochs.append(record)
        logger.info(
            "epoch %d: objective %.6g, train accuracy %.4f%s",
            epoch,
            value,
            float(np.mean(train_acc)),
            f", test accuracy {np.mean(test_acc):.4f}" if test_acc is not None else "",
        )
    return net, cov, report


def extract_relationship(cov: CovarianceState, layer: str) -> NDArray[np.float64]:
    """Task covariance of `layer` (or "shared") rescaled to unit diagonal."""
    sigma = cov.task_covariance(layer).matrix
    diag = np.diag(sigma)
    if np.any(diag <= 0.0):
        raise EstimationError(f"task covariance of layer {layer} has a non-positive diagonal")
    scale = 1.0 / np.sqrt(diag)
    corr = sigma * scale[:, None] * scale[None, :]
    np.fill_diagonal(corr, 1.0)
    return corr


def relationship_layers(cov: CovarianceState) -> List[str]:
    return [SHARED] if cov.shared else list(cov.layers)


def negative_transfer(mtl_accuracy: Mapping[str, float], stl_accuracy: Mapping[str, float]) -> List[str]:
    """Tasks on which the multi-task model is less accurate than the single-task baseline."""
    return [name for name, acc in mtl_accuracy.items() if acc < stl_accuracy[name]]


def learning_rate_grid(low: float = 1e-5, high: float = 1e-2, step: float = math.sqrt(10.0)) -> List[float]:
    """Multiplicative search grid low, low*step, ... up to high."""
    if not (0 < low <= high and step > 1):
        raise ArgumentError("need 0 < low <= high and step > 1")
    count = int(math.floor(math.log(high / low) / math.log(step) + 1e-9)) + 1
    return [low * step**k for k in range(count)]
