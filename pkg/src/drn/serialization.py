"""
File formats.

All numbers are written with 17 significant digits so every float64 reads
back bit-identical; field order is fixed so identical runs give identical
bytes.

model.json (checkpoint):
    format, task_names, variant, input_dim, num_classes,
    trunk:     [{in_dim, out_dim, activation, weight (row-major), bias}],
    stack:     {layer_ids, layers: [{id, dims [D_in, D_out, T], weight (row-major over
               (i_in, i_out, t)), bias (row-major over (t, out))}]},
    covariance: null | {shared, layers: [{id, feature, class, task}]} (row-major matrices)

relationship_<layer>.json:
    {layer, task_names, matrix}

report.csv:
    epoch, objective, train_acc_<task>..., test_acc_<task>...[, sgd_seconds, cov_seconds]
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from drn.errors import ArgumentError, IngestionError
from drn.kron_gauss import KronCovariance
from drn.mtl_net import DenseLayer, MultiTaskNet, TaskLayerStack
from drn.tensor_core import Tensor3
from drn.trainer import CovarianceState, TrainReport

CHECKPOINT_FORMAT = "drn-checkpoint/1"


def format_number(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if not math.isfinite(value):
        raise ArgumentError(f"cannot serialize non-finite number {value}")
    text = format(value, ".17g")
    if "e" not in text and "." not in text:
        text += ".0"
    return text


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with 17-significant-digit floats; numeric lists stay on one line."""

    def encode(value, depth):
        pad = " " * (indent * (depth + 1))
        end = " " * (indent * depth)
        if value is None:
            return "null"
        if isinstance(value, str):
            return json.dumps(value)
        if isinstance(value, (bool, int, float, np.number, np.bool_)):
            return format_number(value)
        if isinstance(value, np.ndarray):
            value = value.tolist()
        if isinstance(value, dict):
            if not value:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {encode(v, depth + 1)}" for k, v in value.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(value, (list, tuple)):
            if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in value):
                return "[" + ", ".join(format_number(v) for v in value) + "]"
            if not value:
                return "[]"
            return "[\n" + ",\n".join(pad + encode(v, depth + 1) for v in value) + "\n" + end + "]"
        raise ArgumentError(f"cannot serialize {type(value).__name__}")

    return encode(obj, 0) + "\n"


def _matrix(values: Any, rows: int, cols: int, what: str) -> NDArray[np.float64]:
    flat = np.asarray(values, dtype=np.float64).ravel()
    if flat.size != rows * cols:
        raise IngestionError(f"{what}: expected {rows * cols} values, got {flat.size}")
    return flat.reshape(rows, cols)


def checkpoint_to_dict(net: MultiTaskNet, variant: str, cov: Optional[CovarianceState]) -> Dict[str, Any]:
    trunk = [
        {
            "in_dim": layer.weight.shape[0],
            "out_dim": layer.weight.shape[1],
            "activation": layer.activation,
            "weight": layer.weight.ravel(),
            "bias": layer.bias,
        }
        for layer in net.trunk
    ]
    stack = {
        "layer_ids": list(net.stack.layer_ids),
        "layers": [
            {
                "id": layer,
                "dims": list(net.stack.dims(layer)),
                "weight": net.stack.weights[layer].ravel(),
                "bias": net.stack.biases[layer].ravel(),
            }
            for layer in net.stack.layer_ids
        ],
    }
    covariance = None
    if cov is not None:
        covariance = {
            "shared": cov.shared,
            "layers": [
                {
                    "id": layer,
                    "feature": kron.factors[0].matrix.ravel(),
                    "class": kron.factors[1].matrix.ravel(),
                    "task": kron.factors[2].matrix.ravel(),
                }
                for layer, kron in cov.layers.items()
            ],
        }
    return {
        "format": CHECKPOINT_FORMAT,
        "task_names": list(net.task_names),
        "variant": variant,
        "input_dim": net.input_dim,
        "num_classes": net.num_classes,
        "trunk": trunk,
        "stack": stack,
        "covariance": covariance,
    }


def checkpoint_from_dict(doc: Dict[str, Any]):
    """Returns (net, variant, covariance state or None)."""
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise IngestionError(f"not a {CHECKPOINT_FORMAT} document")
    try:
        trunk = [
            DenseLayer(
                _matrix(layer["weight"], layer["in_dim"], layer["out_dim"], "trunk weight"),
                np.asarray(layer["bias"], dtype=np.float64),
                layer["activation"],
            )
            for layer in doc["trunk"]
        ]
        weights, biases = {}, {}
        for layer in doc["stack"]["layers"]:
            d_in, d_out, tasks = layer["dims"]
            weights[layer["id"]] = _matrix(layer["weight"], d_in * d_out, tasks, "stack weight").reshape(
                d_in, d_out, tasks
            )
            biases[layer["id"]] = _matrix(layer["bias"], tasks, d_out, "stack bias")
        stack = TaskLayerStack(list(doc["stack"]["layer_ids"]), weights, biases)
        net = MultiTaskNet(trunk, stack, list(doc["task_names"]))
        cov = None
        if doc.get("covariance"):
            layers = {}
            for entry in doc["covariance"]["layers"]:
                d_in, d_out, tasks = stack.dims(entry["id"])
                layers[entry["id"]] = KronCovariance.from_matrices(
                    [
                        _matrix(entry["feature"], d_in, d_in, "feature covariance"),
                        _matrix(entry["class"], d_out, d_out, "class covariance"),
                        _matrix(entry["task"], tasks, tasks, "task covariance"),
                    ]
                )
            cov = CovarianceState(layers, bool(doc["covariance"]["shared"]))
        return net, doc.get("variant", "drn"), cov
    except (KeyError, TypeError, ValueError) as e:
        raise IngestionError(f"malformed checkpoint: {e}") from e


def relationship_to_dict(layer: str, task_names: Sequence[str], matrix: NDArray[np.float64]) -> Dict[str, Any]:
    return {"layer": layer, "task_names": list(task_names), "matrix": [list(row) for row in matrix]}


def relationship_from_dict(doc: Dict[str, Any]):
    try:
        names = list(doc["task_names"])
        matrix = np.asarray(doc["matrix"], dtype=np.float64)
        if matrix.shape != (len(names), len(names)):
            raise ValueError(f"matrix of shape {matrix.shape} for {len(names)} tasks")
        return str(doc["layer"]), names, matrix
    except (KeyError, TypeError, ValueError) as e:
        raise IngestionError(f"malformed relationship document: {e}") from e


def relationship_to_csv(task_names: Sequence[str], matrix: NDArray[np.float64]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["task", *task_names])
    for name, row in zip(task_names, matrix):
        writer.writerow([name, *(format_number(v) for v in row)])
    return buffer.getvalue()


def report_to_csv(report: TrainReport, timings: bool = False) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    has_test = any(r.test_accuracy is not None for r in report.epochs)
    header = ["epoch", "objective", *(f"train_acc_{n}" for n in report.task_names)]
    if has_test:
        header += [f"test_acc_{n}" for n in report.task_names]
    if timings:
        header += ["sgd_seconds", "cov_seconds"]
    writer.writerow(header)
    for record in report.epochs:
        row = [str(record.epoch), format_number(record.objective)]
        row += [format_number(a) for a in record.train_accuracy]
        if has_test:
            row += [format_number(a) for a in record.test_accuracy]
        if timings:
            row += [f"{record.sgd_seconds:.6f}", f"{record.cov_seconds:.6f}"]
        writer.writerow(row)
    return buffer.getvalue()


def accuracy_csv(task_names: Sequence[str], accuracies: Sequence[float]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["task", "accuracy"])
    for name, acc in zip(task_names, accuracies):
        writer.writerow([name, format_number(acc)])
    writer.writerow(["average", format_number(float(np.mean(accuracies)))])
    return buffer.getvalue()


def samples_from_dict(doc: Dict[str, Any]) -> List[Tensor3]:
    """{"dims": [d1, d2, d3], "samples": [[row-major values], ...]}"""
    try:
        dims = [int(d) for d in doc["dims"]]
        return [Tensor3.from_buffer(dims, s) for s in doc["samples"]]
    except (KeyError, TypeError, ValueError) as e:
        raise IngestionError(f"malformed samples document: {e}") from e


def samples_to_dict(samples: Sequence[Tensor3]) -> Dict[str, Any]:
    return {"dims": list(samples[0].dims), "samples": [s.buffer for s in samples]}


def fit_result_to_dict(mean: Tensor3, factors: KronCovariance, scale: float, result) -> Dict[str, Any]:
    return {
        "dims": list(mean.dims),
        "mean": mean.buffer,
        "factors": [f.matrix.ravel() for f in factors.factors],
        "scale": scale,
        "iterations": result.iterations,
        "converged": result.converged,
        "log_likelihood": result.log_likelihood,
    }
