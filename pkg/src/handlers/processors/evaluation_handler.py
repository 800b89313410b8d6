import logging
import numpy as np
from handlers.abstract_handler import AbstractHandler
from drn.errors import ArgumentError, SplitError
from drn.mtl_net import accuracy
from drn.serialization import accuracy_csv

logger = logging.getLogger(__name__)


class EvaluationHandler(AbstractHandler):
    """Per-task accuracy of request["net"] on request[request["subset"]] (default "test") as CSV text."""

    def handle(self, request: dict) -> dict:
        net = self.require(request, "net")
        subset = request.get("subset") or "test"
        data = self.require(request, subset)
        if data.num_tasks != net.num_tasks:
            raise ArgumentError(f"model has {net.num_tasks} tasks, data has {data.num_tasks}")
        if data.feature_dim != net.input_dim:
            raise ArgumentError(f"model takes {net.input_dim} features, data has {data.feature_dim}")
        if data.num_classes != net.num_classes:
            raise ArgumentError(f"model predicts {net.num_classes} classes, data declares {data.num_classes}")
        if any(n == 0 for n in data.sizes):
            raise SplitError(f"empty {subset} set for at least one task: sizes {data.sizes}")
        if list(data.task_names) != list(net.task_names):
            logger.warning("Task names differ (%s vs %s); matching tasks by position", data.task_names, net.task_names)

        accuracies = [accuracy(net, t, data.features[t], data.labels[t]) for t in range(data.num_tasks)]
        logger.info("Average %s accuracy %.4f", subset, float(np.mean(accuracies)))
        request.update({"accuracies": accuracies, "text": accuracy_csv(net.task_names, accuracies)})
        return super().handle(request)
