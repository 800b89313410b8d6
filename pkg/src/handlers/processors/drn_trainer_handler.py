import dataclasses
import logging
import numpy as np
from handlers.abstract_handler import AbstractHandler
from drn.mtl_net import init_net
from drn.trainer import train

logger = logging.getLogger(__name__)


class DrnTrainerHandler(AbstractHandler):
    """
    Builds the network for the configured variant and trains it on
    request["train"], reporting accuracy on request["test"] every epoch.

    drn and drn8 learn task relationships under the tensor normal prior;
    stl and mtl train without it and leave request["covariance"] empty.
    """

    def handle(self, request: dict) -> dict:
        config = self.require(request, "config")
        data = self.require(request, "train")
        test = request.get("test")
        model = config.model

        trunk_widths, task_widths = model.layer_widths()
        net = init_net(
            data.feature_dim,
            data.num_classes,
            data.num_tasks,
            trunk_widths=trunk_widths,
            task_widths=task_widths,
            init_scale=model.init_scale,
            rng=np.random.default_rng([config.train.seed, 1]),
            task_names=data.task_names,
            shared_init=model.shared_init,
        )
        cfg = config.train if model.uses_prior else dataclasses.replace(config.train, prior_weight=0.0)
        logger.info(
            "Training %s: trunk %s, task-specific layers %s, %d epochs",
            model.variant,
            trunk_widths,
            list(net.stack.layer_ids),
            cfg.epochs,
        )

        net, covariance, report = train(net, data, cfg, test=test, learn_relationships=model.uses_prior)
        request.update({"net": net, "covariance": covariance, "report": report, "variant": model.variant})
        return super().handle(request)
