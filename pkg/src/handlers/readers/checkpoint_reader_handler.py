import logging
import os
from handlers.abstract_handler import AbstractHandler
from drn.serialization import checkpoint_from_dict
from utils.file_utils import read_json

logger = logging.getLogger(__name__)


class CheckpointReaderHandler(AbstractHandler):
    """request["model_path"] (a model.json or a run directory) -> net, variant, covariance."""

    def handle(self, request: dict) -> dict:
        path = self.require(request, "model_path")
        if os.path.isdir(path):
            path = os.path.join(path, "model.json")
        net, variant, covariance = checkpoint_from_dict(read_json(path))
        logger.info("Loaded %s model with %d tasks from %s", variant, net.num_tasks, path)
        request.update({"net": net, "variant": variant, "covariance": covariance})
        return super().handle(request)
