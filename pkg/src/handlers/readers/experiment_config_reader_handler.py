import logging
import os
from handlers.abstract_handler import AbstractHandler
from drn.config import parse_experiment, with_seed
from utils.config_overrides import apply_overrides
from utils.file_utils import read_json

logger = logging.getLogger(__name__)


class ExperimentConfigReaderHandler(AbstractHandler):
    """
    Loads request["config_path"], applies the --set overrides and the --seed
    override, and stores the validated ExperimentConfig in request["config"].
    A relative data.manifest is resolved against the config file's directory.
    """

    def handle(self, request: dict) -> dict:
        path = self.require(request, "config_path")
        document = apply_overrides(read_json(path), request.get("overrides"))
        config = parse_experiment(document)
        if request.get("seed") is not None:
            config = with_seed(config, request["seed"])

        manifest = config.manifest
        if manifest and not os.path.isabs(manifest):
            manifest = os.path.join(os.path.dirname(path), manifest)
        logger.info("Experiment: variant %s, data %s", config.model.variant, manifest or "synthetic")
        request.update({"config": config, "manifest": manifest})
        return super().handle(request)
