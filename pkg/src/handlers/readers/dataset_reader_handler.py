import logging
import numpy as np
from handlers.abstract_handler import AbstractHandler
from drn.data import SyntheticSpec, generate_synthetic, load_manifest
from drn.errors import ConfigError

logger = logging.getLogger(__name__)


class DatasetReaderHandler(AbstractHandler):
    """
    Puts a MultiTaskDataset in request["dataset"]: read from request["manifest"]
    when set, otherwise drawn from the synthetic section of request["config"].
    For synthetic data the generating weights go to request["true_weights"].
    """

    def handle(self, request: dict) -> dict:
        if request.get("manifest"):
            dataset = load_manifest(request["manifest"])
        else:
            config = request.get("config")
            if config is None or config.synthetic is None:
                raise ConfigError("no dataset: give a manifest or a synthetic data section")
            dataset, weights = generate_synthetic(self.synthetic_spec(config.synthetic))
            request.update({"true_weights": weights})
            logger.info("Generated synthetic dataset with seed %d", config.synthetic.seed)

        logger.info(
            "Dataset: %d tasks, %d features, %d classes, sizes %s",
            dataset.num_tasks,
            dataset.feature_dim,
            dataset.num_classes,
            dataset.sizes,
        )
        request.update({"dataset": dataset})
        return super().handle(request)

    @staticmethod
    def synthetic_spec(section) -> SyntheticSpec:
        omega = section.task_covariance
        if omega is None:
            omega = np.eye(section.num_tasks)
        return SyntheticSpec(
            num_tasks=section.num_tasks,
            feature_dim=section.feature_dim,
            num_classes=section.num_classes,
            samples_per_task=section.samples_per_task,
            task_covariance=np.asarray(omega, dtype=np.float64),
            noise_scale=section.noise_scale,
            seed=section.seed,
        )
