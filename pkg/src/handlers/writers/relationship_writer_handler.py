import logging
import os
from handlers.abstract_handler import AbstractHandler
from drn.serialization import dumps, relationship_to_dict
from drn.trainer import extract_relationship, relationship_layers
from utils.file_utils import write_text

logger = logging.getLogger(__name__)


class RelationshipWriterHandler(AbstractHandler):
    """
    relationship_<layer>.json with the task correlation matrix for every
    layer under the prior ("shared" when one task covariance spans all
    layers). Variants without a prior write nothing.
    """

    def handle(self, request: dict) -> dict:
        covariance = request.get("covariance")
        if covariance is None:
            logger.info("No task relationships learned by this variant")
            return super().handle(request)

        net = self.require(request, "net")
        output_dir = self.require(request, "output_dir")
        for layer in relationship_layers(covariance):
            document = relationship_to_dict(layer, net.task_names, extract_relationship(covariance, layer))
            write_text(request, os.path.join(output_dir, f"relationship_{layer}.json"), dumps(document))
        return super().handle(request)
