import glob
import logging
import os
from handlers.abstract_handler import AbstractHandler
from drn.errors import IngestionError
from drn.serialization import relationship_from_dict
from utils.file_utils import read_json

logger = logging.getLogger(__name__)


class RelationshipReaderHandler(AbstractHandler):
    """Reads relationship_<layer>.json from request["model_dir"]."""

    def handle(self, request: dict) -> dict:
        model_dir = self.require(request, "model_dir")
        layer = self.require(request, "layer")
        path = os.path.join(model_dir, f"relationship_{layer}.json")
        if not os.path.isfile(path):
            available = sorted(
                os.path.basename(p)[len("relationship_") : -len(".json")]
                for p in glob.glob(os.path.join(model_dir, "relationship_*.json"))
            )
            raise IngestionError(
                f"no relationship for layer {layer!r}; available: {', '.join(available) or 'none'}", model_dir
            )
        stored_layer, task_names, matrix = relationship_from_dict(read_json(path))
        if stored_layer != layer:
            raise IngestionError(f"file holds layer {stored_layer!r}, not {layer!r}", path)
        request.update({"task_names": task_names, "relationship": matrix})
        return super().handle(request)
