import logging
from handlers.abstract_handler import AbstractHandler
from drn.errors import IngestionError
from drn.serialization import samples_from_dict
from utils.file_utils import read_json

logger = logging.getLogger(__name__)


class TensorSamplesReaderHandler(AbstractHandler):
    """
    Reads {"dims": [d1, d2, d3], "samples": [[...], ...]} from request["path"]
    into request["samples"], a list of Tensor3.
    """

    def handle(self, request: dict) -> dict:
        path = self.require(request, "path")
        samples = samples_from_dict(read_json(path))
        if not samples:
            raise IngestionError("no samples", path)
        logger.info("Read %d samples of dims %s", len(samples), samples[0].dims)
        request.update({"samples": samples})
        return super().handle(request)
