import os
from handlers.abstract_handler import AbstractHandler
from drn.serialization import checkpoint_to_dict, dumps
from utils.file_utils import write_text


class ModelCheckpointWriterHandler(AbstractHandler):
    def handle(self, request: dict) -> dict:
        net = self.require(request, "net")
        document = checkpoint_to_dict(net, request.get("variant", "drn"), request.get("covariance"))
        write_text(request, os.path.join(self.require(request, "output_dir"), "model.json"), dumps(document))
        return super().handle(request)
