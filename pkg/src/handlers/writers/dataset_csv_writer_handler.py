import logging
from handlers.abstract_handler import AbstractHandler
from drn.data import write_csv, write_manifest

logger = logging.getLogger(__name__)


class DatasetCsvWriterHandler(AbstractHandler):
    """One <task>.csv per task plus manifest.json under request["output_dir"]."""

    def handle(self, request: dict) -> dict:
        dataset = self.require(request, "dataset")
        output_dir = self.require(request, "output_dir")
        logger.info("Writing dataset to %s", output_dir)
        try:
            file_names = write_csv(dataset, output_dir)
            manifest = write_manifest(dataset, output_dir, file_names)
            request.update({"status": True, "written": [*file_names, manifest]})
        except OSError as e:
            logger.error("Cannot write dataset: %s", e)
            request.update({"status": False, "error": str(e)})
        return super().handle(request)
