import os
from handlers.abstract_handler import AbstractHandler
from drn.serialization import report_to_csv
from utils.file_utils import write_text


class TrainReportWriterHandler(AbstractHandler):
    """report.csv, one row per epoch; wall-clock columns only with request["timings"]."""

    def handle(self, request: dict) -> dict:
        report = self.require(request, "report")
        text = report_to_csv(report, timings=bool(request.get("timings")))
        write_text(request, os.path.join(self.require(request, "output_dir"), "report.csv"), text)
        return super().handle(request)
