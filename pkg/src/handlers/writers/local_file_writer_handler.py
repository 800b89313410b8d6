from handlers.abstract_handler import AbstractHandler
from utils.file_utils import write_text


class LocalFileWriterHandler(AbstractHandler):
    """Writes request["text"] to request["write_file_path"], replacing any existing file."""

    def handle(self, request: dict) -> dict:
        write_text(request, self.require(request, "write_file_path"), request.get("text") or "")
        return super().handle(request)
