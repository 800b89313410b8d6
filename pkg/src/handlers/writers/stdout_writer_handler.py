import sys
from handlers.abstract_handler import AbstractHandler


class StdoutWriterHandler(AbstractHandler):
    """Command results go to standard output; logs stay on standard error."""

    def handle(self, request: dict) -> dict:
        sys.stdout.write(request.get("text") or "")
        sys.stdout.flush()
        request.setdefault("status", True)
        return super().handle(request)
