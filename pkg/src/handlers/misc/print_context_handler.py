import logging

import numpy as np

from handlers.abstract_handler import AbstractHandler

logger = logging.getLogger(__name__)


class PrintContextHandler(AbstractHandler):
    """
    Logs a summary of the request: every key with the type of its value,
    plus the shape for arrays. Appended by --debug.
    """

    def handle(self, request: dict) -> dict:
        logger.info("============================================================")
        for key in sorted(request):
            logger.info("%s: %s", key, self.describe(request[key]))
        logger.info("============================================================")

        return super().handle(request)

    @staticmethod
    def describe(value) -> str:
        if isinstance(value, np.ndarray):
            return f"ndarray{value.shape}"
        if isinstance(value, (str, int, float, bool)) or value is None:
            text = repr(value)
            return text if len(text) <= 80 else text[:77] + "..."
        if isinstance(value, (list, tuple)):
            return f"{type(value).__name__} of {len(value)}"
        return type(value).__name__
