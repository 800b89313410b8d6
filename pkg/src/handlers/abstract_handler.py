from __future__ import annotations
from abc import abstractmethod
from typing import Any, Optional
from handlers.handler import Handler
from drn.errors import ArgumentError


class AbstractHandler(Handler):
    """
    Default chaining: forward the request to the next handler, or return it
    when this is the last link.
    """

    _next_handler: Optional[Handler] = None

    def set_next(self, handler: Handler) -> Handler:
        self._next_handler = handler
        # Returning the handler lets chains be written in one line:
        # reader.set_next(trainer).set_next(writer)
        return handler

    @abstractmethod
    def handle(self, request: dict) -> dict:
        if self._next_handler:
            return self._next_handler.handle(request)

        return request

    @staticmethod
    def require(request: dict, key: str) -> Any:
        """Fetch a value an earlier handler must have put in the request."""
        if request.get(key) is None:
            raise ArgumentError(f"request has no '{key}'; check the handler chain order")
        return request[key]
