from __future__ import annotations
from abc import ABC, abstractmethod
from typing import Optional


class Handler(ABC):
    """
    One step of a command pipeline. Handlers are linked with set_next and
    each one reads what it needs from the request dict, adds its results
    and passes the request on.
    """

    @abstractmethod
    def set_next(self, handler: Handler) -> Handler:
        pass

    @abstractmethod
    def handle(self, request: dict) -> Optional[dict]:
        pass
