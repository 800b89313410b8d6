import importlib
import pathlib
from typing import Dict, Type
from handlers.abstract_handler import AbstractHandler
from drn.errors import ArgumentError


class HandlerFactory:
    _handlers: Dict[str, Type[AbstractHandler]] = {}

    @classmethod
    def discover_handlers(cls, root_path=None):
        # Defaults to this package, so discovery works from any working directory
        root = pathlib.Path(root_path) if root_path else pathlib.Path(__file__).parent

        for path in sorted(root.rglob('*.py')):
            if path.name == '__init__.py':
                continue

            # handlers/writers/x.py -> handlers.writers.x
            relative_path = path.relative_to(root.parent)
            module_path = '.'.join(relative_path.with_suffix('').parts)

            module = importlib.import_module(module_path)

            for attribute_name in dir(module):
                attribute = getattr(module, attribute_name)
                if isinstance(attribute, type) and issubclass(attribute, AbstractHandler) and attribute is not AbstractHandler:
                    cls._handlers[attribute.__name__] = attribute

    @classmethod
    def get_handler(cls, handler_type):
        if not cls._handlers:
            cls.discover_handlers()
        handler_class = cls._handlers.get(handler_type)
        if handler_class:
            return handler_class()
        else:
            raise ArgumentError(f"Handler not found for type: {handler_type}")

    @classmethod
    def chain(cls, *handler_types):
        """Instantiate the named handlers and link them in order; returns the head."""
        handlers = [cls.get_handler(name) for name in handler_types]
        for current, following in zip(handlers, handlers[1:]):
            current.set_next(following)
        return handlers[0]
