from handlers.abstract_handler import AbstractHandler
from drn.errors import ArgumentError
from drn.serialization import dumps, relationship_to_csv, relationship_to_dict


class RelationshipExportHandler(AbstractHandler):
    """Renders request["relationship"] as JSON or CSV text."""

    def handle(self, request: dict) -> dict:
        matrix = self.require(request, "relationship")
        names = self.require(request, "task_names")
        fmt = request.get("format") or "json"
        if fmt == "json":
            text = dumps(relationship_to_dict(request["layer"], names, matrix))
        elif fmt == "csv":
            text = relationship_to_csv(names, matrix)
        else:
            raise ArgumentError(f"unknown format {fmt!r}")
        request.update({"text": text})
        return super().handle(request)
