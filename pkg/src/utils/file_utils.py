import json
import logging
import os

from drn.errors import IngestionError

logger = logging.getLogger(__name__)


def write_text(request: dict, path: str, text: str) -> bool:
    """
    Writes text to path, creating parent directories. I/O failures are
    recorded in the request as status/error rather than raised.
    """
    logger.info("Writing to %s", path)
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        request.setdefault("written", []).append(path)
        if request.get("status") is not False:
            request.update({"status": True})
        return True
    except OSError as e:
        logger.error("Cannot write %s: %s", path, e)
        request.update({"status": False, "error": f"{path}: {e}"})
        return False


def read_json(path: str):
    """Parsed JSON document; unreadable or malformed files raise IngestionError with the parse location."""
    logger.info("Reading %s", path)
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise IngestionError(f"cannot read file ({e.strerror})", path) from e
    except json.JSONDecodeError as e:
        raise IngestionError(f"malformed JSON: {e.msg} at line {e.lineno}, column {e.colno}", path, e.lineno) from e
