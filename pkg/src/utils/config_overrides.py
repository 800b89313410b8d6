# Python Built-Ins:
import json
import logging
from typing import Any, Iterable

# External Dependencies:
from jsonpath_ng import parse
from jsonpath_ng.exceptions import JsonPathLexerError, JsonPathParserError

from drn.errors import ConfigError

logger = logging.getLogger(__name__)


def parse_override(text: str):
    """'$.train.epochs=5' -> (jsonpath expression, 5). The value is JSON."""
    path, sep, raw = text.partition("=")
    if not sep or not path.strip():
        raise ConfigError(f"override {text!r} is not of the form <jsonpath>=<json value>")
    try:
        expression = parse(path.strip())
    except (JsonPathLexerError, JsonPathParserError) as e:
        raise ConfigError(f"override {text!r}: bad JSONPath ({e})") from e
    try:
        value = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"override {text!r}: value is not JSON ({e.msg})") from e
    return expression, value


def apply_overrides(document: Any, overrides: Iterable[str]) -> Any:
    """Set every addressed field, creating missing keys, before the config is validated."""
    for text in overrides or ():
        expression, value = parse_override(text)
        document = expression.update_or_create(document, value)
        logger.info("Config override %s", text)
    return document
