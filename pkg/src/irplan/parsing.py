"""Helpers for pulling structured payloads out of free-form generations."""

from __future__ import annotations

import json
from collections.abc import Iterator
from typing import Any

from irplan.errors import MalformedObject, MissingField

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"

_decoder = json.JSONDecoder()


def strip_reasoning(text: str) -> str:
    """Drop a leading ``<think>...</think>`` block.

    An opener without a closer means the whole remainder is reasoning, so the
    payload is empty. Text without an opener is returned unchanged.
    """
    head = text.lstrip()
    if not head.startswith(THINK_OPEN):
        # Prompts end with the opener, so generations often carry only the closer.
        before, sep, after = text.partition(THINK_CLOSE)
        if sep and THINK_OPEN not in before:
            return after.strip()
        return text
    end = head.find(THINK_CLOSE)
    if end < 0:
        return ""
    return head[end + len(THINK_CLOSE):].strip()


def iter_json_objects(text: str) -> Iterator[dict[str, Any]]:
    """Yield every top-level JSON object found in ``text``, left to right."""
    pos = text.find("{")
    while pos >= 0:
        try:
            obj, end = _decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            pos = text.find("{", pos + 1)
            continue
        if isinstance(obj, dict):
            yield obj
            pos = text.find("{", end)
        else:
            pos = text.find("{", pos + 1)


def first_json_object(text: str) -> dict[str, Any]:
    for obj in iter_json_objects(text):
        return obj
    raise MalformedObject("no JSON object in generation")


def payload_of(text: str) -> str:
    """Generation payload: text after the reasoning block, or the raw text."""
    stripped = strip_reasoning(text)
    return stripped if stripped else text


def get_string(obj: dict[str, Any], key: str) -> str:
    """Case-insensitive string property lookup."""
    for k, v in obj.items():
        if isinstance(k, str) and k.casefold() == key.casefold():
            if not isinstance(v, str):
                raise MalformedObject(f"property {key!r} must be a string")
            return v
    raise MissingField(key)
