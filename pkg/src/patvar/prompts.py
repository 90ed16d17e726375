"""Loading and slot-filling for the prompt template fixtures in prompts/.

Templates are JSON message lists with {slot} placeholders. Slots are
substituted by literal replacement (not str.format) because slot names may
contain hyphens and template text may contain stray braces.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Mapping

from .gateway import ChatMessage

SEPARATOR_MAX_TOKENS = 512
GENERATION_MAX_TOKENS = 256
DISCRIMINATOR_MAX_TOKENS = 16


@lru_cache(maxsize=None)
def load_template(name: str) -> tuple[ChatMessage, ...]:
    text = resources.files("patvar").joinpath(f"prompts/{name}.json").read_text("utf-8")
    return tuple(ChatMessage(m["role"], m["content"]) for m in json.loads(text))


def fill(messages: tuple[ChatMessage, ...], slots: Mapping[str, str]) -> list[ChatMessage]:
    out = []
    for msg in messages:
        content = msg.content
        for name, value in slots.items():
            content = content.replace("{" + name + "}", value)
        out.append(ChatMessage(msg.role, content))
    return out
