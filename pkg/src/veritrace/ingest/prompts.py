"""Prompt template assets: checksum-verified loading and exact slot substitution."""
from __future__ import annotations

import hashlib
import json
import re
from functools import lru_cache
from importlib import resources

from ..errors import VeritraceError

_SLOT = re.compile(r"\{([a-z_][a-z0-9_]*)\}")


@lru_cache(maxsize=1)
def _manifest() -> dict:
    root = resources.files("veritrace") / "assets" / "prompts"
    with (root / "manifest.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


@lru_cache(maxsize=None)
def _template_body(template_id: str) -> str:
    manifest = _manifest()
    if template_id not in manifest:
        raise VeritraceError(f"unknown template_id {template_id!r}")
    entry = manifest[template_id]
    root = resources.files("veritrace") / "assets" / "prompts"
    body = (root / entry["file"]).read_text(encoding="utf-8")
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if digest != entry["sha256"]:
        raise VeritraceError(
            f"template {template_id!r} fails its checksum; assets are read-only"
        )
    declared = set(entry["slots"])
    used = set(_SLOT.findall(body))
    if used - declared:
        raise VeritraceError(
            f"template {template_id!r} uses undeclared slots {sorted(used - declared)}"
        )
    return body


def template_ids() -> list[str]:
    return sorted(_manifest())


def template_slots(template_id: str) -> list[str]:
    manifest = _manifest()
    if template_id not in manifest:
        raise VeritraceError(f"unknown template_id {template_id!r}")
    return list(manifest[template_id]["slots"])


def render_prompt(template_id: str, slots: dict[str, str]) -> str:
    """Substitute slot values into a template body, nothing else.

    Single-pass substitution over the original body only, so slot values
    containing braces are never re-expanded and rendering is idempotent for
    identical inputs.
    """
    body = _template_body(template_id)
    declared = template_slots(template_id)
    missing = [name for name in declared if name not in slots]
    if missing:
        raise VeritraceError(
            f"template {template_id!r} is missing slot values for {missing}"
        )

    def _sub(match: re.Match) -> str:
        return str(slots[match.group(1)])

    return _SLOT.sub(_sub, body)
