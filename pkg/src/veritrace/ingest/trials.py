"""Clinical-trial registry JSON parsing and results filtering.

Trial files carry three top-level sections (protocolSection, resultsSection,
derivedSection); the protocol is mandatory and unknown top-level keys are
preserved verbatim so re-serialization is lossless.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import VeritraceError

_NCT_ID = re.compile(r"^NCT\d{8}$")
_SECTION_KEYS = ("protocolSection", "resultsSection", "derivedSection")


@dataclass
class TrialRecord:
    nct_id: str
    protocol: dict
    results: Optional[dict] = None
    derived: Optional[dict] = None
    extras: dict = field(default_factory=dict)

    def to_raw(self) -> dict:
        raw = {"protocolSection": self.protocol}
        if self.results is not None:
            raw["resultsSection"] = self.results
        if self.derived is not None:
            raw["derivedSection"] = self.derived
        raw.update(self.extras)
        return raw


def parse_trial(raw: dict) -> TrialRecord:
    """Parse one registry record; unknown keys land in ``extras`` verbatim."""
    if not isinstance(raw, dict):
        raise VeritraceError("trial record must be a JSON object")
    if "protocolSection" not in raw:
        raise VeritraceError("protocol section required")
    protocol = raw["protocolSection"]
    nct_id = (
        protocol.get("identificationModule", {}).get("nctId")
        if isinstance(protocol, dict)
        else None
    )
    if not nct_id or not _NCT_ID.match(str(nct_id)):
        raise VeritraceError(f"malformed nct id: {nct_id!r}")
    extras = {k: v for k, v in raw.items() if k not in _SECTION_KEYS}
    return TrialRecord(
        nct_id=str(nct_id),
        protocol=protocol,
        results=raw.get("resultsSection"),
        derived=raw.get("derivedSection"),
        extras=extras,
    )


def load_trial(path) -> TrialRecord:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trial(json.load(fh))


def load_trial_directory(path) -> list[TrialRecord]:
    """All trials from a ``trials/<NCTID>.json`` directory layout, sorted by id."""
    p = Path(path)
    if not p.is_dir():
        raise VeritraceError(f"trial directory not found: {p}")
    return sorted((load_trial(f) for f in p.glob("*.json")), key=lambda t: t.nct_id)


def has_results(record: TrialRecord) -> bool:
    """True iff a non-empty results section is present."""
    return bool(record.results)
