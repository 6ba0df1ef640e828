"""JSON-lines trace shared by the simulator and the protocol nodes."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

US_PER_S = 1_000_000


def seconds(value: float) -> int:
    """Convert seconds to integer virtual-clock microseconds."""
    return round(value * US_PER_S)


def fmt_time(t_us: int) -> str:
    return f"{t_us // US_PER_S}.{t_us % US_PER_S:06d}"


class Trace:
    """Ordered list of trace events; serialises to byte-stable JSON lines."""

    def __init__(self) -> None:
        self.events: list[dict[str, Any]] = []

    def emit(self, t_us: int, event: str, **fields: Any) -> dict[str, Any]:
        rec: dict[str, Any] = {"time": t_us / US_PER_S, "t_us": t_us, "event": event}
        rec.update((k, v) for k, v in fields.items() if v is not None)
        self.events.append(rec)
        return rec

    def of(self, *events: str) -> list[dict[str, Any]]:
        return [e for e in self.events if e["event"] in events]

    def dumps(self) -> str:
        return "".join(json.dumps(e, separators=(",", ":")) + "\n" for e in self.events)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def load(path: str | Path) -> list[dict[str, Any]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def schema() -> dict[str, Any]:
    text = resources.files("swforge").joinpath("trace_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def event_names() -> Iterable[str]:
    return schema()["properties"]["event"]["enum"]
