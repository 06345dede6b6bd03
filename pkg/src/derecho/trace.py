"""Line-oriented trace files: one JSON object per ProtocolEvent."""

from __future__ import annotations

import json
from dataclasses import asdict

from .events import KINDS, ProtocolEvent

FIELDS = ("kind", "node", "vid", "gidx", "client_id", "request_id", "payload_digest",
          "t", "step", "members")
REQUIRED = ("kind", "node", "vid", "t", "step")


class TraceFormatError(ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def dumps_event(ev: ProtocolEvent) -> str:
    record = asdict(ev)
    if record["members"] is not None:
        record["members"] = list(record["members"])
    return json.dumps({k: record[k] for k in FIELDS}, separators=(",", ":"))


def loads_event(line: str, line_no: int = 0) -> ProtocolEvent:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(line_no, f"malformed record: {exc.msg}") from None
    if not isinstance(record, dict):
        raise TraceFormatError(line_no, "record is not an object")
    unknown = set(record) - set(FIELDS)
    if unknown:
        raise TraceFormatError(line_no, f"unknown fields {sorted(unknown)}")
    missing = [k for k in REQUIRED if k not in record]
    if missing:
        raise TraceFormatError(line_no, f"missing fields {missing}")
    if record["kind"] not in KINDS:
        raise TraceFormatError(line_no, f"unknown event kind {record['kind']!r}")
    for name in ("node", "vid", "t", "step"):
        if not isinstance(record[name], int):
            raise TraceFormatError(line_no, f"field {name} must be an integer")
    if record.get("members") is not None:
        record["members"] = tuple(record["members"])
    return ProtocolEvent(**record)


def write_trace(path, events):
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(dumps_event(ev))
            fh.write("\n")


def read_trace(path) -> list:
    events = []
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    elif lines:
        raise TraceFormatError(len(lines), "truncated record (no trailing newline)")
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        events.append(loads_event(line, line_no))
    return events
