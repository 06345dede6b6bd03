from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

REQUEST_RECEIVED = "request_received"
DELIVER = "deliver_upcall"
EXECUTE = "execute"
VIEW_INSTALLED = "view_installed"
KINDS = (REQUEST_RECEIVED, DELIVER, EXECUTE, VIEW_INSTALLED)


def digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class Request:
    client_id: int
    request_id: int
    payload: bytes = b""

    @property
    def key(self) -> tuple:
        return (self.client_id, self.request_id, digest(self.payload))


@dataclass(frozen=True)
class ProtocolEvent:
    kind: str
    node: int
    vid: int
    step: int = 0
    t: int = 0
    gidx: Optional[int] = None
    client_id: Optional[int] = None
    request_id: Optional[int] = None
    payload_digest: Optional[str] = None
    members: Optional[tuple] = None

    @property
    def request(self) -> Optional[tuple]:
        if self.client_id is None:
            return None
        return (self.client_id, self.request_id, self.payload_digest)

    @property
    def index(self) -> tuple:
        """Position in the global order: views first, then global index."""
        return (self.vid, self.gidx)
