"""In-memory session store with LRU eviction."""
from __future__ import annotations

import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

import torch


@dataclass
class SessionState:
    """Current code grid plus the full step history.

    ``steps`` holds (action_label, indices, image_b64, changed_nodes) from
    step 0 (the encode) onward, so replaying from the first grid reproduces
    the current grid exactly.
    """

    session_id: str
    steps: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def current_indices(self) -> torch.Tensor:
        return self.steps[-1][1]


class SessionStore:
    def __init__(self, capacity: int = 256):
        self.capacity = capacity
        self._sessions: OrderedDict[str, SessionState] = OrderedDict()
        self._lock = threading.Lock()

    def create(self, indices: torch.Tensor, image_b64: str) -> SessionState:
        session = SessionState(session_id=uuid.uuid4().hex)
        session.steps.append(("encode", indices, image_b64, 0))
        with self._lock:
            self._sessions[session.session_id] = session
            while len(self._sessions) > self.capacity:
                self._sessions.popitem(last=False)
        return session

    def get(self, session_id: str) -> SessionState:
        with self._lock:
            if session_id not in self._sessions:
                raise KeyError(session_id)
            self._sessions.move_to_end(session_id)
            return self._sessions[session_id]

    def __len__(self) -> int:
        return len(self._sessions)
