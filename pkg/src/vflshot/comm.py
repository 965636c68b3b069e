"""Communication accounting between the server and the clients.

Every transfer between parties goes through :class:`Channel`, which appends
one :class:`Message` per transfer event to a :class:`CommLedger`. A message
may bundle several payloads (e.g. partial gradients plus the class count);
it still counts as a single communication.
"""
import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

UPLOAD = "upload"
DOWNLOAD = "download"
SERVER = "server"

REPS_OVERLAP = "reps_overlap"
REPS_UNALIGNED = "reps_unaligned"
PARTIAL_GRADS = "partial_grads"
CLASS_COUNT = "class_count"
INCLUSION_PROBS = "inclusion_probs"
MISC = "logits_or_misc"
ROLES = (REPS_OVERLAP, REPS_UNALIGNED, PARTIAL_GRADS, CLASS_COUNT, INCLUSION_PROBS, MISC)


def client_name(k):
    return f"client{k}"


@dataclass(frozen=True)
class Message:
    direction: str
    sender: str
    receiver: str
    parts: Tuple[Tuple[str, int], ...]
    stage: str = ""

    def __post_init__(self):
        if self.direction not in (UPLOAD, DOWNLOAD):
            raise ValueError(f"bad direction {self.direction!r}")
        for role, count in self.parts:
            if role not in ROLES:
                raise ValueError(f"unknown payload role {role!r}")
            if count < 0:
                raise ValueError("scalar counts are non-negative")

    @property
    def scalar_count(self):
        return sum(c for _, c in self.parts)

    @property
    def client(self):
        return self.sender if self.direction == UPLOAD else self.receiver


class CommLedger:
    """Append-only log of messages."""

    def __init__(self, bytes_per_scalar=4):
        if bytes_per_scalar < 1:
            raise ValueError("bytes_per_scalar must be >= 1")
        self.bytes_per_scalar = bytes_per_scalar
        self._messages: List[Message] = []

    def append(self, msg: Message):
        self._messages.append(msg)

    @property
    def messages(self):
        return tuple(self._messages)

    def __len__(self):
        return len(self._messages)

    def comm_times(self):
        """Messages per client (uploads + downloads)."""
        return dict(Counter(m.client for m in self._messages))

    def direction_counts(self):
        out = {}
        for m in self._messages:
            d = out.setdefault(m.client, {UPLOAD: 0, DOWNLOAD: 0})
            d[m.direction] += 1
        return out

    def total_scalars(self):
        return sum(m.scalar_count for m in self._messages)

    def total_bytes(self):
        return self.total_scalars() * self.bytes_per_scalar

    def bytes_by_role(self):
        out = Counter()
        for m in self._messages:
            for role, count in m.parts:
                out[role] += count * self.bytes_per_scalar
        return dict(out)

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "direction", "sender", "receiver", "stage", "roles",
                        "scalar_count", "bytes"])
            for i, m in enumerate(self._messages):
                roles = ";".join(f"{r}:{c}" for r, c in m.parts)
                w.writerow([i, m.direction, m.sender, m.receiver, m.stage, roles,
                            m.scalar_count, m.scalar_count * self.bytes_per_scalar])


class Channel:
    """Moves payloads between parties and records each move.

    Payloads are copied so that no party ever holds a reference into
    another party's state.
    """

    def __init__(self, ledger: CommLedger):
        self.ledger = ledger

    def _send(self, direction, sender, receiver, stage, payloads):
        parts = []
        copies = []
        for role, value in payloads:
            arr = np.array(value, dtype=np.float64, copy=True)
            parts.append((role, int(arr.size)))
            copies.append(arr if arr.ndim else value)
        self.ledger.append(Message(direction, sender, receiver, tuple(parts), stage))
        return copies[0] if len(copies) == 1 else tuple(copies)

    def upload(self, k, stage, *payloads):
        """Client ``k`` sends ``(role, array)`` payloads to the server."""
        return self._send(UPLOAD, client_name(k), SERVER, stage, payloads)

    def download(self, k, stage, *payloads):
        """Server sends ``(role, array)`` payloads to client ``k``."""
        return self._send(DOWNLOAD, SERVER, client_name(k), stage, payloads)
