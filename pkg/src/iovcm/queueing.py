"""Transmit queue shared by the plain and the managed simulation loop.

Items are kept sorted by the active ordering key. In FIFO order the key is the
arrival (ready) time; in priority order critical packets come first, then
lower priority value, lower TTL, earlier generation time. The enqueue sequence
number breaks every remaining tie, so both keys are total orders.
"""

from __future__ import annotations

import bisect
import enum


class PacketClass(str, enum.Enum):
    CRITICAL = "Critical"
    NON_CRITICAL = "NonCritical"


def fifo_key(item):
    return (item.ready_time, item.seq)


def priority_key(item):
    return (
        0 if item.critical else 1,
        item.priority,
        item.ttl,
        item.gen_time,
        item.seq,
    )


class TransmitQueue:
    """Ordered queue of in-flight packets.

    Items need ``ready_time``, ``seq``, ``critical``, ``priority``, ``ttl`` and
    ``gen_time`` attributes. ``limit=0`` means unbounded.
    """

    def __init__(self, limit: int = 0, priority_mode: bool = False):
        self.limit = limit
        self.priority_mode = priority_mode
        self._items: list = []

    @property
    def key(self):
        return priority_key if self.priority_mode else fifo_key

    def set_priority_mode(self, active: bool) -> None:
        if active != self.priority_mode:
            self.priority_mode = active
            self._items.sort(key=self.key)

    def resort(self) -> None:
        self._items.sort(key=self.key)

    def push(self, item):
        """Insert ``item``; return the evicted tail item on overflow, else None."""
        bisect.insort(self._items, item, key=self.key)
        if self.limit and len(self._items) > self.limit:
            return self._items.pop()
        return None

    def pop(self):
        return self._items.pop(0)

    def peek(self):
        return self._items[0]

    def drain(self) -> list:
        items, self._items = self._items, []
        return items

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)
