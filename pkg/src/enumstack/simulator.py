"""Deterministic message-passing simulator.

All actors live in one process and exchange encoded wire frames through a
single logical-time event queue. Delivery order is a seeded total order:
each send draws a small delay from the run's RNG, and ties break on a
monotone sequence number, so identical (seed, inputs) replay identical
schedules byte for byte.

Actors may be taken offline (manually or through configured fault
windows); frames addressed to an offline actor are dropped and logged,
never retried by the network itself. Request/response pairing and retries
are the caller's business via :meth:`Network.request`.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from typing import Callable, Protocol

from .wire import Frame, decode_frame, encode_frame

DELIVERED = "delivered"
DROPPED = "dropped"

Handler = Callable[[Frame, "Network"], None]


class Actor(Protocol):
    actor_id: str

    def handle_frame(self, frame: Frame, net: "Network") -> None: ...


@dataclass
class DeliveryRecord:
    """One frame's fate, for traces and invariant checks."""

    tick: int
    frame: Frame
    status: str


@dataclass
class _Queued:
    at: int
    seq: int
    data: bytes

    def __lt__(self, other: "_Queued") -> bool:
        return (self.at, self.seq) < (other.at, other.seq)


@dataclass
class _FaultWindow:
    start: int
    end: int

    def covers(self, tick: int) -> bool:
        return self.start <= tick < self.end


class Network:
    """Seeded deterministic frame transport with an inspectable log."""

    def __init__(self, seed: int = 0, min_delay: int = 1, max_delay: int = 4):
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock = 0
        self._seq = 0
        self._req_counter = 0
        self._queue: list[_Queued] = []
        self._actors: dict[str, Handler] = {}
        self._offline: set[str] = set()
        self._fault_windows: dict[str, list[_FaultWindow]] = {}
        self._rpc_waiting: set[int] = set()
        self._rpc_responses: dict[int, Frame] = {}
        self._min_delay = min_delay
        self._max_delay = max_delay
        self.frame_log: list[DeliveryRecord] = []

    # ------------------------------------------------------------ wiring

    def register(self, actor_id: str, handler: Handler) -> None:
        self._actors[actor_id] = handler

    def add_fault_window(self, actor_id: str, start: int, end: int) -> None:
        self._fault_windows.setdefault(actor_id, []).append(_FaultWindow(start, end))

    def set_offline(self, actor_id: str) -> None:
        self._offline.add(actor_id)

    def set_online(self, actor_id: str) -> None:
        self._offline.discard(actor_id)

    def is_offline(self, actor_id: str, tick: int | None = None) -> bool:
        if actor_id in self._offline:
            return True
        at = self.clock if tick is None else tick
        return any(w.covers(at) for w in self._fault_windows.get(actor_id, ()))

    # ------------------------------------------------------------ transport

    def next_req_id(self) -> int:
        self._req_counter += 1
        return self._req_counter

    def send(self, frame: Frame) -> None:
        """Schedule a frame; it travels in encoded form."""
        delay = self.rng.randint(self._min_delay, self._max_delay)
        self._seq += 1
        heapq.heappush(
            self._queue, _Queued(self.clock + delay, self._seq, encode_frame(frame))
        )

    def pending(self) -> int:
        return len(self._queue)

    def advance(self, ticks: int) -> None:
        """Move logical time forward without delivering anything."""
        self.clock += max(0, ticks)

    def step(self) -> bool:
        """Deliver the next frame. Returns False when the queue is empty."""
        if not self._queue:
            return False
        item = heapq.heappop(self._queue)
        self.clock = max(self.clock, item.at)
        frame = decode_frame(item.data)
        if self.is_offline(frame.dst):
            self.frame_log.append(DeliveryRecord(self.clock, frame, DROPPED))
            return True
        if frame.is_response and frame.req_id in self._rpc_waiting:
            self.frame_log.append(DeliveryRecord(self.clock, frame, DELIVERED))
            self._rpc_responses[frame.req_id] = frame
            return True
        handler = self._actors.get(frame.dst)
        if handler is None:
            self.frame_log.append(DeliveryRecord(self.clock, frame, DROPPED))
            return True
        self.frame_log.append(DeliveryRecord(self.clock, frame, DELIVERED))
        handler(frame, self)
        return True

    def run_until_idle(self, limit: int = 1_000_000) -> int:
        steps = 0
        while self._queue:
            if steps >= limit:
                raise RuntimeError(f"simulator did not quiesce within {limit} steps")
            self.step()
            steps += 1
        return steps

    # ------------------------------------------------------------ rpc

    def request(
        self,
        src: str,
        dst: str,
        kind: str,
        fields: dict[str, str] | None = None,
        retries: int = 1,
    ) -> Frame | None:
        """Send a request and pump the network until its response arrives.

        Returns None after the final attempt times out (queue drained with
        no response), e.g. because the target is offline.
        """
        for _ in range(retries + 1):
            req_id = self.next_req_id()
            frame = Frame(
                kind=kind, src=src, dst=dst, req_id=req_id, fields=dict(fields or {})
            )
            self._rpc_waiting.add(req_id)
            self.send(frame)
            while req_id not in self._rpc_responses and self._queue:
                self.step()
            self._rpc_waiting.discard(req_id)
            response = self._rpc_responses.pop(req_id, None)
            if response is not None:
                return response
        return None
