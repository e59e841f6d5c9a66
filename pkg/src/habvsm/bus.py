"""Topic-based publish/subscribe software bus with deterministic delivery.

Components register in a fixed order and are stepped in that order once per
cycle. A component's step drains its queue completely, so a message published
to a component later in the order is delivered within the same cycle, while a
message to an earlier component waits for the next cycle. Payloads are
treated as immutable after publish.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable


class BusError(Exception):
    pass


@dataclass(frozen=True)
class Message:
    topic: str
    seq: int
    payload: object


@dataclass(frozen=True)
class DeliveryRecord:
    component_id: str
    topic: str
    seq: int


@dataclass
class DeliveryLog:
    records: list[DeliveryRecord] = field(default_factory=list)
    truncated: bool = False
    diagnostic: str = ""


class Subscriber:
    """A registered component: an id, a topic set, and a message handler."""

    def __init__(self, component_id: str, topics: set[str], handler: Callable[[Message], None]):
        self.component_id = component_id
        self.topics = set(topics)
        self.handler = handler
        self.queue: deque[Message] = deque()


class SoftwareBus:
    def __init__(self, cycle_budget: int = 10_000):
        self._topics: dict[str, type] = {}
        self._seq: dict[str, int] = {}
        self._subscribers: list[Subscriber] = []
        self.cycle_budget = cycle_budget

    def register_topic(self, topic: str, payload_type: type) -> None:
        if topic in self._topics:
            raise BusError(f"topic {topic!r} already registered")
        self._topics[topic] = payload_type
        self._seq[topic] = 0

    def topics(self) -> dict[str, type]:
        return dict(self._topics)

    def subscribe(self, component_id: str, topics: set[str], handler: Callable[[Message], None]) -> Subscriber:
        for topic in topics:
            if topic not in self._topics:
                raise BusError(f"cannot subscribe {component_id!r} to unregistered topic {topic!r}")
        if any(s.component_id == component_id for s in self._subscribers):
            raise BusError(f"component {component_id!r} already registered")
        sub = Subscriber(component_id, topics, handler)
        self._subscribers.append(sub)
        return sub

    def component_ids(self) -> list[str]:
        return [s.component_id for s in self._subscribers]

    def publish(self, topic: str, payload: object) -> int:
        expected = self._topics.get(topic)
        if expected is None:
            raise BusError(f"publish to unregistered topic {topic!r}")
        if not isinstance(payload, expected):
            raise BusError(
                f"payload kind mismatch on {topic!r}: expected {expected.__name__}, "
                f"got {type(payload).__name__}"
            )
        self._seq[topic] += 1
        msg = Message(topic, self._seq[topic], payload)
        for sub in self._subscribers:
            if topic in sub.topics:
                sub.queue.append(msg)
        return msg.seq

    def drain_cycle(self, component_order: list[str] | None = None) -> DeliveryLog:
        """Step every component once, in the given order, draining its queue.

        component_order must be a permutation of the registered components;
        it defaults to registration order. Deliveries beyond the per-cycle
        budget truncate the cycle with a diagnostic rather than looping
        forever on a message storm.
        """
        by_id = {s.component_id: s for s in self._subscribers}
        if component_order is None:
            order = list(self._subscribers)
        else:
            if sorted(component_order) != sorted(by_id):
                raise BusError("component_order is not a permutation of registered components")
            order = [by_id[cid] for cid in component_order]

        log = DeliveryLog()
        delivered = 0
        for sub in order:
            while sub.queue:
                if delivered >= self.cycle_budget:
                    log.truncated = True
                    log.diagnostic = (
                        f"cycle truncated after {delivered} deliveries; "
                        f"{sum(len(s.queue) for s in order)} messages still queued"
                    )
                    return log
                msg = sub.queue.popleft()
                log.records.append(DeliveryRecord(sub.component_id, msg.topic, msg.seq))
                delivered += 1
                sub.handler(msg)
        return log
