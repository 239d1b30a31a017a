"""Wire-speed filter table (TCAM model) and shadow filtering table (DRAM model)."""

from __future__ import annotations

import enum
import heapq
import logging
import math
from dataclasses import dataclass
from typing import Optional

from .core import FlowLabel, Packet, Prefix, SourceGateway, SourceHost, flow_label_matches

log = logging.getLogger(__name__)

UNTIL_FURTHER_NOTICE = math.inf


class InstallResult(enum.Enum):
    INSTALLED = "installed"
    REFRESHED = "refreshed"
    TABLE_FULL = "table_full"


class ShadowVerdict(enum.Enum):
    NOT_SHADOWED = 0
    FIRST_STRIKE = 1
    SECOND_STRIKE = 2


@dataclass
class WireFilter:
    label: FlowLabel
    installed_at: float
    ttl: float
    hit_bits: float = 0

    @property
    def expires_at(self) -> float:
        return self.installed_at + self.ttl

    def live(self, now: float) -> bool:
        return self.installed_at <= now < self.expires_at


@dataclass(frozen=True)
class Drop:
    label: FlowLabel


PASS = None


class WireFilterTable:
    """Capacity-bounded filter table. Full tables reject, they never evict."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError("capacity must be nonnegative")
        self.capacity = capacity
        self.entries: dict[FlowLabel, WireFilter] = {}
        self._expiry: list = []
        self._seq = 0
        # insertion-ordered so that overlapping prefix filters are scanned deterministically
        self._prefix_labels: dict[FlowLabel, None] = {}
        self.rejections = 0
        self.peak = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, label: FlowLabel) -> bool:
        return label in self.entries

    def get(self, label: FlowLabel) -> Optional[WireFilter]:
        return self.entries.get(label)

    @property
    def has_room(self) -> bool:
        return len(self.entries) < self.capacity

    def install(self, label: FlowLabel, now: float, ttl: float) -> InstallResult:
        if now < 0:
            raise ValueError("now must be nonnegative")
        entry = self.entries.get(label)
        if entry is not None:
            entry.installed_at = now
            entry.ttl = ttl
            self._push(entry)
            return InstallResult.REFRESHED
        if len(self.entries) >= self.capacity:
            self.rejections += 1
            return InstallResult.TABLE_FULL
        entry = WireFilter(label, now, ttl)
        self.entries[label] = entry
        if isinstance(label.dst, Prefix):
            self._prefix_labels[label] = None
        self._push(entry)
        self.peak = max(self.peak, len(self.entries))
        return InstallResult.INSTALLED

    def _push(self, entry: WireFilter) -> None:
        if math.isfinite(entry.expires_at):
            self._seq += 1
            heapq.heappush(self._expiry, (entry.expires_at, self._seq, entry.label))

    def remove(self, label: FlowLabel) -> Optional[WireFilter]:
        self._prefix_labels.pop(label, None)
        return self.entries.pop(label, None)

    def next_expiry(self) -> float:
        while self._expiry:
            at, _, label = self._expiry[0]
            entry = self.entries.get(label)
            if entry is not None and entry.expires_at == at:
                return at
            heapq.heappop(self._expiry)
        return math.inf

    def expire(self, now: float) -> list[FlowLabel]:
        """Remove and return every entry whose expiry time is <= now."""
        return [entry.label for entry in self.expire_entries(now)]

    def expire_entries(self, now: float) -> list[WireFilter]:
        """Like :meth:`expire` but hands back the removed filters with their hit counters."""
        expired = []
        while self._expiry and self._expiry[0][0] <= now:
            at, _, label = heapq.heappop(self._expiry)
            entry = self.entries.get(label)
            # stale heap record left behind by a refresh
            if entry is None or entry.expires_at != at:
                continue
            self.remove(label)
            expired.append(entry)
        return expired

    def lookup(self, packet: Packet, now: float) -> Optional[WireFilter]:
        """Live filter matching ``packet`` (host labels win over gateway aggregates)."""
        candidates = [FlowLabel(packet.dst, SourceHost(packet.src))]
        if packet.stamp.first_gateway is not None:
            candidates.append(FlowLabel(packet.dst, SourceGateway(packet.stamp.first_gateway)))
        for label in candidates:
            entry = self.entries.get(label)
            if entry is not None and entry.live(now):
                return entry
        for label in self._prefix_labels:
            entry = self.entries[label]
            if entry.live(now) and flow_label_matches(label, packet):
                return entry
        return None

    def filter_packet(self, packet: Packet, now: float) -> Optional[Drop]:
        entry = self.lookup(packet, now)
        if entry is None:
            return PASS
        entry.hit_bits += packet.size_bits
        return Drop(entry.label)


@dataclass
class ShadowEntry:
    label: FlowLabel
    recorded_at: float
    ttl: float
    strikes: int = 0

    def live(self, now: float) -> bool:
        return now < self.recorded_at + self.ttl


class ShadowTable:
    """Records of past filtering agreements, kept for the filtering window."""

    def __init__(self, ttl: float, entry_budget: Optional[float] = None):
        self.ttl = ttl
        self.entry_budget = entry_budget
        self.entries: dict[FlowLabel, ShadowEntry] = {}
        self.peak = 0
        self._expiry: list = []
        self._seq = 0
        self._over_budget_logged = False

    def __len__(self) -> int:
        return len(self.entries)

    def size(self, now: float) -> int:
        """Number of live entries after dropping the expired ones."""
        self.purge(now)
        return len(self.entries)

    def get(self, label: FlowLabel, now: float) -> Optional[ShadowEntry]:
        entry = self.entries.get(label)
        if entry is not None and entry.live(now):
            return entry
        return None

    def shadow_check(self, label: FlowLabel, now: float) -> ShadowVerdict:
        entry = self.get(label, now)
        if entry is None:
            self.purge(now)
            entry = self.entries[label] = ShadowEntry(label, now, self.ttl)
            self._seq += 1
            heapq.heappush(self._expiry, (now + self.ttl, self._seq, label))
            self._track()
            return ShadowVerdict.NOT_SHADOWED
        if entry.strikes == 0:
            entry.strikes = 1
            return ShadowVerdict.FIRST_STRIKE
        return ShadowVerdict.SECOND_STRIKE

    def purge(self, now: float) -> int:
        removed = 0
        while self._expiry and self._expiry[0][0] <= now:
            at, _, label = heapq.heappop(self._expiry)
            entry = self.entries.get(label)
            if entry is not None and entry.recorded_at + entry.ttl == at:
                del self.entries[label]
                removed += 1
        return removed

    def _track(self) -> None:
        self.peak = max(self.peak, len(self.entries))
        over = self.entry_budget is not None and len(self.entries) > self.entry_budget
        if over and not self._over_budget_logged:
            log.warning("shadow table holds %d entries, above budget %d", len(self.entries), self.entry_budget)
            self._over_budget_logged = True
