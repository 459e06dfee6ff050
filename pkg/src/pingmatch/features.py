"""Per-translator response-rate accumulators and the model feature vector.

Two feature families: smoothed historical response rates (overall and
restricted to the hour of day of the current ping, on the translator's
local clock) and four profile features. Rates use add-one smoothing,
(yes + 1) / (pings + 2), so a translator with no history sits at 0.5 and
the rate tends to 1 or 0 with a perfectly responsive or unresponsive
history.

Stats must only ever reflect pings strictly before the one being scored;
labels exist only once a request resolves, so replay updates stats at
resolution records, never at ping records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .events import (
    EventLog,
    PingEvent,
    ProfileSnapshot,
    Resolution,
    TranslationRequest,
    TranslatorProfile,
)

FEATURE_NAMES: tuple[str, ...] = (
    "overall_rate",
    "periodic_rate",
    "experience_level",
    "can_translate_documents",
    "declared_available",
    "multi_skill",
)

N_FEATURES = len(FEATURE_NAMES)

HOURS_PER_DAY = 24


def smoothed_rate(yes: int, total: int) -> float:
    """Add-one smoothed rate; 0.5 with no history."""
    return (yes + 1.0) / (total + 2.0)


@dataclass
class ResponseStats:
    """Yes/ping counters for one translator: overall plus 24 hourly buckets."""

    overall_yes: int = 0
    overall_pings: int = 0
    hourly_yes: list[int] = field(default_factory=lambda: [0] * HOURS_PER_DAY)
    hourly_pings: list[int] = field(default_factory=lambda: [0] * HOURS_PER_DAY)

    def validate(self) -> None:
        if not 0 <= self.overall_yes <= self.overall_pings:
            raise ValueError("overall yes count outside [0, ping count]")
        for h in range(HOURS_PER_DAY):
            if not 0 <= self.hourly_yes[h] <= self.hourly_pings[h]:
                raise ValueError(f"hour {h} yes count outside [0, ping count]")
        if sum(self.hourly_pings) != self.overall_pings:
            raise ValueError("hourly ping counts do not sum to overall")
        if sum(self.hourly_yes) != self.overall_yes:
            raise ValueError("hourly yes counts do not sum to overall")

    def copy(self) -> "ResponseStats":
        return ResponseStats(
            overall_yes=self.overall_yes,
            overall_pings=self.overall_pings,
            hourly_yes=list(self.hourly_yes),
            hourly_pings=list(self.hourly_pings),
        )


def overall_rate(stats: ResponseStats) -> float:
    return smoothed_rate(stats.overall_yes, stats.overall_pings)


def periodic_rate(stats: ResponseStats, hour: int) -> float:
    """Smoothed rate over the given hour-of-day bucket only."""
    if not 0 <= hour < HOURS_PER_DAY:
        raise ValueError(f"hour {hour} outside 0..23")
    return smoothed_rate(stats.hourly_yes[hour], stats.hourly_pings[hour])


def update_stats(stats: ResponseStats, label: int, hour: int) -> ResponseStats:
    """New stats with one labeled ping folded in. Pure; input unchanged."""
    if label not in (0, 1):
        raise ValueError(f"label {label} not in {{0, 1}}")
    if not 0 <= hour < HOURS_PER_DAY:
        raise ValueError(f"hour {hour} outside 0..23")
    out = stats.copy()
    out.overall_pings += 1
    out.overall_yes += label
    out.hourly_pings[hour] += 1
    out.hourly_yes[hour] += label
    return out


class StatsStore:
    """Mutable map translator_id -> ResponseStats with batch read support.

    Owned by the single dispatch writer; readers should use snapshot() or
    treat returned stats as read-only.
    """

    def __init__(self) -> None:
        self._stats: dict[str, ResponseStats] = {}

    def __len__(self) -> int:
        return len(self._stats)

    def __contains__(self, translator_id: str) -> bool:
        return translator_id in self._stats

    def get(self, translator_id: str) -> ResponseStats:
        """Stats for a translator; a zero accumulator if never pinged."""
        stats = self._stats.get(translator_id)
        return stats if stats is not None else ResponseStats()

    def record(self, translator_id: str, label: int, hour: int) -> None:
        """In-place equivalent of update_stats for the hot loop."""
        if label not in (0, 1):
            raise ValueError(f"label {label} not in {{0, 1}}")
        if not 0 <= hour < HOURS_PER_DAY:
            raise ValueError(f"hour {hour} outside 0..23")
        stats = self._stats.get(translator_id)
        if stats is None:
            stats = ResponseStats()
            self._stats[translator_id] = stats
        stats.overall_pings += 1
        stats.overall_yes += label
        stats.hourly_pings[hour] += 1
        stats.hourly_yes[hour] += label

    def snapshot(self) -> "StatsStore":
        out = StatsStore()
        out._stats = {tid: s.copy() for tid, s in self._stats.items()}
        return out

    def items(self):
        return self._stats.items()


def feature_vector(
    snapshot: ProfileSnapshot | TranslatorProfile,
    stats: ResponseStats,
    hour: int,
) -> np.ndarray:
    """The six model inputs in canonical FEATURE_NAMES order."""
    return np.array(
        [
            overall_rate(stats),
            periodic_rate(stats, hour),
            float(snapshot.experience_level),
            float(snapshot.can_translate_documents),
            float(snapshot.declared_available),
            float(snapshot.multi_skill),
        ],
        dtype=np.float64,
    )


def feature_matrix(
    candidates: Sequence[TranslatorProfile],
    store: StatsStore,
    hours: Sequence[int],
) -> np.ndarray:
    """Feature rows for many candidates at once; hours are per-candidate."""
    n = len(candidates)
    if len(hours) != n:
        raise ValueError("hours must align with candidates")
    overall_yes = np.empty(n)
    overall_pings = np.empty(n)
    hour_yes = np.empty(n)
    hour_pings = np.empty(n)
    out = np.empty((n, N_FEATURES), dtype=np.float64)
    for i, (profile, hour) in enumerate(zip(candidates, hours)):
        stats = store.get(profile.translator_id)
        overall_yes[i] = stats.overall_yes
        overall_pings[i] = stats.overall_pings
        hour_yes[i] = stats.hourly_yes[hour]
        hour_pings[i] = stats.hourly_pings[hour]
        out[i, 2] = profile.experience_level
        out[i, 3] = profile.can_translate_documents
        out[i, 4] = profile.declared_available
        out[i, 5] = profile.multi_skill
    out[:, 0] = kernels.smoothed_rates(overall_yes, overall_pings)
    out[:, 1] = kernels.smoothed_rates(hour_yes, hour_pings)
    return out


@dataclass(frozen=True)
class LabeledRow:
    """One training row: the inputs a ping was scored with, plus its label.

    seq is the ping record's sequence number in the source log, which
    identifies the strictly-prior prefix the features were computed from.
    """

    ping_id: str
    translator_id: str
    seq: int
    sent_at: int
    hour: int
    segment: str
    features: np.ndarray
    label: int


def labeled_dataset(log: EventLog) -> list[LabeledRow]:
    """Training rows from a log, one per resolved ping, in sent order.

    Labels: 1 for a yes response, 0 for an explicit no or silence. Feature
    values reflect only resolutions appearing strictly before the ping in
    the log, so no row sees its own or any later outcome.
    """
    outcomes = log.resolved_outcomes()
    segments: dict[str, str] = {}
    ping_meta: dict[str, tuple[str, int]] = {}
    store = StatsStore()
    rows: list[LabeledRow] = []
    for seq, record in enumerate(log.records):
        if isinstance(record, TranslationRequest):
            segments[record.request_id] = f"{record.source_language}->{record.target_language}"
        elif isinstance(record, PingEvent):
            ping_meta[record.ping_id] = (record.translator_id, record.hour_local)
            outcome = outcomes.get(record.ping_id)
            if outcome is None:
                continue
            stats = store.get(record.translator_id)
            rows.append(
                LabeledRow(
                    ping_id=record.ping_id,
                    translator_id=record.translator_id,
                    seq=seq,
                    sent_at=record.sent_at,
                    hour=record.hour_local,
                    segment=segments[record.request_id],
                    features=feature_vector(record.snapshot, stats, record.hour_local),
                    label=outcome.label(),
                )
            )
        elif isinstance(record, Resolution):
            for outcome in record.responses:
                translator_id, hour = ping_meta[outcome.ping_id]
                store.record(translator_id, outcome.label(), hour)
    return rows


def replay_stats(log: EventLog, upto_seq: int | None = None) -> StatsStore:
    """Batch stats from the log prefix records[0:upto_seq] (whole log if None).

    Only resolution records contribute: a ping's outcome is unknown until
    its request resolves.
    """
    store = StatsStore()
    ping_meta: dict[str, tuple[str, int]] = {}
    records = log.records if upto_seq is None else log.records[:upto_seq]
    for record in records:
        if isinstance(record, PingEvent):
            ping_meta[record.ping_id] = (record.translator_id, record.hour_local)
        elif isinstance(record, Resolution):
            for outcome in record.responses:
                translator_id, hour = ping_meta[outcome.ping_id]
                store.record(translator_id, outcome.label(), hour)
    return store


def design_matrix(
    rows: Iterable[LabeledRow],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
    """Stack labeled rows into (X, y, sent_at, segments) for training."""
    rows = list(rows)
    n = len(rows)
    x = np.empty((n, N_FEATURES), dtype=np.float64)
    y = np.empty(n, dtype=np.float64)
    ts = np.empty(n, dtype=np.int64)
    segments: list[str] = []
    for i, row in enumerate(rows):
        x[i] = row.features
        y[i] = row.label
        ts[i] = row.sent_at
        segments.append(row.segment)
    return x, y, ts, segments
