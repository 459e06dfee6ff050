"""Canonical domain types and the append-only event log.

The log is the single source of truth: every request, ping fanout, and
request resolution is a timestamped record, and all downstream state
(response stats, training data, metrics) is reconstructible by replay.

File format: UTF-8 JSONL, one record per line, ``kind`` in
{"request", "ping", "resolution"}, all timestamps integer milliseconds UTC.
Individual yes/no answers are not separate records; they are folded into
the request's resolution record so the log stays three-kinded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Union

from .errors import PingmatchError

MIN_TZ_OFFSET_MINUTES = -720
MAX_TZ_OFFSET_MINUTES = 840


class EventStoreError(PingmatchError):
    code = "event_store"


class OutOfOrderTimestamp(EventStoreError):
    code = "out_of_order_timestamp"


class DanglingReference(EventStoreError):
    code = "dangling_reference"


class ParseError(EventStoreError):
    """Malformed log line; message carries the 1-based line number."""

    code = "parse_error"

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class InvariantViolation(EventStoreError):
    code = "invariant_violation"


class Response(Enum):
    """Tri-state outcome of a ping. NULL means no answer arrived."""

    YES = "yes"
    NO = "no"
    NULL = "null"


def local_hour(ts_ms: int, timezone_offset_minutes: int) -> int:
    """Hour of day (0..23) at the translator's UTC offset."""
    return ((ts_ms // 60_000 + timezone_offset_minutes) // 60) % 24


@dataclass(frozen=True)
class ProfileSnapshot:
    """Profile feature values as they stood when a ping went out."""

    experience_level: int
    can_translate_documents: bool
    declared_available: bool
    multi_skill: bool

    def to_dict(self) -> dict:
        return {
            "experience_level": self.experience_level,
            "can_translate_documents": self.can_translate_documents,
            "declared_available": self.declared_available,
            "multi_skill": self.multi_skill,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProfileSnapshot":
        return cls(
            experience_level=int(d["experience_level"]),
            can_translate_documents=bool(d["can_translate_documents"]),
            declared_available=bool(d["declared_available"]),
            multi_skill=bool(d["multi_skill"]),
        )


@dataclass(frozen=True)
class TranslatorProfile:
    """Static self-reported attributes of one volunteer."""

    translator_id: str
    languages: frozenset[str]
    timezone_offset_minutes: int
    experience_level: int
    can_translate_documents: bool
    declared_available: bool
    multi_skill: bool
    gender_identity: str | None = None
    occupations: frozenset[str] = frozenset()

    def validate(self) -> None:
        if not self.languages:
            raise InvariantViolation(f"translator {self.translator_id}: empty language set")
        if self.experience_level not in (0, 1, 2):
            raise InvariantViolation(
                f"translator {self.translator_id}: experience_level "
                f"{self.experience_level} outside 0..2"
            )
        if not MIN_TZ_OFFSET_MINUTES <= self.timezone_offset_minutes <= MAX_TZ_OFFSET_MINUTES:
            raise InvariantViolation(
                f"translator {self.translator_id}: timezone offset "
                f"{self.timezone_offset_minutes} outside [{MIN_TZ_OFFSET_MINUTES}, "
                f"{MAX_TZ_OFFSET_MINUTES}]"
            )

    def snapshot(self) -> ProfileSnapshot:
        return ProfileSnapshot(
            experience_level=self.experience_level,
            can_translate_documents=self.can_translate_documents,
            declared_available=self.declared_available,
            multi_skill=self.multi_skill,
        )

    def local_hour(self, ts_ms: int) -> int:
        return local_hour(ts_ms, self.timezone_offset_minutes)

    def to_dict(self) -> dict:
        return {
            "translator_id": self.translator_id,
            "languages": sorted(self.languages),
            "timezone_offset_minutes": self.timezone_offset_minutes,
            "experience_level": self.experience_level,
            "can_translate_documents": self.can_translate_documents,
            "declared_available": self.declared_available,
            "multi_skill": self.multi_skill,
            "gender_identity": self.gender_identity,
            "occupations": sorted(self.occupations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TranslatorProfile":
        profile = cls(
            translator_id=str(d["translator_id"]),
            languages=frozenset(d["languages"]),
            timezone_offset_minutes=int(d["timezone_offset_minutes"]),
            experience_level=int(d["experience_level"]),
            can_translate_documents=bool(d["can_translate_documents"]),
            declared_available=bool(d["declared_available"]),
            multi_skill=bool(d["multi_skill"]),
            gender_identity=d.get("gender_identity"),
            occupations=frozenset(d.get("occupations", ())),
        )
        profile.validate()
        return profile


@dataclass(frozen=True)
class RequestPreferences:
    """Hard requester constraints; absent fields mean no constraint."""

    gender_identity: str | None = None
    occupation: str | None = None

    def is_empty(self) -> bool:
        return self.gender_identity is None and self.occupation is None

    def to_dict(self) -> dict:
        return {"gender_identity": self.gender_identity, "occupation": self.occupation}

    @classmethod
    def from_dict(cls, d: dict | None) -> "RequestPreferences":
        if not d:
            return cls()
        return cls(
            gender_identity=d.get("gender_identity"),
            occupation=d.get("occupation"),
        )


@dataclass(frozen=True)
class TranslationRequest:
    request_id: str
    requester_id: str
    source_language: str
    target_language: str
    created_at: int
    preferences: RequestPreferences = RequestPreferences()

    def validate(self) -> None:
        if self.source_language == self.target_language:
            raise InvariantViolation(
                f"request {self.request_id}: source and target language are "
                f"both {self.source_language!r}"
            )

    def to_dict(self) -> dict:
        return {
            "kind": "request",
            "request_id": self.request_id,
            "requester_id": self.requester_id,
            "source_language": self.source_language,
            "target_language": self.target_language,
            "created_at": self.created_at,
            "preferences": None if self.preferences.is_empty() else self.preferences.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TranslationRequest":
        req = cls(
            request_id=str(d["request_id"]),
            requester_id=str(d["requester_id"]),
            source_language=str(d["source_language"]),
            target_language=str(d["target_language"]),
            created_at=int(d["created_at"]),
            preferences=RequestPreferences.from_dict(d.get("preferences")),
        )
        req.validate()
        return req


@dataclass
class PingEvent:
    """One notification to one translator for one request.

    ``response``/``responded_at`` are in-memory state: a ping line is
    written when the ping goes out, before any answer exists, so the final
    tri-state outcome is persisted on the resolution record instead and
    joined back on load (see EventLog.apply_resolutions).
    """

    ping_id: str
    request_id: str
    translator_id: str
    sent_at: int
    exploration: bool
    ping_index: int
    hour_local: int
    snapshot: ProfileSnapshot
    response: Response = Response.NULL
    responded_at: int | None = None

    def validate(self) -> None:
        if (self.response is Response.NULL) != (self.responded_at is None):
            raise InvariantViolation(
                f"ping {self.ping_id}: response {self.response.value} "
                f"inconsistent with responded_at {self.responded_at}"
            )
        if self.responded_at is not None and self.responded_at < self.sent_at:
            raise InvariantViolation(
                f"ping {self.ping_id}: responded_at before sent_at"
            )
        if not 0 <= self.hour_local <= 23:
            raise InvariantViolation(f"ping {self.ping_id}: hour_local {self.hour_local}")

    def to_dict(self) -> dict:
        return {
            "kind": "ping",
            "ping_id": self.ping_id,
            "request_id": self.request_id,
            "translator_id": self.translator_id,
            "sent_at": self.sent_at,
            "exploration": self.exploration,
            "ping_index": self.ping_index,
            "hour_local": self.hour_local,
            "snapshot": self.snapshot.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PingEvent":
        ping = cls(
            ping_id=str(d["ping_id"]),
            request_id=str(d["request_id"]),
            translator_id=str(d["translator_id"]),
            sent_at=int(d["sent_at"]),
            exploration=bool(d["exploration"]),
            ping_index=int(d["ping_index"]),
            hour_local=int(d["hour_local"]),
            snapshot=ProfileSnapshot.from_dict(d["snapshot"]),
        )
        ping.validate()
        return ping


@dataclass(frozen=True)
class PingOutcome:
    """Final per-ping outcome recorded inside a resolution."""

    ping_id: str
    response: Response
    responded_at: int | None
    late: bool = False

    def validate(self) -> None:
        if (self.response is Response.NULL) != (self.responded_at is None):
            raise InvariantViolation(
                f"resolution outcome for ping {self.ping_id}: response "
                f"{self.response.value} inconsistent with responded_at"
            )

    def label(self) -> int:
        """Binary training label: 1 for yes, 0 for no or silence."""
        return 1 if self.response is Response.YES else 0

    def to_dict(self) -> dict:
        return {
            "ping_id": self.ping_id,
            "response": self.response.value,
            "responded_at": self.responded_at,
            "late": self.late,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PingOutcome":
        out = cls(
            ping_id=str(d["ping_id"]),
            response=Response(d["response"]),
            responded_at=None if d.get("responded_at") is None else int(d["responded_at"]),
            late=bool(d.get("late", False)),
        )
        out.validate()
        return out


@dataclass(frozen=True)
class Resolution:
    """Terminal record for one request: match outcome plus final labels."""

    request_id: str
    resolved_at: int
    outcome: str  # "matched" | "expired"
    matched_translator: str | None
    matched_at: int | None
    responses: tuple[PingOutcome, ...]

    def validate(self) -> None:
        if self.outcome not in ("matched", "expired"):
            raise InvariantViolation(
                f"resolution {self.request_id}: outcome {self.outcome!r}"
            )
        matched = self.outcome == "matched"
        if matched != (self.matched_translator is not None) or matched != (
            self.matched_at is not None
        ):
            raise InvariantViolation(
                f"resolution {self.request_id}: matched fields inconsistent "
                f"with outcome {self.outcome!r}"
            )
        for r in self.responses:
            r.validate()

    def to_dict(self) -> dict:
        return {
            "kind": "resolution",
            "request_id": self.request_id,
            "resolved_at": self.resolved_at,
            "outcome": self.outcome,
            "matched_translator": self.matched_translator,
            "matched_at": self.matched_at,
            "responses": [r.to_dict() for r in self.responses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Resolution":
        res = cls(
            request_id=str(d["request_id"]),
            resolved_at=int(d["resolved_at"]),
            outcome=str(d["outcome"]),
            matched_translator=d.get("matched_translator"),
            matched_at=None if d.get("matched_at") is None else int(d["matched_at"]),
            responses=tuple(PingOutcome.from_dict(r) for r in d["responses"]),
        )
        res.validate()
        return res


Record = Union[TranslationRequest, PingEvent, Resolution]

_KIND_PARSERS = {
    "request": TranslationRequest.from_dict,
    "ping": PingEvent.from_dict,
    "resolution": Resolution.from_dict,
}


def record_timestamp(record: Record) -> int:
    if isinstance(record, TranslationRequest):
        return record.created_at
    if isinstance(record, PingEvent):
        return record.sent_at
    return record.resolved_at


def serialize_record(record: Record) -> str:
    return json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":"))


def parse_record(d: dict) -> Record:
    kind = d.get("kind")
    parser = _KIND_PARSERS.get(kind)
    if parser is None:
        raise InvariantViolation(f"unknown record kind {kind!r}")
    return parser(d)


class EventLog:
    """In-memory append-only log with referential integrity checks.

    Single writer, many readers: ``append`` is the only mutation and
    readers take list snapshots. Translator references are checked only
    when a registry of known translators has been supplied.
    """

    def __init__(self, profiles: Iterable[TranslatorProfile] | None = None):
        self.records: list[Record] = []
        self._request_ids: set[str] = set()
        self._ping_ids: set[str] = set()
        self._resolved_ids: set[str] = set()
        self._pings_by_request: dict[str, set[str]] = {}
        self._last_ping_index: dict[str, int] = {}
        self._known_translators: set[str] | None = None
        if profiles is not None:
            self.register_translators(p.translator_id for p in profiles)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def register_translators(self, translator_ids: Iterable[str]) -> None:
        if self._known_translators is None:
            self._known_translators = set()
        self._known_translators.update(translator_ids)

    @property
    def last_timestamp(self) -> int | None:
        return record_timestamp(self.records[-1]) if self.records else None

    def append(self, record: Record) -> int:
        """Validate and append one record; returns its sequence number."""
        ts = record_timestamp(record)
        last = self.last_timestamp
        if last is not None and ts < last:
            raise OutOfOrderTimestamp(
                f"timestamp {ts} precedes last appended timestamp {last}"
            )
        if isinstance(record, TranslationRequest):
            record.validate()
            if record.request_id in self._request_ids:
                raise InvariantViolation(f"duplicate request id {record.request_id}")
            self._request_ids.add(record.request_id)
        elif isinstance(record, PingEvent):
            record.validate()
            if record.request_id not in self._request_ids:
                raise DanglingReference(
                    f"ping {record.ping_id} references unknown request "
                    f"{record.request_id}"
                )
            if (
                self._known_translators is not None
                and record.translator_id not in self._known_translators
            ):
                raise DanglingReference(
                    f"ping {record.ping_id} references unknown translator "
                    f"{record.translator_id}"
                )
            if record.ping_id in self._ping_ids:
                raise InvariantViolation(f"duplicate ping id {record.ping_id}")
            last_index = self._last_ping_index.get(record.translator_id)
            if last_index is not None and record.ping_index <= last_index:
                raise InvariantViolation(
                    f"ping {record.ping_id}: ping_index {record.ping_index} not "
                    f"increasing for translator {record.translator_id}"
                )
            self._ping_ids.add(record.ping_id)
            self._last_ping_index[record.translator_id] = record.ping_index
            self._pings_by_request.setdefault(record.request_id, set()).add(record.ping_id)
        else:
            record.validate()
            if record.request_id not in self._request_ids:
                raise DanglingReference(
                    f"resolution references unknown request {record.request_id}"
                )
            if record.request_id in self._resolved_ids:
                raise InvariantViolation(
                    f"second resolution for request {record.request_id}"
                )
            request_pings = self._pings_by_request.get(record.request_id, set())
            for outcome in record.responses:
                if outcome.ping_id not in request_pings:
                    raise DanglingReference(
                        f"resolution for {record.request_id} references ping "
                        f"{outcome.ping_id} outside the request"
                    )
            self._resolved_ids.add(record.request_id)
        seq = len(self.records)
        self.records.append(record)
        return seq

    # Typed views -----------------------------------------------------------

    def requests(self) -> list[TranslationRequest]:
        return [r for r in self.records if isinstance(r, TranslationRequest)]

    def pings(self) -> list[PingEvent]:
        return [r for r in self.records if isinstance(r, PingEvent)]

    def resolutions(self) -> list[Resolution]:
        return [r for r in self.records if isinstance(r, Resolution)]

    def resolved_outcomes(self) -> dict[str, PingOutcome]:
        """ping_id -> final outcome, over all resolution records."""
        out: dict[str, PingOutcome] = {}
        for res in self.resolutions():
            for outcome in res.responses:
                out[outcome.ping_id] = outcome
        return out

    def materialized_pings(self) -> list[PingEvent]:
        """Pings with the final tri-state response joined from resolutions."""
        outcomes = self.resolved_outcomes()
        result = []
        for ping in self.pings():
            outcome = outcomes.get(ping.ping_id)
            if outcome is None:
                result.append(replace(ping))
            else:
                result.append(
                    replace(ping, response=outcome.response, responded_at=outcome.responded_at)
                )
        return result


def save_log(log: EventLog, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in log.records:
            fh.write(serialize_record(record) + "\n")


def load_log(path: str | Path, profiles: Iterable[TranslatorProfile] | None = None) -> EventLog:
    """Parse a JSONL event log, enforcing every log invariant.

    Raises ParseError with the offending line number on malformed JSON and
    InvariantViolation / DanglingReference / OutOfOrderTimestamp naming the
    record on semantic failures.
    """
    path = Path(path)
    log = EventLog(profiles=profiles)
    with path.open("r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                payload = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(line_number, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(payload, dict):
                raise ParseError(line_number, "record is not a JSON object")
            try:
                record = parse_record(payload)
                log.append(record)
            except (KeyError, ValueError) as exc:
                raise ParseError(line_number, f"bad record: {exc}") from exc
    return log


def save_profiles(profiles: Iterable[TranslatorProfile], path: str | Path) -> None:
    path = Path(path)
    doc = {"translators": [p.to_dict() for p in profiles]}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_profiles(path: str | Path) -> list[TranslatorProfile]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    profiles = [TranslatorProfile.from_dict(d) for d in doc["translators"]]
    ids = [p.translator_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise InvariantViolation("duplicate translator ids in profile file")
    return profiles
