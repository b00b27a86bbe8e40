"""Core value types: messages, segmentations, segment views, analysis parameters.

Boundaries are stored as interior cut offsets (never 0 or the payload
length), so refinement passes compose as pure cut-set transformations.
All types are immutable after construction and safe to share between
workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class ProtosegError(Exception):
    """Base for all errors raised by this package."""


class UsageError(ProtosegError):
    """Caller violated an operation's preconditions."""


class IngestionError(ProtosegError):
    """A trace, segmentation, or ground-truth file could not be ingested."""


class EstimationError(ProtosegError):
    """Too little data to estimate a clustering parameter."""


class DegenerateClusterError(ProtosegError):
    """A cluster's overlay retained no usable column."""


class NoSignalError(ProtosegError):
    """A cluster has no significant principal component to interpret."""


class SpecError(ProtosegError):
    """A synthetic protocol spec violates its invariants."""


FIELD_TYPES = frozenset({"char", "number", "flags", "id", "pad", "unknown"})


@dataclass(frozen=True)
class Message:
    """One raw payload from a trace. `id` is the index within the trace."""

    id: int
    payload: bytes
    source: str = ""

    def __post_init__(self):
        if len(self.payload) == 0:
            raise UsageError(f"message {self.id} has an empty payload ({self.source or 'unknown source'})")


@dataclass(frozen=True)
class Segmentation:
    """Interior boundary offsets of one message, strictly increasing.

    The implied segments are the byte ranges between consecutive elements
    of {0} | cuts | {len(payload)}.  0 and the payload length are implicit
    and never stored.
    """

    message_id: int
    cuts: tuple = ()

    def __post_init__(self):
        cuts = tuple(int(c) for c in self.cuts)
        object.__setattr__(self, "cuts", cuts)
        for prev, cur in zip((0,) + cuts, cuts):
            if cur <= prev:
                raise UsageError(
                    f"cuts of message {self.message_id} not strictly increasing interior offsets: {cuts}")

    def validate_against(self, msg: Message) -> None:
        if msg.id != self.message_id:
            raise UsageError(f"segmentation for message {self.message_id} applied to message {msg.id}")
        if self.cuts and self.cuts[-1] >= len(msg.payload):
            raise UsageError(
                f"cut {self.cuts[-1]} out of range for message {self.message_id} of length {len(msg.payload)}")


@dataclass(frozen=True)
class SegmentRef:
    """A (message, start, end) view of bytes; the unit of clustering."""

    message_id: int
    start: int
    end: int
    values: bytes

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise UsageError(f"invalid segment range [{self.start},{self.end}) in message {self.message_id}")
        if len(self.values) != self.end - self.start:
            raise UsageError(f"segment values length {len(self.values)} != {self.end - self.start}")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class AnalysisParams:
    """Thresholds of the variance analysis with their empirically determined defaults.

    scree_min        eigenvalue cap on the significance threshold
    max_principals   absolute cap on significant principal components
    principal_ratio  relative cap on significant PCs (fraction of dimensions)
    length_ratio     max tolerated length spread before a cluster is split by length
    min_cluster      smallest cluster worth analysing
    contrib_floor    loading magnitude that counts as a relevant contribution (rule A)
    delta_min        relative loading jump that marks a boundary (rules A and B)
    near_zero        loading magnitude treated as quiet (rule B)
    quiet_len        bytes of quiet required before a variance surge (rule B)
    notable          smallest loading that still counts as a contribution (rule B)
    """

    scree_min: int = 10
    max_principals: int = 4
    principal_ratio: float = 0.5
    length_ratio: float = 0.5
    min_cluster: int = 6
    contrib_floor: float = 0.1
    delta_min: float = 0.98
    near_zero: float = 0.05
    quiet_len: int = 4
    notable: float = 0.005

    def __post_init__(self):
        for name in ("scree_min", "max_principals", "min_cluster", "quiet_len"):
            if not (isinstance(getattr(self, name), int) and getattr(self, name) > 0):
                raise UsageError(f"{name} must be a positive integer")
        for name in ("principal_ratio", "length_ratio", "contrib_floor",
                     "delta_min", "near_zero", "notable"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise UsageError(f"{name} must lie in (0, 1)")


@dataclass(frozen=True)
class GroundTruth:
    """True interior boundaries per message id, with optional field type labels."""

    cuts: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "cuts", {int(k): tuple(v) for k, v in self.cuts.items()})
        object.__setattr__(self, "labels", {int(k): tuple(v) for k, v in self.labels.items()})
        for mid, labels in self.labels.items():
            for lab in labels:
                if lab not in FIELD_TYPES:
                    raise UsageError(f"unknown field type label {lab!r} for message {mid}")

    def validate_against(self, messages) -> None:
        by_id = {m.id: m for m in messages}
        for mid, cuts in self.cuts.items():
            if mid not in by_id:
                raise UsageError(f"ground truth references unknown message id {mid}")
            Segmentation(mid, cuts).validate_against(by_id[mid])


def segments_of(seg: Segmentation, msg: Message) -> list:
    """Split `msg` into the contiguous SegmentRefs implied by `seg`.

    Returns len(cuts)+1 refs covering the whole payload in order.
    """
    seg.validate_against(msg)
    bounds = (0,) + seg.cuts + (len(msg.payload),)
    return [
        SegmentRef(msg.id, a, b, msg.payload[a:b])
        for a, b in zip(bounds, bounds[1:])
    ]
