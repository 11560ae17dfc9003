"""Time-slotted rendezvous keys.

Both peers derive the same discovery id from shared state only: the
channel number carried by the first passphrase word and the current unix
time truncated to a slot boundary. The wire-visible id string is

    /pcp/{slot_start_seconds}/{channel}

and the 32-byte content key under which provider records are published is
the SHA-256 of that string's ASCII bytes. Changing either format breaks
interoperability.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import InvalidArgument

ID_PREFIX = "/pcp"
SLOT_WIDTH = 300  # seconds; protocol constant
CHANNEL_MAX = 2047
CONTENT_KEY_LEN = 32


@dataclass(frozen=True)
class TimeSlot:
    """A half-open window [start, start + width) on the unix timeline."""

    start: int
    width: int = SLOT_WIDTH

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise InvalidArgument("slot width must be positive")
        if self.start < 0:
            raise InvalidArgument("slot start must be non-negative")
        if self.start % self.width != 0:
            raise InvalidArgument(
                f"slot start {self.start} is not a multiple of width {self.width}"
            )


@dataclass(frozen=True)
class DiscoveryKey:
    """A rendezvous point: canonical id string plus its content key."""

    channel: int
    slot: TimeSlot
    id_string: str
    content_key: bytes


def truncate_to_slot(now: float, width: int = SLOT_WIDTH) -> TimeSlot:
    """Truncate a unix timestamp down to its slot boundary."""
    if width <= 0:
        raise InvalidArgument("slot width must be positive")
    if now < 0:
        raise InvalidArgument("timestamp must be non-negative")
    start = (int(now) // width) * width
    return TimeSlot(start=start, width=width)


def previous_slot(slot: TimeSlot) -> TimeSlot:
    """The slot immediately before ``slot``; underflow at the epoch is an error."""
    if slot.start < slot.width:
        raise InvalidArgument("no slot before the epoch")
    return TimeSlot(start=slot.start - slot.width, width=slot.width)


def discovery_key(channel: int, slot: TimeSlot) -> DiscoveryKey:
    """Derive the canonical id string and content key for (channel, slot)."""
    if not 0 <= channel <= CHANNEL_MAX:
        raise InvalidArgument(f"channel {channel} outside 0..{CHANNEL_MAX}")
    id_string = f"{ID_PREFIX}/{slot.start}/{channel}"
    content_key = hashlib.sha256(id_string.encode("ascii")).digest()
    return DiscoveryKey(
        channel=channel, slot=slot, id_string=id_string, content_key=content_key
    )
