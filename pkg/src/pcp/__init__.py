"""Passphrase-rendezvous peer-to-peer file copy.

A sender publishes a time-slotted rendezvous key derived from the first
word of a random passphrase; a receiver holding the same words derives the
same key, finds the sender through pluggable discovery backends, proves
knowledge of the full word sequence with a password-authenticated key
exchange, and receives the file over an authenticated encrypted channel.
Everything runs on a deterministic in-process simulated network, which is
also what the bundled CLI drives.
"""

from .passphrase import Passphrase, channel_id, generate_passphrase, parse_passphrase
from .rendezvous import DiscoveryKey, TimeSlot, discovery_key, previous_slot, truncate_to_slot
from .session import SessionConfig, run_receiver, run_sender
from .transfer import TransferManifest, TransferOutcome

__version__ = "0.1.0"

__all__ = [
    "Passphrase",
    "generate_passphrase",
    "parse_passphrase",
    "channel_id",
    "TimeSlot",
    "DiscoveryKey",
    "truncate_to_slot",
    "previous_slot",
    "discovery_key",
    "SessionConfig",
    "run_sender",
    "run_receiver",
    "TransferManifest",
    "TransferOutcome",
    "__version__",
]
