"""A man-in-the-middle relay node for tamper and observation tests.

The relay accepts one connection, dials the real target, and pumps bytes
both ways while parsing the cleartext frame headers (version, type,
length). It can flip a single byte inside a chosen frame's payload and
records everything it forwards, which is what the tamper-detection and
confidentiality tests build on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from pcp.errors import ConnectionLost
from pcp.framing import HEADER_LEN
from pcp.kernel import spawn
from pcp.simnet import PeerAddress, SimNode


@dataclass
class TamperPlan:
    """Flip bit 0 of payload byte ``byte_index`` in frame ``frame_index``.

    Frames are counted per direction from 0; direction "fwd" is
    initiator->target, "rev" is target->initiator. header=True flips
    inside the 6-byte frame header instead of the payload.
    """

    direction: str = "fwd"
    frame_index: int = 0
    byte_index: int = 0
    header: bool = False


@dataclass
class RelayLog:
    fwd: bytearray = field(default_factory=bytearray)
    rev: bytearray = field(default_factory=bytearray)
    fwd_frames: list[tuple[int, int]] = field(default_factory=list)  # (type, length)
    rev_frames: list[tuple[int, int]] = field(default_factory=list)


class FrameRelay:
    """Stands between a dialer and ``target``, optionally corrupting frames."""

    def __init__(self, node: SimNode, target: PeerAddress, tamper: TamperPlan | None = None):
        self.node = node
        self.target = target
        self.tamper = tamper
        self.log = RelayLog()

    @property
    def address(self) -> PeerAddress:
        return self.node.address

    def start(self):
        return spawn(self._run(), name="frame-relay")

    async def _run(self):
        inbound = await self.node.accept()
        outbound = await self.node.dial(self.target)
        fwd = spawn(self._pump(inbound, outbound, "fwd"), name="relay-fwd")
        rev = spawn(self._pump(outbound, inbound, "rev"), name="relay-rev")
        await fwd.join()
        await rev.join()

    async def _pump(self, src, dst, direction: str):
        frames = self.log.fwd_frames if direction == "fwd" else self.log.rev_frames
        raw_log = self.log.fwd if direction == "fwd" else self.log.rev
        index = 0
        try:
            while True:
                header = await src.recv_exactly(HEADER_LEN)
                length = int.from_bytes(header[2:6], "big")
                payload = await src.recv_exactly(length) if length else b""
                frames.append((header[1], length))
                header, payload = self._maybe_flip(direction, index, header, payload)
                raw_log.extend(header + payload)
                await dst.send(header + payload)
                index += 1
        except ConnectionLost:
            dst.abort()  # propagate the drop; a one-sided pipe is useless

    def _maybe_flip(self, direction, index, header, payload):
        plan = self.tamper
        if plan is None or plan.direction != direction or plan.frame_index != index:
            return header, payload
        if plan.header:
            mutable = bytearray(header)
            mutable[plan.byte_index % len(mutable)] ^= 0x01
            return bytes(mutable), payload
        if not payload:
            return header, payload
        mutable = bytearray(payload)
        mutable[plan.byte_index % len(mutable)] ^= 0x01
        return header, bytes(mutable)
