"""Authentication layer: key exchange, confirmation, and the secure channel.

The dialing side initiates. Its first message carries the rendezvous id
string it found the peer under, so both sides bind the derived keys to the
same session identity; a responder that never published under that id
refuses before answering. After the exchange both sides hold three keys —
two directional data keys and a confirmation key — and prove agreement by
exchanging transcript MACs with direction-distinct labels. Only then does
application data flow, each frame sealed with an AEAD under a strictly
increasing per-direction counter.
"""

from __future__ import annotations

import hmac
import hashlib
import random
from dataclasses import dataclass
from typing import Collection

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from . import framing
from .errors import (
    AuthenticationFailure,
    ChannelExhausted,
    DecryptError,
    HandshakeTimeout,
    ProtocolError,
)
from .kernel import WaitTimeout, wait_for
from .pake import ELEMENT_LEN, ROLE_INITIATOR, ROLE_RESPONDER, PakeParty
from .simnet import Connection

LABEL_SEND_INITIATOR = b"pcp/send/initiator"
LABEL_SEND_RESPONDER = b"pcp/send/responder"
LABEL_CONFIRM = b"pcp/confirm"
CONFIRM_LABEL = {ROLE_INITIATOR: b"confirm/initiator", ROLE_RESPONDER: b"confirm/responder"}

MAX_BINDING_LEN = 512
_NONCE_LIMIT = 2**64


@dataclass(frozen=True)
class PakeSecret:
    """The exchange inputs: canonical passphrase bytes plus session identity."""

    passphrase_bytes: bytes
    session_binding: str


@dataclass(frozen=True)
class SessionKeys:
    k_send: bytes
    k_recv: bytes
    k_confirm: bytes
    role: str


def _hkdf(master: bytes, label: bytes) -> bytes:
    """HKDF-SHA256, fixed salt, single 32-byte expand block per label."""
    prk = hmac.new(b"pcp/keys/v1", master, hashlib.sha256).digest()
    return hmac.new(prk, label + b"\x01", hashlib.sha256).digest()


def derive_session_keys(master: bytes, role: str) -> SessionKeys:
    """Split the exchange output into directional data keys + confirm key."""
    k_init = _hkdf(master, LABEL_SEND_INITIATOR)
    k_resp = _hkdf(master, LABEL_SEND_RESPONDER)
    k_confirm = _hkdf(master, LABEL_CONFIRM)
    if role == ROLE_INITIATOR:
        return SessionKeys(k_send=k_init, k_recv=k_resp, k_confirm=k_confirm, role=role)
    return SessionKeys(k_send=k_resp, k_recv=k_init, k_confirm=k_confirm, role=role)


def _encode_msg1(binding: str, element: bytes) -> bytes:
    raw = binding.encode("utf-8")
    if not raw or len(raw) > MAX_BINDING_LEN:
        raise ProtocolError("bad session binding length")
    return len(raw).to_bytes(2, "big") + raw + element


def _decode_msg1(payload: bytes) -> tuple[str, bytes]:
    if len(payload) < 2:
        raise ProtocolError("truncated key-exchange message")
    blen = int.from_bytes(payload[:2], "big")
    if blen == 0 or blen > MAX_BINDING_LEN or len(payload) != 2 + blen + ELEMENT_LEN:
        raise ProtocolError("malformed key-exchange message")
    binding = payload[2 : 2 + blen].decode("utf-8", errors="strict")
    return binding, payload[2 + blen :]


async def _initiate(
    conn: Connection, secret: PakeSecret, rng: random.Random
) -> tuple[SessionKeys, bytes]:
    party = PakeParty(secret.passphrase_bytes, ROLE_INITIATOR, secret.session_binding, rng)
    msg1 = framing.pack_frame(
        framing.TYPE_PAKE_MSG_1, _encode_msg1(secret.session_binding, party.message())
    )
    await conn.send(msg1)
    payload, msg2_raw = await framing.expect_frame(conn, framing.TYPE_PAKE_MSG_2)
    if len(payload) != ELEMENT_LEN:
        raise ProtocolError("malformed key-exchange reply")
    master = party.derive(payload)
    return derive_session_keys(master, ROLE_INITIATOR), msg1 + msg2_raw


async def _respond(
    conn: Connection,
    passphrase_bytes: bytes,
    rng: random.Random,
    allowed_bindings: Collection[str] | None,
) -> tuple[SessionKeys, bytes, str]:
    payload, msg1_raw = await framing.expect_frame(conn, framing.TYPE_PAKE_MSG_1)
    binding, peer_element = _decode_msg1(payload)
    if allowed_bindings is not None and binding not in allowed_bindings:
        raise ProtocolError(f"peer bound to unknown rendezvous id {binding!r}")
    party = PakeParty(passphrase_bytes, ROLE_RESPONDER, binding, rng)
    msg2 = framing.pack_frame(framing.TYPE_PAKE_MSG_2, party.message())
    await conn.send(msg2)
    master = party.derive(peer_element)
    return derive_session_keys(master, ROLE_RESPONDER), msg1_raw + msg2, binding


async def pake_handshake(
    conn: Connection,
    secret: PakeSecret,
    role: str,
    rng: random.Random,
    *,
    allowed_bindings: Collection[str] | None = None,
    timeout: float | None = None,
) -> tuple[SessionKeys, bytes, str]:
    """Run the exchange; returns (keys, transcript bytes, session binding).

    The dialer passes ``role=ROLE_INITIATOR`` with the binding inside
    ``secret``; the accepting side passes ``ROLE_RESPONDER`` and, normally,
    the set of rendezvous ids it actually published under. A mismatched
    passphrase is NOT detected here — both sides still derive keys, they
    just differ; confirm_key() is where a mismatch surfaces.

    On malformed input the connection is aborted and ProtocolError raised;
    on deadline expiry the connection is aborted and HandshakeTimeout raised.
    """

    async def _run():
        if role == ROLE_INITIATOR:
            keys, transcript = await _initiate(conn, secret, rng)
            return keys, transcript, secret.session_binding
        keys, transcript, binding = await _respond(
            conn, secret.passphrase_bytes, rng, allowed_bindings
        )
        return keys, transcript, binding

    try:
        if timeout is None:
            return await _run()
        return await wait_for(_run(), timeout)
    except WaitTimeout:
        conn.abort()
        raise HandshakeTimeout("key exchange timed out") from None
    except ProtocolError:
        conn.abort()
        raise


async def confirm_key(
    conn: Connection,
    keys: SessionKeys,
    transcript: bytes,
    *,
    timeout: float | None = None,
) -> "SecureChannel":
    """Mutual proof that both sides derived the same keys.

    Each side MACs the handshake transcript under its own direction label
    and checks the peer's tag under the opposite label. Any mismatch —
    wrong passphrase, tampered handshake bytes — aborts the connection.

    As with any handshake, corruption of the final tag in flight is caught
    only by its receiver; the other side learns of it when the aborted
    connection refuses to carry data.
    """

    async def _run():
        own = hmac.new(keys.k_confirm, CONFIRM_LABEL[keys.role] + transcript, hashlib.sha256)
        await conn.send(framing.pack_frame(framing.TYPE_CONFIRM_TAG, own.digest()))
        peer_tag, _ = await framing.expect_frame(conn, framing.TYPE_CONFIRM_TAG)
        other_role = ROLE_RESPONDER if keys.role == ROLE_INITIATOR else ROLE_INITIATOR
        expected = hmac.new(
            keys.k_confirm, CONFIRM_LABEL[other_role] + transcript, hashlib.sha256
        ).digest()
        if not hmac.compare_digest(peer_tag, expected):
            raise AuthenticationFailure("key confirmation failed; dropping connection")
        return SecureChannel(conn, keys)

    try:
        if timeout is None:
            return await _run()
        return await wait_for(_run(), timeout)
    except WaitTimeout:
        conn.abort()
        raise HandshakeTimeout("key confirmation timed out") from None
    except (AuthenticationFailure, ProtocolError):
        conn.abort()
        raise


class SecureChannel:
    """AEAD-framed duplex channel over a confirmed connection.

    Nonces are the per-direction 64-bit send counters, so they can never
    repeat under a key; the direction label rides along as associated data,
    which kills reflection. Any decrypt failure is terminal: the channel
    aborts rather than resynchronize.
    """

    def __init__(self, conn: Connection, keys: SessionKeys):
        self.conn = conn
        self.keys = keys
        self._seal = ChaCha20Poly1305(keys.k_send)
        self._open = ChaCha20Poly1305(keys.k_recv)
        self._send_label = (
            LABEL_SEND_INITIATOR if keys.role == ROLE_INITIATOR else LABEL_SEND_RESPONDER
        )
        self._recv_label = (
            LABEL_SEND_RESPONDER if keys.role == ROLE_INITIATOR else LABEL_SEND_INITIATOR
        )
        self._send_counter = 0
        self._recv_counter = 0
        self.aborted = False
        self.frames_sealed = 0
        self.frames_opened = 0

    @staticmethod
    def _nonce(counter: int) -> bytes:
        return b"\x00\x00\x00\x00" + counter.to_bytes(8, "big")

    def seal(self, plaintext: bytes) -> bytes:
        """Encrypt one message into a complete wire frame."""
        if self.aborted:
            raise DecryptError("channel already aborted")
        if self._send_counter >= _NONCE_LIMIT:
            self.abort()
            raise ChannelExhausted("send counter exhausted; refusing nonce reuse")
        ct = self._seal.encrypt(self._nonce(self._send_counter), plaintext, self._send_label)
        self._send_counter += 1
        self.frames_sealed += 1
        return framing.pack_frame(framing.TYPE_APP_DATA, ct)

    def open(self, ciphertext: bytes) -> bytes:
        """Decrypt one app-data payload; any failure aborts the channel."""
        if self.aborted:
            raise DecryptError("channel already aborted")
        if self._recv_counter >= _NONCE_LIMIT:
            self.abort()
            raise ChannelExhausted("receive counter exhausted")
        try:
            pt = self._open.decrypt(self._nonce(self._recv_counter), ciphertext, self._recv_label)
        except InvalidTag:
            self.abort()
            raise DecryptError("frame failed authentication; channel aborted") from None
        self._recv_counter += 1
        self.frames_opened += 1
        return pt

    async def send(self, plaintext: bytes) -> None:
        await self.conn.send(self.seal(plaintext))

    async def recv(self) -> bytes:
        """Receive and open the next app-data frame."""
        try:
            payload, _ = await framing.expect_frame(self.conn, framing.TYPE_APP_DATA)
        except ProtocolError:
            self.abort()
            raise
        return self.open(payload)

    async def close(self) -> None:
        await self.conn.close()

    def abort(self) -> None:
        self.aborted = True
        self.conn.abort()
