"""Balanced password-authenticated key exchange (SPAKE2-style).

Both parties blind an ephemeral Diffie-Hellman share with a password-
derived exponent of a fixed public group element (one element per role),
exchange the blinded shares, unblind, and hash the shared value together
with the session identity into a master secret. An eavesdropper — or an
active party holding the wrong password — learns nothing that allows
offline guessing; every connection buys exactly one online guess, and a
wrong guess only shows up when key confirmation fails.

The group is a 3072-bit prime-field Schnorr group (256-bit prime-order
subgroup) from the published DSA-style parameter sets; the two blinding
elements are nothing-up-my-sleeve values hashed from fixed seed strings
into the subgroup. Exponentiation uses gmpy2 when installed, otherwise
the built-in pow.
"""

from __future__ import annotations

import hashlib
import random

from .errors import InvalidArgument, ProtocolError

try:  # optional accelerator; identical semantics
    from gmpy2 import powmod as _gmpy_powmod

    def _pow(base: int, exp: int, mod: int) -> int:
        return int(_gmpy_powmod(base, exp, mod))

except ImportError:  # pragma: no cover - environment dependent
    _pow = pow

ROLE_INITIATOR = "initiator"
ROLE_RESPONDER = "responder"

# 3072-bit prime p with 256-bit prime q dividing p-1, generator g of the
# q-order subgroup (well-known DSA-style parameter set).
_P = int(
    "90066455B5CFC38F9CAA4A48B4281F292C260FEEF01FD61037E56258A7795A1C"
    "7AD46076982CE6BB956936C6AB4DCFE05E6784586940CA544B9B2140E1EB523F"
    "009D20A7E7880E4E5BFA690F1B9004A27811CD9904AF70420EEFD6EA11EF7DA1"
    "29F58835FF56B89FAA637BC9AC2EFAAB903402229F491D8D3485261CD068699B"
    "6BA58A1DDBBEF6DB51E8FE34E8A78E542D7BA351C21EA8D8F1D29F5D5D159394"
    "87E27F4416B0CA632C59EFD1B1EB66511A5A0FBF615B766C5862D0BD8A3FE7A0"
    "E0DA0FB2FE1FCB19E8F9996A8EA0FCCDE538175238FC8B0EE6F29AF7F642773E"
    "BE8CD5402415A01451A840476B2FCEB0E388D30D4B376C37FE401C2A2C2F941D"
    "AD179C540C1C8CE030D460C4D983BE9AB0B20F69144C1AE13F9383EA1C08504F"
    "B0BF321503EFE43488310DD8DC77EC5B8349B8BFE97C2C560EA878DE87C11E3D"
    "597F1FEA742D73EEC7F37BE43949EF1A0D15C3F3E3FC0A8335617055AC91328E"
    "C22B50FC15B941D3D1624CD88BC25F3E941FDDC6200689581BFEC416B4B2CB73",
    16,
)
_Q = int("CFA0478A54717B08CE64805B76E5B14249A77A4838469DF7F7DC987EFCCFB11D", 16)
_G = int(
    "5E5CBA992E0A680D885EB903AEA78E4A45A469103D448EDE3B7ACCC54D521E37"
    "F84A4BDD5B06B0970CC2D2BBB715F7B82846F9A0C393914C792E6A923E2117AB"
    "805276A975AADB5261D91673EA9AAFFEECBFA6183DFCB5D3B7332AA19275AFA1"
    "F8EC0B60FB6F66CC23AE4870791D5982AAD1AA9485FD8F4A60126FEB2CF05DB8"
    "A7F0F09B3397F3937F2E90B9E5B9C9B6EFEF642BC48351C46FB171B9BFA9EF17"
    "A961CE96C7E7A7CC3D3D03DFAD1078BA21DA425198F07D2481622BCE45969D9C"
    "4D6063D72AB7A0F08B2F49A7CC6AF335E08C4720E31476B67299E231F8BD90B3"
    "9AC3AE3BE0C6B6CACEF8289A2E2873D58E51E029CAFBD55E6841489AB66B5B4B"
    "9BA6E2F784660896AFF387D92844CCB8B69475496DE19DA2E58259B090489AC8"
    "E62363CDF82CFD8EF2A427ABCD65750B506F56DDE3B988567A88126B914D7828"
    "E2B63A6D7ED0747EC59E0E0A23CE7D8A74C1D2C2A7AFB6A29799620F00E11C33"
    "787F7DED3B30E1A22D09F1FBDA1ABBBFBF25CAE05A13F812E34563F99410E73B",
    16,
)
_COFACTOR = (_P - 1) // _Q

ELEMENT_LEN = (_P.bit_length() + 7) // 8  # 384 bytes


def _hash_to_subgroup(seed: bytes) -> int:
    """Map a public seed string into the q-order subgroup (no known dlog)."""
    blocks = []
    for counter in range(8):
        blocks.append(hashlib.sha512(seed + bytes([counter])).digest())
    candidate = int.from_bytes(b"".join(blocks), "big") % _P
    element = _pow(candidate, _COFACTOR, _P)
    if element in (0, 1):
        raise AssertionError("degenerate blinding element; seed needs changing")
    return element


_M = _hash_to_subgroup(b"pcp pake blinding element M")
_N = _hash_to_subgroup(b"pcp pake blinding element N")


def _password_scalar(password: bytes) -> int:
    digest = hashlib.sha256(b"pcp/pake/password:" + password).digest()
    return 1 + int.from_bytes(digest, "big") % (_Q - 1)


def encode_element(x: int) -> bytes:
    return x.to_bytes(ELEMENT_LEN, "big")


def decode_element(raw: bytes) -> int:
    """Parse and validate a peer's group element; rejects out-of-group junk."""
    if len(raw) != ELEMENT_LEN:
        raise ProtocolError(f"group element must be {ELEMENT_LEN} bytes, got {len(raw)}")
    value = int.from_bytes(raw, "big")
    if not 1 < value < _P - 1:
        raise ProtocolError("group element out of range")
    if _pow(value, _Q, _P) != 1:
        raise ProtocolError("group element not in the prime-order subgroup")
    return value


class PakeParty:
    """One side of the exchange. Use message() then derive(peer_message)."""

    def __init__(
        self,
        password: bytes,
        role: str,
        session_binding: str,
        rng: random.Random,
    ):
        if role not in (ROLE_INITIATOR, ROLE_RESPONDER):
            raise InvalidArgument(f"bad role {role!r}")
        self.role = role
        self.session_binding = session_binding
        self._w = _password_scalar(password)
        self._x = rng.randrange(1, _Q)
        self._blind = _M if role == ROLE_INITIATOR else _N
        self._peer_blind = _N if role == ROLE_INITIATOR else _M
        share = _pow(_G, self._x, _P)
        self._element = share * _pow(self._blind, self._w, _P) % _P
        self._message = encode_element(self._element)

    def message(self) -> bytes:
        """Our blinded share, fixed-length encoded."""
        return self._message

    def derive(self, peer_message: bytes) -> bytes:
        """Unblind the peer's share and hash the transcript to a 32-byte master."""
        peer_element = decode_element(peer_message)
        unblind = _pow(self._peer_blind, (_Q - self._w) % _Q, _P)
        shared = _pow(peer_element * unblind % _P, self._x, _P)
        if self.role == ROLE_INITIATOR:
            msg_x, msg_y = self._message, peer_message
        else:
            msg_x, msg_y = peer_message, self._message
        h = hashlib.sha256()
        for part in (
            b"pcp/pake/v1",
            self.session_binding.encode("utf-8"),
            msg_x,
            msg_y,
            encode_element(shared),
            self._w.to_bytes(32, "big"),
        ):
            h.update(len(part).to_bytes(8, "big"))
            h.update(part)
        return h.digest()
