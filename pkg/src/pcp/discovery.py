"""Peer discovery backends: a global DHT-style store and a link-local one.

Both backends answer the same two questions — "remember that I can serve
this content key" and "who can serve this content key?" — but differ in
scope. The global backend is one shared record store reachable from any
node with wan connectivity, queried with a configurable per-operation
latency; routing mechanics are deliberately not simulated because the
protocol above only depends on record semantics and timing. The local
backend scopes advertisements to the link(s) a node sits on, standing in
for multicast announcement on a LAN segment.

Lookups poll: the querying side typically starts before the provider has
published, so a one-shot fetch would miss it. A stream yields each live
provider at most once and ends at its deadline.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import kernel as ker
from .errors import BackendUnavailable, CapabilityError
from .simnet import WAN_LINK, SimNode, PeerAddress, SimulatedNetwork

DEFAULT_TTL = 86_400.0  # records may linger for up to 24 hours
CAP_GLOBAL = "global"
CAP_LOCAL = "local-network"


@dataclass
class ProviderRecord:
    content_key: bytes
    provider: PeerAddress
    published_at: float
    ttl: float = DEFAULT_TTL

    def live(self, now: float) -> bool:
        return self.published_at + self.ttl > now


class ProviderStream:
    """Single-consumer incremental lookup results.

    ``next()`` returns the next previously-unseen live provider, or None
    once the deadline has passed. ``cancel()`` stops the underlying poll.
    """

    def __init__(self, backend: "DiscoveryBackend", node: SimNode, key: bytes, deadline: float):
        self._backend = backend
        self._node = node
        self._key = key
        self._deadline = deadline  # absolute virtual time
        self._yielded: set[str] = set()
        self._ready: ker.Queue = ker.Queue()
        self._cancelled = False
        self._task = node.kernel.spawn(self._poll_loop(), name="provider-poll")

    async def _poll_loop(self):
        kernel = self._node.kernel
        interval = self._backend.query_interval
        while kernel.now() < self._deadline:
            try:
                answers = await self._backend._query_once(self._node, self._key)
            except BackendUnavailable:
                return  # next() reports the stop to the consumer
            for addr in answers:
                if addr.peer_id not in self._yielded and addr.peer_id != self._node.address.peer_id:
                    self._yielded.add(addr.peer_id)
                    self._ready.put(addr)
            await ker.sleep(interval)

    async def next(self) -> PeerAddress | None:
        if self._cancelled:
            return None
        while True:
            if not self._backend.started:
                self.cancel()
                raise BackendUnavailable("backend stopped during lookup")
            remaining = self._deadline - self._node.kernel.now()
            if remaining <= 0 and not len(self._ready):
                self.cancel()
                return None
            try:
                # small grace so results landing exactly at the deadline count
                timeout = remaining if remaining > 0 else 0.0
                return await self._ready.get(timeout=timeout)
            except ker.WaitTimeout:
                continue

    async def collect(self) -> list[PeerAddress]:
        """Drain the stream to its deadline (test convenience)."""
        out = []
        while (addr := await self.next()) is not None:
            out.append(addr)
        return out

    def cancel(self) -> None:
        if not self._cancelled:
            self._cancelled = True
            self._task.cancel()


class DiscoveryBackend:
    """Common surface both backend families implement."""

    capabilities: frozenset[str] = frozenset()
    query_interval: float = 0.5

    def __init__(self, network: SimulatedNetwork):
        self.network = network
        self.kernel = network.kernel
        self.started = True

    @property
    def name(self) -> str:
        return type(self).__name__

    def stop(self) -> None:
        self.started = False

    def _check_started(self) -> None:
        if not self.started:
            raise BackendUnavailable(f"{self.name} is stopped")

    async def provide(self, node: SimNode, key: bytes, ttl: float = DEFAULT_TTL):
        raise NotImplementedError

    def find_providers(self, node: SimNode, key: bytes, deadline: float) -> ProviderStream:
        """Start a lookup ending ``deadline`` seconds from now."""
        self._check_started()
        return ProviderStream(self, node, key, self.kernel.now() + deadline)

    async def _query_once(self, node: SimNode, key: bytes) -> list[PeerAddress]:
        raise NotImplementedError

    # local-network operations; only meaningful with CAP_LOCAL
    async def local_advertise(self, node: SimNode, key: bytes, ttl: float = DEFAULT_TTL):
        raise CapabilityError(f"{self.name} has no local-network capability")

    def local_query(self, node: SimNode, key: bytes, deadline: float) -> ProviderStream:
        raise CapabilityError(f"{self.name} has no local-network capability")


class SimulatedDht(DiscoveryBackend):
    """Global provider-record store with per-operation latency.

    Records are keyed (content key, peer id); re-providing refreshes the
    publish time. Nodes without wan reachability see the store as empty
    and their publishes go nowhere, which is how partitions starve
    discovery without turning into hard errors.
    """

    capabilities = frozenset({CAP_GLOBAL})

    def __init__(
        self,
        network: SimulatedNetwork,
        *,
        op_latency: tuple[float, float] = (0.2, 0.8),
        query_interval: float = 0.5,
    ):
        super().__init__(network)
        self.op_latency = op_latency
        self.query_interval = query_interval
        self._records: dict[bytes, dict[str, ProviderRecord]] = {}
        self._rng = self.kernel.rng("dht.latency")

    def _draw(self) -> float:
        lo, hi = self.op_latency
        return lo if hi <= lo else self._rng.uniform(lo, hi)

    async def provide(self, node: SimNode, key: bytes, ttl: float = DEFAULT_TTL):
        self._check_started()
        await ker.sleep(self._draw())
        if not self.network.wan_reachable(node):
            self.network.trace.emit(
                "provide_lost", backend="dht", node=node.address.short(), key=key.hex()[:16]
            )
            return
        record = ProviderRecord(key, node.address, self.kernel.now(), ttl)
        self._records.setdefault(key, {})[node.address.peer_id] = record
        self.network.trace.emit(
            "provide", backend="dht", node=node.address.short(), key=key.hex()[:16], ttl=ttl
        )

    async def _query_once(self, node: SimNode, key: bytes) -> list[PeerAddress]:
        self._check_started()
        await ker.sleep(self._draw())
        if not self.network.wan_reachable(node):
            return []
        now = self.kernel.now()
        found = []
        for record in self._records.get(key, {}).values():
            if record.live(now) and self.network.is_live(record.provider.peer_id):
                found.append(record.provider)
        for addr in found:
            self.network.trace.emit(
                "provider_found",
                backend="dht",
                node=node.address.short(),
                key=key.hex()[:16],
                provider=addr.short(),
            )
        return found


class SimulatedMdns(DiscoveryBackend):
    """Link-scoped advertisement table standing in for multicast discovery."""

    capabilities = frozenset({CAP_LOCAL})

    def __init__(
        self,
        network: SimulatedNetwork,
        *,
        op_latency: tuple[float, float] = (0.002, 0.008),
        query_interval: float = 0.25,
    ):
        super().__init__(network)
        self.op_latency = op_latency
        self.query_interval = query_interval
        # link id -> key -> peer id -> record
        self._ads: dict[str, dict[bytes, dict[str, ProviderRecord]]] = {}
        self._rng = self.kernel.rng("mdns.latency")

    def _draw(self) -> float:
        lo, hi = self.op_latency
        return lo if hi <= lo else self._rng.uniform(lo, hi)

    def _local_links(self, node: SimNode):
        for link_id in node.links:
            if link_id == WAN_LINK:
                continue
            link = self.network.link(link_id)
            if link.up:
                yield link

    async def local_advertise(self, node: SimNode, key: bytes, ttl: float = DEFAULT_TTL):
        self._check_started()
        await ker.sleep(self._draw())
        record = ProviderRecord(key, node.address, self.kernel.now(), ttl)
        for link in self._local_links(node):
            table = self._ads.setdefault(link.link_id, {}).setdefault(key, {})
            table[node.address.peer_id] = record
            self.network.trace.emit(
                "advertise",
                backend="mdns",
                node=node.address.short(),
                link=link.link_id,
                key=key.hex()[:16],
            )

    # provide/find_providers are the generic spellings of advertise/query
    async def provide(self, node: SimNode, key: bytes, ttl: float = DEFAULT_TTL):
        await self.local_advertise(node, key, ttl)

    def local_query(self, node: SimNode, key: bytes, deadline: float) -> ProviderStream:
        return self.find_providers(node, key, deadline)

    async def _query_once(self, node: SimNode, key: bytes) -> list[PeerAddress]:
        self._check_started()
        await ker.sleep(self._draw())
        now = self.kernel.now()
        found: dict[str, PeerAddress] = {}
        for link in self._local_links(node):
            for record in self._ads.get(link.link_id, {}).get(key, {}).values():
                if not record.live(now):
                    continue
                if not self.network.is_live(record.provider.peer_id):
                    continue
                if self.network.loss_roll(link):
                    continue  # this answer got lost on the segment
                found[record.provider.peer_id] = record.provider
        for addr in found.values():
            self.network.trace.emit(
                "provider_found",
                backend="mdns",
                node=node.address.short(),
                key=key.hex()[:16],
                provider=addr.short(),
            )
        return list(found.values())
