import pytest

from pcp.discovery import DEFAULT_TTL, SimulatedDht, SimulatedMdns
from pcp.errors import BackendUnavailable, CapabilityError
from pcp.kernel import Kernel, current_time, sleep, spawn
from pcp.simnet import SimulatedNetwork

K1 = bytes.fromhex("11" * 32)
K2 = bytes.fromhex("22" * 32)


def make(seed=0, **dht_kw):
    k = Kernel(seed=seed)
    net = SimulatedNetwork(k)
    net.create_link("lan0", latency=(0.001, 0.001))
    net.create_link("lan1", latency=(0.001, 0.001))
    dht = SimulatedDht(net, **({"op_latency": (0.05, 0.05), "query_interval": 0.1} | dht_kw))
    mdns = SimulatedMdns(net, op_latency=(0.002, 0.002), query_interval=0.05)
    return k, net, dht, mdns


def test_default_ttl_is_24h():
    assert DEFAULT_TTL == 86_400


def test_provide_then_find_from_other_node():
    k, net, dht, _ = make()

    async def main():
        a, b = net.spawn_node(["lan0"]), net.spawn_node(["lan0"])
        await dht.provide(a, K1)
        found = await dht.find_providers(b, K1, deadline=2.0).collect()
        assert [f.peer_id for f in found] == [a.address.peer_id]

    k.run(main())


def test_record_expires_after_ttl():
    k, net, dht, _ = make()

    async def main():
        a, b = net.spawn_node(["lan0"]), net.spawn_node(["lan0"])
        await dht.provide(a, K1, ttl=1.0)
        await sleep(2.0)
        assert await dht.find_providers(b, K1, deadline=0.5).collect() == []
        # never reappears unless re-provided
        assert await dht.find_providers(b, K1, deadline=0.5).collect() == []
        await dht.provide(a, K1, ttl=1.0)
        found = await dht.find_providers(b, K1, deadline=0.5).collect()
        assert len(found) == 1

    k.run(main())


def test_reprovide_refreshes_publish_time():
    k, net, dht, _ = make()

    async def main():
        a, b = net.spawn_node(["lan0"]), net.spawn_node(["lan0"])
        await dht.provide(a, K1, ttl=2.0)
        await sleep(1.5)
        await dht.provide(a, K1, ttl=2.0)  # refresh
        await sleep(1.0)  # 2.5s after first publish, 1s after refresh
        found = await dht.find_providers(b, K1, deadline=0.5).collect()
        assert len(found) == 1

    k.run(main())


def test_multiple_providers_reported():
    k, net, dht, _ = make()

    async def main():
        a = net.spawn_node(["lan0"])
        b = net.spawn_node(["lan0"])
        c = net.spawn_node(["lan1"])
        await dht.provide(a, K1)
        await dht.provide(c, K1)
        found = await dht.find_providers(b, K1, deadline=2.0).collect()
        assert sorted(f.peer_id for f in found) == sorted(
            [a.address.peer_id, c.address.peer_id]
        )

    k.run(main())


def test_no_duplicate_yield_in_one_stream():
    k, net, dht, _ = make()

    async def main():
        a, b = net.spawn_node(["lan0"]), net.spawn_node(["lan0"])
        await dht.provide(a, K1)

        async def republish():
            for _ in range(5):
                await sleep(0.2)
                await dht.provide(a, K1)

        spawn(republish())
        found = await dht.find_providers(b, K1, deadline=1.5).collect()
        assert len(found) == 1

    k.run(main())


def test_no_providers_empty_not_error():
    k, net, dht, _ = make()

    async def main():
        b = net.spawn_node(["lan0"])
        t0 = current_time()
        found = await dht.find_providers(b, K1, deadline=0.1).collect()
        assert found == []
        assert current_time() - t0 >= 0.1 - 1e-6

    k.run(main())


def test_provider_published_after_query_start_is_found():
    k, net, dht, _ = make()

    async def main():
        a, b = net.spawn_node(["lan0"]), net.spawn_node(["lan0"])

        async def late_publish():
            await sleep(0.15)
            await dht.provide(a, K1)

        spawn(late_publish())
        stream = dht.find_providers(b, K1, deadline=1.0)
        addr = await stream.next()
        assert addr is not None and addr.peer_id == a.address.peer_id
        # found strictly after the publish completed, within the deadline
        assert 0.15 < current_time() - 1_700_000_000.0 <= 1.0
        stream.cancel()

    k.run(main())


def test_querier_never_sees_itself():
    k, net, dht, _ = make()

    async def main():
        a = net.spawn_node(["lan0"])
        await dht.provide(a, K1)
        assert await dht.find_providers(a, K1, deadline=0.5).collect() == []

    k.run(main())


def test_local_advertise_scope_isolation():
    k, net, _, mdns = make()

    async def main():
        a = net.spawn_node(["lan0"])
        b = net.spawn_node(["lan0"])
        c = net.spawn_node(["lan1"])
        await mdns.local_advertise(a, K1)
        same = await mdns.local_query(b, K1, deadline=0.5).collect()
        other = await mdns.local_query(c, K1, deadline=0.5).collect()
        assert [f.peer_id for f in same] == [a.address.peer_id]
        assert other == []

    k.run(main())


def test_two_local_advertisers_both_reported():
    k, net, _, mdns = make()

    async def main():
        a = net.spawn_node(["lan0"])
        b = net.spawn_node(["lan0"])
        c = net.spawn_node(["lan0"])
        await mdns.local_advertise(a, K1)
        await mdns.local_advertise(c, K1)
        found = await mdns.local_query(b, K1, deadline=0.5).collect()
        assert sorted(f.peer_id for f in found) == sorted(
            [a.address.peer_id, c.address.peer_id]
        )

    k.run(main())


def test_capability_mismatch_is_invalid_argument():
    k, net, dht, mdns = make()

    async def main():
        a = net.spawn_node(["lan0"])
        with pytest.raises(CapabilityError):
            await dht.local_advertise(a, K1)
        with pytest.raises(CapabilityError):
            dht.local_query(a, K1, deadline=0.1)
        # the generic spellings work on the local backend
        await mdns.provide(a, K2)
        found = await mdns.find_providers(a, K2, deadline=0.2).collect()
        assert found == []  # own ads are filtered; visible to peers only

    k.run(main())


def test_stopped_backend_raises_unavailable():
    k, net, dht, _ = make()

    async def main():
        a, b = net.spawn_node(["lan0"]), net.spawn_node(["lan0"])
        await dht.provide(a, K1)
        stream = dht.find_providers(b, K1, deadline=5.0)
        dht.stop()
        with pytest.raises(BackendUnavailable):
            await dht.provide(a, K1)
        with pytest.raises(BackendUnavailable):
            await stream.next()
        with pytest.raises(BackendUnavailable):
            dht.find_providers(b, K1, deadline=1.0)

    k.run(main())


def test_stopped_provider_not_reported():
    k, net, dht, mdns = make()

    async def main():
        a, b = net.spawn_node(["lan0"]), net.spawn_node(["lan0"])
        await dht.provide(a, K1)
        await mdns.local_advertise(a, K1)
        a.stop()
        assert await dht.find_providers(b, K1, deadline=0.5).collect() == []
        assert await mdns.local_query(b, K1, deadline=0.5).collect() == []

    k.run(main())


def test_wan_partition_blinds_global_backend_only():
    k, net, dht, mdns = make()

    async def main():
        a, b = net.spawn_node(["lan0"]), net.spawn_node(["lan0"])
        await dht.provide(a, K1)
        await mdns.local_advertise(a, K1)
        net.partition("wan")
        assert await dht.find_providers(b, K1, deadline=0.5).collect() == []
        found = await mdns.local_query(b, K1, deadline=0.5).collect()
        assert [f.peer_id for f in found] == [a.address.peer_id]
        net.partition("wan", severed=False)
        found = await dht.find_providers(b, K1, deadline=0.5).collect()
        assert [f.peer_id for f in found] == [a.address.peer_id]

    k.run(main())


def test_lossy_link_delays_but_does_not_prevent_discovery():
    k = Kernel(seed=4)
    net = SimulatedNetwork(k)
    net.create_link("lan0", latency=(0.001, 0.001), loss=0.7)
    mdns = SimulatedMdns(net, op_latency=(0.002, 0.002), query_interval=0.05)

    async def main():
        a, b = net.spawn_node(["lan0"]), net.spawn_node(["lan0"])
        await mdns.local_advertise(a, K1)
        found = await mdns.local_query(b, K1, deadline=10.0).collect()
        assert [f.peer_id for f in found] == [a.address.peer_id]

    k.run(main())


def test_local_backend_faster_than_global():
    k, net, dht, mdns = make(op_latency=(0.5, 0.5), query_interval=0.5)

    async def main():
        a, b = net.spawn_node(["lan0"]), net.spawn_node(["lan0"])
        await dht.provide(a, K1)
        await mdns.local_advertise(a, K1)
        t0 = current_time()
        results = []

        async def probe(backend, tag):
            stream = backend.find_providers(b, K1, deadline=5.0)
            addr = await stream.next()
            results.append((current_time() - t0, tag, addr.peer_id))
            stream.cancel()

        t1 = spawn(probe(mdns, "mdns"))
        t2 = spawn(probe(dht, "dht"))
        await t1.join()
        await t2.join()
        results.sort()
        assert [tag for _, tag, _ in results] == ["mdns", "dht"]

    k.run(main())
