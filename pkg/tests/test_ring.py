import random
import threading
from collections import deque

import pytest

from helpers import random_record, record
from udos_guard.core import Layer, ResourceVector, vector_sum
from udos_guard.profiler import RingBuffer, ring_drain, ring_push
from udos_guard.trace_io.codec import RECORD_SIZE

MiB = 1024 * 1024


def recs(n, seed=0):
    rng = random.Random(seed)
    return [random_record(rng) for _ in range(n)]


def test_default_capacity_admits_100k_records():
    rb = RingBuffer(16 * MiB)
    rec = record(1, "2001:db8::1", application=(50_000, 4096, 1))
    accepted = sum(rb.push(rec) for _ in range(100_000))
    assert accepted == 100_000 and rb.dropped_count == 0
    assert rb.used_bytes == 100_000 * RECORD_SIZE <= 16 * MiB
    assert (16 * MiB) // RECORD_SIZE >= 100_000


def test_full_buffer_drops_newest():
    rb = RingBuffer(2 * RECORD_SIZE)
    a, b, c = recs(3)
    assert ring_push(rb, a) and ring_push(rb, b)
    assert not ring_push(rb, c)
    assert rb.dropped_count == 1
    assert ring_drain(rb) == [a, b]


def test_push_three_drain_two():
    rb = RingBuffer(MiB)
    a, b, c = recs(3)
    for r in (a, b, c):
        rb.push(r)
    assert rb.drain(2) == [a, b]
    assert rb.drain() == [c]
    assert rb.drain() == []


def test_capacity_smaller_than_one_record():
    rb = RingBuffer(RECORD_SIZE - 1)
    assert not rb.push(recs(1)[0])
    assert len(rb) == 0 and rb.dropped_count == 1


@pytest.mark.parametrize("seed", range(20))
def test_random_interleavings_match_queue_oracle(seed):
    rng = random.Random(seed)
    cap = rng.randint(1, 12) * RECORD_SIZE + rng.randrange(RECORD_SIZE)
    rb = RingBuffer(cap)
    oracle: deque = deque()
    drained, dropped, pushed = [], [], []
    pool = recs(300, seed)
    for rec in pool:
        if rng.random() < 0.7:
            pushed.append(rec)
            if (len(oracle) + 1) * RECORD_SIZE <= cap:
                oracle.append(rec)
                assert rb.push(rec)
            else:
                dropped.append(rec)
                assert not rb.push(rec)
        else:
            k = rng.randint(0, 5)
            got = rb.drain(k)
            want = [oracle.popleft() for _ in range(min(k, len(oracle)))]
            assert got == want
            drained.extend(got)
        assert rb.used_bytes <= cap
    drained.extend(rb.drain())
    assert rb.dropped_count == len(dropped) == rb.pushed - rb.accepted
    # Drained plus dropped is everything pushed, and nothing else.
    kept = [r for r in pushed if r not in dropped]
    assert drained == kept
    for layer in Layer:
        assert rb.dropped_usage[layer] == vector_sum(r.usage[layer] for r in dropped)


def test_spsc_threads_preserve_order_and_count():
    rb = RingBuffer(64 * RECORD_SIZE)
    n = 20_000
    records = [record(t, "10.0.0.1", link=(t, 0, 0)) for t in range(n)]
    results = []
    done = threading.Event()

    def producer():
        for r in records:
            rb.push(r)
        done.set()

    def consumer():
        while not (done.is_set() and len(rb) == 0):
            results.extend(rb.drain(16))

    threads = [threading.Thread(target=producer), threading.Thread(target=consumer)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=60)
    results.extend(rb.drain())
    assert len(results) + rb.dropped_count == n
    stamps = [r.timestamp for r in results]
    assert stamps == sorted(stamps)
    assert rb.used_bytes == 0


def test_rejects_nonpositive_capacity():
    with pytest.raises(ValueError):
        RingBuffer(0)
