import mmap
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import AllocatorModel, smallest_order
from telgraph.blockstore import (MAGIC, MAX_ORDER, MIN_BLOCK, RESERVED_BYTES, BlockStore,
                                 CapacityError, InvariantViolation, block_size, order_for)


@pytest.fixture
def store():
    s = BlockStore(extent=mmap.PAGESIZE * 16)
    yield s
    s.close()


@pytest.mark.parametrize("nbytes, order", [(64, 0), (65, 1), (348, 3), (1, 0), (128, 1), (129, 2)])
def test_order_for_examples(nbytes, order):
    assert order_for(nbytes) == order


@given(st.integers(min_value=1, max_value=1 << 40))
def test_order_for_matches_doubling_search(nbytes):
    assert order_for(nbytes) == smallest_order(nbytes)


def test_order_for_rejects_bad_sizes():
    with pytest.raises(ValueError):
        order_for(0)
    with pytest.raises(CapacityError):
        order_for((MIN_BLOCK << MAX_ORDER) + 1)
    assert order_for(MIN_BLOCK << MAX_ORDER) == MAX_ORDER


def test_superblock_round_trip(store):
    store.write_superblock(vertex_root=640, edge_root=1280, gre=9)
    sb = store.read_superblock()
    assert bytes(store.buf[:8]) == MAGIC
    assert sb["vertex_root"] == 640 and sb["edge_root"] == 1280 and sb["gre"] == 9
    assert sb["tail"] == store.tail


def test_recycle_before_grow(store):
    a = store.allocate(0)
    store.allocate(0)
    store.free(a, 0, retire_epoch=0)
    store.drain(safe_epoch=1)
    assert store.allocate(0) == a


def test_append_path_uses_tail(store):
    tail = store.tail
    ref = store.allocate(3)
    assert ref == tail
    assert store.tail == tail + block_size(3)
    assert ref % MIN_BLOCK == 0


def test_recycled_block_header_is_zeroed(store):
    ref = store.allocate(1)
    store.buf[ref:ref + 128] = b"\xff" * 128
    store.free(ref, 1, 0)
    store.drain(1)
    again = store.allocate(1)
    assert again == ref
    assert bytes(store.buf[ref:ref + MIN_BLOCK]) == bytes(MIN_BLOCK)


def test_free_is_deferred_while_reader_may_see_block(store):
    ref = store.allocate(0)
    store.free(ref, 0, retire_epoch=5)
    store.drain(safe_epoch=5)        # a reader at tre=5 may still hold it
    assert ref not in store.free_list(0)
    store.drain(safe_epoch=6)
    assert ref in store.free_list(0)


def test_double_free_detected_in_debug_mode():
    s = BlockStore(debug=True)
    try:
        ref = s.allocate(0)
        s.free(ref, 0, 0)
        with pytest.raises(InvariantViolation):
            s.free(ref, 0, 0)
    finally:
        s.close()


def test_bad_reference_rejected(store):
    with pytest.raises(InvariantViolation):
        store.free(0, 0, 0)
    with pytest.raises(InvariantViolation):
        store.free(96, 0, 0)


def test_local_lists_are_private(store):
    a, b = store.new_local(), store.new_local()
    ref = store.allocate(2, a)
    store.free(ref, 2, 0, a)
    store.drain(1, a)
    assert ref in store.free_list(2, a)
    assert store.allocate(2, b) != ref
    assert store.allocate(2, a) == ref


def test_large_orders_use_shared_lists():
    s = BlockStore(split_order=1)
    try:
        a, b = s.new_local(), s.new_local()
        ref = s.allocate(3, a)
        s.free(ref, 3, 0, a)
        s.drain(1, a)
        assert s.allocate(3, b) == ref
    finally:
        s.close()


def test_growth_beyond_one_extent(store):
    refs = [store.allocate(6) for _ in range(40)]   # 40 x 4 KiB > 16 pages
    assert store.size >= store.tail
    for i, ref in enumerate(refs):
        store.buf[ref] = i
    assert [store.buf[r] for r in refs] == list(range(40))


def test_file_backed_store(tmp_path):
    path = tmp_path / "data.tel"
    s = BlockStore(path, extent=mmap.PAGESIZE)
    try:
        ref = s.allocate(4)
        s.buf[ref:ref + 4] = b"abcd"
        s.write_superblock(gre=3)
        s.flush()
        assert os.path.getsize(path) >= s.tail
    finally:
        s.close()
    with open(path, "rb") as f:
        data = f.read()
    assert data[:8] == MAGIC
    assert data[ref:ref + 4] == b"abcd"


def test_random_allocate_free_against_model(store):
    """10^5 operations with immediate reclamation replayed against the
    reference allocator: every returned offset matches the model, no block is
    handed out twice, and the byte accounting balances."""
    rng = np.random.default_rng(7)
    model = AllocatorModel(RESERVED_BYTES)
    live: dict[int, int] = {}
    peak = {}
    epoch = 0
    for step in range(100_000):
        if live and rng.random() < 0.5:
            ref = list(live)[int(rng.integers(len(live)))] if len(live) < 64 else next(iter(live))
            order = live.pop(ref)
            store.free(ref, order, epoch)
            model.release(ref, order, epoch)
            epoch += 1          # no readers: the block is reusable at once
            store.drain(epoch)
            model.drain(epoch)
        else:
            order = int(rng.integers(0, 5))
            got = store.allocate(order)
            assert got == model.allocate(order)
            assert got not in live
            live[got] = order
            counts = {}
            for o in live.values():
                counts[o] = counts.get(o, 0) + 1
            peak[order] = max(peak.get(order, 0), counts[order])
        if step % 5000 == 0:
            st_ = store.stats()
            assert st_["tail"] == st_["live"] + st_["free"] + st_["deferred"] + st_["reserved"]
            assert st_["live"] == sum(block_size(o) for o in live.values())
    # no two live blocks overlap
    spans = sorted((r, r + block_size(o)) for r, o in live.items())
    assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))
    assert store.tail <= RESERVED_BYTES + sum(block_size(o) * n for o, n in peak.items())


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 6)), min_size=1, max_size=200))
def test_no_block_live_and_listed(ops):
    s = BlockStore(extent=mmap.PAGESIZE * 16)
    try:
        live = {}
        for epoch, (is_free, order) in enumerate(ops):
            if is_free and live:
                ref, o = live.popitem()
                s.free(ref, o, epoch)
            else:
                ref = s.allocate(order)
                assert ref not in live
                live[ref] = order
            s.drain(epoch)
            listed = set()
            for o in range(MAX_ORDER + 1):
                listed.update(s.free_list(o))
            assert not listed & set(live)
        st_ = s.stats()
        assert st_["tail"] == st_["live"] + st_["free"] + st_["deferred"] + st_["reserved"]
    finally:
        s.close()


def test_deferred_frees_against_model(store):
    """With a lagging safe epoch, recycling follows the retire order exactly."""
    rng = np.random.default_rng(3)
    model = AllocatorModel(RESERVED_BYTES)
    live = {}
    for step in range(20_000):
        if live and rng.random() < 0.5:
            ref, order = live.popitem()
            store.free(ref, order, step)
            model.release(ref, order, step)
        else:
            order = int(rng.integers(0, 4))
            got = store.allocate(order)
            assert got == model.allocate(order)
            live[got] = order
        if step % 11 == 0:
            store.drain(step - 40)
            model.drain(step - 40)
