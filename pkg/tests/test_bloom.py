import numpy as np
from hypothesis import given, settings, strategies as st

from telgraph import bloom

keys = st.lists(st.integers(0, (1 << 63) - 1), min_size=1, max_size=300, unique=True)
sizes = st.sampled_from([32, 64, 128, 256, 1024, 4096])


@given(keys, sizes)
def test_no_false_negatives(ks, nbytes):
    buf = bytearray(nbytes + 16)
    for k in ks:
        bloom.add(buf, 8, nbytes, k)
    assert all(bloom.might_contain(buf, 8, nbytes, k) for k in ks)
    assert buf[:8] == bytes(8) and buf[8 + nbytes:] == bytes(8)


@given(keys, sizes)
def test_vector_probes_match_scalar(ks, nbytes):
    pos, mask = bloom.probe_positions(np.array(ks, dtype=np.int64), np.full(len(ks), nbytes))
    for i, k in enumerate(ks):
        assert list(zip(pos[i].tolist(), mask[i].tolist())) == list(bloom._positions(k, nbytes))


@given(st.integers(0, (1 << 63) - 1), st.sampled_from([64, 256, 4096]))
def test_probes_stay_in_one_cache_line(k, nbytes):
    lines = {p // bloom.SUB_BLOCK for p, _ in bloom._positions(k, nbytes)}
    assert len(lines) == 1
    assert all(0 <= p < nbytes for p, _ in bloom._positions(k, nbytes))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32))
def test_false_positive_rate_at_design_load(seed):
    # a TEL of capacity C has C/16 filter bytes and holds at most about C/28
    # entries; half of that is ~2.3 keys per filter byte
    rng = np.random.default_rng(seed)
    nbytes = 256
    n = int(nbytes * 16 / 28 / 2)
    members = rng.choice(1 << 40, size=n, replace=False)
    buf = bytearray(nbytes)
    for k in members:
        bloom.add(buf, 0, nbytes, int(k))
    probes = rng.integers(1 << 41, 1 << 42, size=4000)
    fp = sum(bloom.might_contain(buf, 0, nbytes, int(k)) for k in probes)
    assert fp / len(probes) < 0.05
