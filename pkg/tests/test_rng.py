import numpy as np

from encmf.rng import LABELS, RngPolicy


def test_reproducible():
    a = RngPolicy(11).stream("forecast-noise", 4).standard_normal(6)
    b = RngPolicy(11).stream("forecast-noise", 4).standard_normal(6)
    assert np.array_equal(a, b)


def test_distinct_keys_distinct_streams():
    p = RngPolicy(11)
    draws = {}
    for label in LABELS:
        for k in (0, 1, 2):
            draws[(label, k)] = p.stream(label, k).standard_normal(4)
    values = [tuple(v) for v in draws.values()]
    assert len(set(values)) == len(values)
    assert not np.array_equal(RngPolicy(1).stream("obs-noise", 1).standard_normal(3),
                              RngPolicy(2).stream("obs-noise", 1).standard_normal(3))


def test_streams_are_uncorrelated():
    p = RngPolicy(0)
    x = p.stream("aug-noise", 1).standard_normal(200_000)
    y = p.stream("forecast-noise", 1).standard_normal(200_000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 5 / np.sqrt(200_000)


def test_tracking_and_child_seeds():
    p = RngPolicy(5, track=True)
    p.stream("split", 3)
    p.stream("net-init", 3)
    assert p.issued == [("split", 3), ("net-init", 3)]
    assert [p.child_seed(i) for i in range(3)] == [5, 6, 7]
