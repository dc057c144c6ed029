import numpy as np

from gearevo.seeding import stream


def test_same_keys_same_draws():
    a = stream("env", 0, 1, 2).standard_normal(8)
    b = stream("env", 0, 1, 2).standard_normal(8)
    assert np.array_equal(a, b)


def test_different_keys_differ():
    a = stream("env", 0, 1, 2).standard_normal(8)
    b = stream("env", 0, 1, 3).standard_normal(8)
    c = stream("rollout", 0, 1, 2).standard_normal(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_label_is_part_of_the_key():
    assert not np.array_equal(
        stream("shuffle", 7).standard_normal(4),
        stream("rollout", 7).standard_normal(4),
    )


def test_negative_and_large_ints_accepted():
    g = stream("x", -3, 2**40)
    assert np.isfinite(g.standard_normal())
