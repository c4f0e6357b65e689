import numpy as np
import pytest

from drymep.errors import SpaceTooLarge
from drymep.kinetics import Technology
from drymep.paths import Path, PathDistribution, argmax_weight, enumerate_paths


def test_enumeration_examples():
    assert [str(p) for p in enumerate_paths(1)] == ["HA", "HAUS"]
    assert len(enumerate_paths(3)) == 8
    restricted = enumerate_paths(2, [("HAUS",), ("HA", "HAUS")])
    assert [str(p) for p in restricted] == ["HAUS-HA", "HAUS-HAUS"]


def test_encoding_is_a_bijection():
    for M in range(1, 7):
        paths = enumerate_paths(M)
        assert [p.encoding for p in paths] == list(range(2**M))
        for code in range(2**M):
            assert Path.from_encoding(code, M).encoding == code


def test_bit_k_is_stage_k():
    p = Path.parse("HAUS-HA-HA")
    assert p.encoding == 1
    assert Path.from_encoding(4, 3).stages == (Technology.HA, Technology.HA, Technology.HAUS)


def test_space_cap():
    with pytest.raises(SpaceTooLarge):
        enumerate_paths(12, cap=1024)


def test_argmax_examples():
    paths = enumerate_paths(2)
    assert argmax_weight(PathDistribution.uniform(paths)) == (paths[0], 0.25)
    one_hot = PathDistribution(paths, [0, 0, 1, 0])
    assert argmax_weight(one_hot) == (paths[2], 1.0)
    d = PathDistribution(paths, [0.1, 0.6, 0.3, 0.0])
    path, p = argmax_weight(d)
    assert path.encoding == 1 and p == 0.6


def test_distribution_validation():
    paths = enumerate_paths(1)
    with pytest.raises(ValueError):
        PathDistribution(paths, [0.7, 0.4])
    with pytest.raises(ValueError):
        PathDistribution(paths, [1.0])


def test_distribution_csv():
    d = PathDistribution(enumerate_paths(1), np.array([0.25, 0.75]))
    assert d.to_csv() == "encoding,path,weight\n0,HA,0.25\n1,HAUS,0.75\n"
