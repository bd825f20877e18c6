import numpy as np
import pytest

import taskopt as to
from taskopt.containers import VariableContainer


def _container():
    reg = to.LeafRegistry()
    c = VariableContainer("variable")
    blocks = {
        "a": reg.variable("a", 2, 1),
        "b": reg.variable("b", 2, 2),
    }
    for name, block in blocks.items():
        c.register(name, block)
    return c


class TestRegister:
    def test_offsets_and_total(self):
        c = _container()
        assert c.offset_of("a") == 0
        assert c.offset_of("b") == 2
        assert c.total_length == 6

    def test_duplicate_name(self):
        reg = to.LeafRegistry()
        c = VariableContainer("variable")
        c.register("a", reg.variable("a", 2, 1))
        reg2 = to.LeafRegistry()
        with pytest.raises(ValueError):
            c.register("a", reg2.variable("a", 2, 1))

    def test_empty_container(self):
        c = VariableContainer("variable")
        assert c.total_length == 0
        assert c.vectorize({}).size == 0

    def test_kind_mismatch_rejected(self):
        reg = to.LeafRegistry()
        c = VariableContainer("variable")
        with pytest.raises(ValueError):
            c.register("p", reg.parameter("p", 2, 1))


class TestVectorize:
    def test_column_major(self):
        c = _container()
        flat = c.vectorize({"a": [1.0, 2.0], "b": [[3.0, 5.0], [4.0, 6.0]]})
        assert np.allclose(flat, [1, 2, 3, 4, 5, 6])

    def test_missing_block_zero_fill(self):
        c = _container()
        flat = c.vectorize({"a": [1.0, 2.0]})
        assert np.allclose(flat, [1, 2, 0, 0, 0, 0])

    def test_wrong_shape(self):
        c = _container()
        with pytest.raises(ValueError):
            c.vectorize({"a": [[1.0, 2.0], [3.0, 4.0]]})

    def test_unknown_name(self):
        c = _container()
        with pytest.raises(KeyError):
            c.vectorize({"zz": [1.0]})


class TestDevectorize:
    def test_inverse(self):
        c = _container()
        out = c.devectorize([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        assert np.allclose(out["a"], [1, 2])
        assert np.allclose(out["b"], [[3, 5], [4, 6]])

    def test_length_mismatch(self):
        c = _container()
        with pytest.raises(ValueError):
            c.devectorize(np.zeros(5))

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        c = _container()
        for _ in range(100):
            values = {"a": rng.normal(size=2), "b": rng.normal(size=(2, 2))}
            out = c.devectorize(c.vectorize(values))
            assert np.array_equal(out["a"], values["a"])
            assert np.array_equal(out["b"], values["b"])

    def test_vector_round_trip(self):
        rng = np.random.default_rng(1)
        c = _container()
        for _ in range(50):
            flat = rng.normal(size=6)
            assert np.array_equal(c.vectorize(c.devectorize(flat)), flat)


class TestLayout:
    def test_registration_order_changes_offsets(self):
        rega, regb = to.LeafRegistry(), to.LeafRegistry()
        c1 = VariableContainer("variable")
        c1.register("a", rega.variable("a", 2, 1))
        c1.register("b", rega.variable("b", 3, 1))
        c2 = VariableContainer("variable")
        c2.register("b", regb.variable("b", 3, 1))
        c2.register("a", regb.variable("a", 2, 1))
        assert c1.offset_of("b") == 2
        assert c2.offset_of("b") == 0
        assert c1.total_length == c2.total_length == 5

    def test_leaves_match_layout(self):
        c = _container()
        leaves = c.leaves()
        assert len(leaves) == c.total_length
        # column-major within blocks: row varies fastest
        assert (leaves[2].row, leaves[2].col) == (0, 0)
        assert (leaves[3].row, leaves[3].col) == (1, 0)
        assert (leaves[4].row, leaves[4].col) == (0, 1)
