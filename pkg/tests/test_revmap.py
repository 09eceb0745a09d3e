"""Reverse map semantics against a plain dictionary-of-lists oracle."""

import numpy as np
import pytest

from aqf.errors import ConfigMismatchError, FormatError, InvalidConfigError, NotFoundError
from aqf.revmap import ReverseMap


class TestBasicOps:
    def test_first_insert_starts_a_list(self):
        m = ReverseMap(8)
        m.map_insert(42, 0, 1001)
        assert m.map_get(42, 0) == (1001, None)
        assert m.list_size(42) == 1

    def test_insert_at_tail_extends(self):
        m = ReverseMap(8)
        m.map_insert(42, 0, 1)
        m.map_insert(42, 1, 2, b"v")
        assert [m.map_get(42, k) for k in range(2)] == [(1, None), (2, b"v")]

    def test_insert_mid_list_shifts_later_ranks(self):
        m = ReverseMap(8)
        m.map_insert(42, 0, 1)
        m.map_insert(42, 1, 3)
        m.map_insert(42, 1, 2)
        assert [m.map_get(42, k)[0] for k in range(3)] == [1, 2, 3]

    def test_out_of_bounds_are_not_found(self):
        m = ReverseMap(8)
        with pytest.raises(NotFoundError):
            m.map_get(42, 0)
        m.map_insert(42, 0, 1)
        with pytest.raises(NotFoundError):
            m.map_get(42, 1)
        with pytest.raises(NotFoundError):
            m.map_insert(42, 2, 9)
        with pytest.raises(NotFoundError):
            m.map_remove(43, 0)

    def test_remove_drops_empty_ids(self):
        m = ReverseMap(8)
        m.map_insert(7, 0, 11)
        assert m.map_remove(7, 0) == (11, None)
        assert m.list_size(7) == 0
        assert len(m) == 0

    def test_remove_head_keeps_tail(self):
        m = ReverseMap(8)
        m.map_insert(7, 0, 11)
        m.map_insert(7, 1, 22)
        m.map_remove(7, 0)
        assert m.map_get(7, 0) == (22, None)

    def test_find_rank_returns_first_occurrence(self):
        m = ReverseMap(8)
        for rank, key in enumerate([5, 6, 5]):
            m.map_insert(9, rank, key)
        assert m.find_rank(9, 5) == 0
        assert m.find_rank(9, 6) == 1
        assert m.find_rank(9, 99) is None

    def test_rejects_oversized_keys_and_non_byte_values(self):
        m = ReverseMap(8)
        with pytest.raises(InvalidConfigError):
            m.map_insert(1, 0, 1 << 64)
        with pytest.raises(InvalidConfigError):
            m.map_insert(1, 0, 5, value="text")

    def test_access_counter_covers_reads_and_writes(self):
        m = ReverseMap(8)
        base = m.accesses
        m.map_insert(1, 0, 5)
        m.map_get(1, 0)
        m.find_rank(1, 5)
        m.map_remove(1, 0)
        assert m.accesses == base + 4
        assert m.list_size(1) == 0 and m.accesses == base + 4


class TestDictOracle:
    def test_random_op_stream(self):
        rng = np.random.default_rng(41)
        m = ReverseMap(10)
        oracle: dict[int, list] = {}
        for _ in range(100_000):
            mid = int(rng.integers(0, 160))
            lst = oracle.get(mid, [])
            op = rng.random()
            if op < 0.45:
                rank = int(rng.integers(0, len(lst) + 1))
                key = int(rng.integers(0, 1 << 64, dtype=np.uint64))
                value = None if rng.random() < 0.5 else bytes(rng.bytes(3))
                m.map_insert(mid, rank, key, value)
                oracle.setdefault(mid, []).insert(rank, (key, value))
            elif op < 0.70:
                rank = int(rng.integers(0, len(lst) + 2))
                if rank < len(lst):
                    assert m.map_get(mid, rank) == lst[rank]
                else:
                    with pytest.raises(NotFoundError):
                        m.map_get(mid, rank)
            elif op < 0.90:
                if lst:
                    rank = int(rng.integers(0, len(lst)))
                    assert m.map_remove(mid, rank) == lst.pop(rank)
                    if not lst:
                        del oracle[mid]
                else:
                    with pytest.raises(NotFoundError):
                        m.map_remove(mid, 0)
            else:
                assert m.list_size(mid) == len(lst)
        assert m.entries == oracle
        assert m.key_count == sum(len(v) for v in oracle.values())


class TestConcat:
    def test_disjoint_union(self):
        a, b = ReverseMap(8), ReverseMap(8)
        a.map_insert(1, 0, 10)
        b.map_insert(2, 0, 20)
        c = a.map_concat(b)
        assert c.map_get(1, 0)[0] == 10 and c.map_get(2, 0)[0] == 20
        assert len(c) == 2

    def test_shared_id_appends_in_argument_order(self):
        a, b = ReverseMap(8), ReverseMap(8)
        a.map_insert(1, 0, 10)
        b.map_insert(1, 0, 20)
        c = a.map_concat(b)
        assert [c.map_get(1, k)[0] for k in range(2)] == [10, 20]
        # inputs untouched
        assert a.list_size(1) == 1 and b.list_size(1) == 1

    def test_mismatched_widths_rejected(self):
        with pytest.raises(ConfigMismatchError):
            ReverseMap(8).map_concat(ReverseMap(9))


class TestSnapshot:
    def test_single_entry_roundtrip(self):
        m = ReverseMap(8)
        m.map_insert(3, 0, 123, b"payload")
        assert ReverseMap.from_bytes(m.to_bytes()) == m

    def test_empty_roundtrip_needs_explicit_width(self):
        m = ReverseMap(8)
        blob = m.to_bytes()
        assert ReverseMap.from_bytes(blob, qbits=8) == m
        with pytest.raises(FormatError):
            ReverseMap.from_bytes(blob)

    def test_large_random_roundtrip(self):
        rng = np.random.default_rng(43)
        m = ReverseMap(12)
        for _ in range(100_000):
            mid = int(rng.integers(0, 40_000))
            value = None if rng.random() < 0.7 else bytes(rng.bytes(int(rng.integers(0, 9))))
            m.map_insert(mid, m.list_size(mid), int(rng.integers(0, 1 << 64, dtype=np.uint64)), value)
        back = ReverseMap.from_bytes(m.to_bytes())
        assert back == m
        assert back.to_bytes() == m.to_bytes()

    def test_rejects_corruption(self):
        m = ReverseMap(8)
        m.map_insert(3, 0, 123)
        blob = m.to_bytes()
        with pytest.raises(FormatError):
            ReverseMap.from_bytes(b"ZZZZ" + blob[4:])
        with pytest.raises(FormatError):
            ReverseMap.from_bytes(blob[:-2])
        with pytest.raises(FormatError):
            ReverseMap.from_bytes(blob + b"\0")
        with pytest.raises(ConfigMismatchError):
            ReverseMap.from_bytes(blob, qbits=9)

    def test_file_backed_lifecycle(self, tmp_path):
        path = tmp_path / "map.aqfm"
        m = ReverseMap(8, path=path)
        m.map_insert(3, 0, 77)
        with pytest.raises(InvalidConfigError):
            ReverseMap(8).flush()
        m.flush()
        again = ReverseMap(8, path=path)
        assert again == m
        loaded = ReverseMap.load(path)
        assert loaded == m and loaded.path == path
