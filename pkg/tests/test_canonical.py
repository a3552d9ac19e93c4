import pytest

from congait.canonical import canonical_json, content_hash


class TestCanonicalJson:
    def test_sorted_compact_form(self):
        assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'

    def test_shortest_round_trip_floats(self):
        assert canonical_json(0.1) == "0.1"
        assert canonical_json(1.0 / 3.0) == "0.3333333333333333"
        assert canonical_json(2.5) == "2.5"

    def test_utf8_not_escaped(self):
        assert canonical_json({"note": "Parkinson’s"}) == \
            '{"note":"Parkinson’s"}'

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            canonical_json(float("nan"))

    def test_stable_hash(self):
        assert content_hash({"weights": [0.5, -1.25], "kind": "dense"}) == \
            content_hash({"kind": "dense", "weights": [0.5, -1.25]})
        # pinned externally: printf '{"a":1}' | sha256sum
        assert content_hash({"a": 1}) == \
            "015abd7f5cc57a2dd94b7590f04ad8084273905ee33ec5cebeae62276a97f862"

    def test_nested_key_order_irrelevant(self):
        a = {"outer": {"y": 2, "x": 1}, "list": [{"b": 2, "a": 1}]}
        b = {"list": [{"a": 1, "b": 2}], "outer": {"x": 1, "y": 2}}
        assert canonical_json(a) == canonical_json(b)
