import json
import os

from sif_exporter.grid import grid_points

FIXTURE = os.path.join(os.path.dirname(__file__), "fixtures", "grid_points_cases.json")


def test_matches_downstream_toolkit_fixture():
    # The fixture is generated by the downstream toolkit's own grid
    # function; coordinates must agree exactly on every case.
    with open(FIXTURE) as fh:
        cases = json.load(fh)
    assert len(cases) >= 8
    for case in cases:
        got = grid_points(case["h"], case["w"], case["n"])
        assert [[x, y] for x, y in got] == case["points"], (case["h"], case["w"], case["n"])


def test_points_in_bounds():
    for h, w, n in [(7, 3, 5), (1, 1, 4), (33, 65, 9)]:
        for x, y in grid_points(h, w, n):
            assert 0 <= x < w and 0 <= y < h


def test_row_major_order():
    pts = grid_points(4, 4, 2)
    assert pts == [(1, 1), (3, 1), (1, 3), (3, 3)]
