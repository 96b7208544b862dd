"""Sparsity patterns compared against stored golden files.

The files in ``golden/`` are produced by ``golden/generate_golden.py``, which
derives each pattern from node positions alone without importing the package.
"""

import csv
import importlib.util
from pathlib import Path

import pytest

from semiglobal import geometry as G
from semiglobal.overlap import assemble_multi_interval, assemble_subdomains, sparsity_pattern

GOLDEN = Path(__file__).parent / "golden"


def read_pattern(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["row", "col"]
    return [(int(r), int(c)) for r, c in rows[1:]]


def one_point():
    return assemble_subdomains("one_point", G.one_point_pair(0.0, 1.0, 2.0, 4))


def test_one_point_4x4():
    assert sparsity_pattern(one_point()) == read_pattern(GOLDEN / "one_point_4x4.csv")


def test_one_point_4x4_structural():
    pat = sparsity_pattern(one_point(), structural=True)
    assert pat == read_pattern(GOLDEN / "one_point_4x4_structural.csv")


@pytest.mark.parametrize("shift", [2, 3, 4, 5])
def test_pseudo_15(shift):
    op = assemble_subdomains("pseudo_multi", G.pseudo_multipoint_pair(15, 15, shift_index=shift))
    assert op.size == 29
    assert sparsity_pattern(op) == read_pattern(GOLDEN / f"pseudo_15_shift{shift}.csv")


def test_multi_interval_6x20():
    op = assemble_multi_interval(0.0, 1.0, 6, 20, 0.02)
    assert sparsity_pattern(op) == read_pattern(GOLDEN / "multi_interval_6x20.csv")


def test_golden_files_regenerate(tmp_path):
    spec = importlib.util.spec_from_file_location("generate_golden", GOLDEN / "generate_golden.py")
    gen = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(gen)
    gen.HERE = tmp_path
    gen.one_point()
    for shift in (2, 3, 4, 5):
        gen.pseudo(15, shift)
    gen.multi_interval()
    stored = sorted(p.name for p in GOLDEN.glob("*.csv"))
    assert stored == sorted(p.name for p in tmp_path.glob("*.csv"))
    for name in stored:
        assert (tmp_path / name).read_bytes() == (GOLDEN / name).read_bytes()
