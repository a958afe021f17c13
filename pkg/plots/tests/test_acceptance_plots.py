# plots/tests/test_acceptance.py

"""Secondary acceptance: render a sweep CSV in the comparison-figure format."""

import pathlib
from contextlib import contextmanager

import matplotlib.pyplot as plt
import numpy as np

from qmpx_plots import load_curves, render

HERE = pathlib.Path(__file__).parent
TINY_CSV = HERE / "golden" / "tiny.csv"
GOLDEN_PNG = HERE / "golden" / "tiny.png"


@contextmanager
def criterion(num, text):
    try:
        yield
    except Exception:
        print(f"[FAIL] criterion {num}: {text}")
        raise
    print(f"[PASS] criterion {num}: {text}")


class TestCriterion11:
    def test_renders_sweep_csv_with_correct_groups(self, tmp_path):
        with criterion(11, "sweep CSV renders to PNG with correct group count and axes; golden file matches"):
            curves = load_curves(TINY_CSV)
            assert len(curves.groups) == 2  # Proposed + UniformPA
            assert len(curves.snr_db) == 3

            out = tmp_path / "curves.png"
            render(TINY_CSV, out, title="tiny sweep")
            got = plt.imread(out)
            want = plt.imread(GOLDEN_PNG)
            assert got.shape == want.shape
            assert np.array_equal(got, want)
