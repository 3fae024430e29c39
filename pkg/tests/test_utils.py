"""
Tests for CSV output and small helpers.
"""

import numpy as np
import pytest

from varbvp.errors import InvalidConfig
from varbvp.utils import as_vector, csv_text, fd_steps, format_summary_log, read_csv, write_csv


class TestCsv:
    """Tests for lossless CSV output."""

    def test_round_trip_is_lossless(self, tmp_path):
        rows = np.array([[0.1, 1.0 / 3.0, np.pi], [-2.5e-300, 1e300, np.nextafter(1.0, 2.0)]])
        path = tmp_path / "values.csv"
        write_csv(path, ["a", "b", "c"], rows)
        header, data = read_csv(path)
        assert header == ["a", "b", "c"]
        np.testing.assert_array_equal(data, rows)

    def test_single_row_reads_back_as_two_dimensional(self, tmp_path):
        path = tmp_path / "one.csv"
        write_csv(path, ["x", "y"], np.array([[1.0, 2.0]]))
        _, data = read_csv(path)
        assert data.shape == (1, 2)

    def test_text_is_deterministic(self):
        rows = np.random.default_rng(1).standard_normal((5, 3))
        assert csv_text(["a", "b", "c"], rows) == csv_text(["a", "b", "c"], rows.copy())

    def test_header_line_has_no_comment_marker(self):
        text = csv_text(["t", "q_0"], np.zeros((1, 2)))
        assert text.splitlines()[0] == "t,q_0"

    def test_overwrite_leaves_no_temp_files(self, tmp_path):
        path = tmp_path / "out.csv"
        write_csv(path, ["x"], np.ones((2, 1)))
        write_csv(path, ["x"], np.zeros((2, 1)))
        assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]

    def test_missing_directory_raises_invalid_config(self, tmp_path):
        with pytest.raises(InvalidConfig, match="cannot write"):
            write_csv(tmp_path / "absent" / "out.csv", ["x"], np.ones((1, 1)))
        assert list(tmp_path.iterdir()) == []


class TestAsVector:
    """Tests for vector coercion."""

    def test_scalar_broadcast(self):
        np.testing.assert_array_equal(as_vector(2.0, 3, "q1"), [2.0, 2.0, 2.0])

    def test_sequence_kept(self):
        np.testing.assert_array_equal(as_vector([1, 2], 2, "q1"), [1.0, 2.0])

    def test_wrong_length(self):
        with pytest.raises(InvalidConfig):
            as_vector([1.0, 2.0], 3, "q1")

    def test_non_finite(self):
        with pytest.raises(InvalidConfig):
            as_vector([np.nan], 1, "q1")


class TestHelpers:
    """Tests for finite-difference steps and summaries."""

    def test_fd_steps_scale_with_magnitude(self):
        np.testing.assert_allclose(fd_steps([0.0, -3.0], relative=1e-6), [1e-6, 4e-6])

    def test_summary_contains_entries(self):
        text = format_summary_log("solve summary", {"residual": 1.5e-11, "iterations": 4})
        assert "solve summary" in text
        assert "residual:" in text and "1.5e-11" in text
        assert "iterations:" in text and "4" in text
