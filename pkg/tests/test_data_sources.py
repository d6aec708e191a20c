"""Tests for dataset, adjacency and ground-truth files."""

import json

import numpy as np
import pytest

from src.errors import SchemaError
from src.services.data_sources import (
    CsvDatasetSource,
    read_adjacency,
    read_dataset,
    write_adjacency,
    write_dataset,
    write_ground_truth,
)


def write(path, text):
    path.write_text(text)
    return path


class TestDatasetFiles:
    """Tests for the dataset CSV."""

    def test_roundtrip(self, small_sim, tmp_path):
        data, _ = small_sim
        loaded = read_dataset(write_dataset(data, tmp_path / "data.csv"))
        np.testing.assert_array_equal(loaded.X, data.X)
        np.testing.assert_array_equal(loaded.Y, data.Y)
        np.testing.assert_array_equal(loaded.region, data.region)
        assert loaded.feature_names == data.feature_names

    def test_pair_selection(self, tmp_path):
        path = write(tmp_path / "d.csv", "region_id,y1,y2,y3,age\n0,1,0,1,30\n1,0,0,0,40\n")
        data = read_dataset(path, pair=("y1", "y3"))
        assert data.outcome_names == ("y1", "y3")
        np.testing.assert_array_equal(data.Y, [[1, 1], [0, 0]])
        assert data.feature_names == ["age"]

    def test_bad_outcome_reports_line(self, tmp_path):
        path = write(tmp_path / "d.csv", "region_id,y1,y2,age\n0,1,0,30\n1,2,0,40\n")
        with pytest.raises(SchemaError) as exc:
            read_dataset(path)
        assert exc.value.row == 3

    def test_non_numeric_reports_line(self, tmp_path):
        path = write(tmp_path / "d.csv", "region_id,y1,y2,age\n0,1,0,thirty\n")
        with pytest.raises(SchemaError) as exc:
            read_dataset(path)
        assert exc.value.row == 2

    def test_negative_region(self, tmp_path):
        path = write(tmp_path / "d.csv", "region_id,y1,y2,age\n-1,1,0,30\n")
        with pytest.raises(SchemaError):
            read_dataset(path)

    def test_missing_region_column(self, tmp_path):
        path = write(tmp_path / "d.csv", "y1,y2,age\n1,0,30\n")
        with pytest.raises(SchemaError):
            read_dataset(path)

    def test_unknown_pair_column(self, tmp_path):
        path = write(tmp_path / "d.csv", "region_id,y1,y2,age\n0,1,0,30\n")
        with pytest.raises(SchemaError):
            read_dataset(path, pair=("y1", "y9"))

    def test_source(self, tmp_path):
        path = write(tmp_path / "d.csv", "region_id,y1,y2,age\n0,1,0,30\n")
        source = CsvDatasetSource(path)
        assert source.fetch().n == 1
        assert source.inputs == [path]


class TestAdjacencyFiles:
    """Tests for edge-list files."""

    def test_comments_header_and_duplicates(self, tmp_path):
        path = write(tmp_path / "adj.txt", "# regions\nL=4\n0 1\n1 0\n\n1 2\n")
        graph = read_adjacency(path, rho=0.5)
        assert graph.L == 4
        assert graph.edges == ((0, 1), (1, 2))
        assert graph.rho == 0.5

    def test_inferred_size(self, tmp_path):
        graph = read_adjacency(write(tmp_path / "adj.txt", "0 1\n1 2\n"))
        assert graph.L == 3

    @pytest.mark.parametrize("text,row", [
        ("0 1\n2 2\n", 2),
        ("0 1\n0 x\n", 2),
        ("L=2\n0 1\n1 5\n", 3),
        ("0 1 2\n", 1),
    ])
    def test_errors_carry_line(self, tmp_path, text, row):
        with pytest.raises(SchemaError) as exc:
            read_adjacency(write(tmp_path / "adj.txt", text))
        assert exc.value.row == row

    def test_roundtrip(self, small_sim, tmp_path):
        _, truth = small_sim
        graph = read_adjacency(write_adjacency(truth.graph, tmp_path / "adj.txt"), rho=truth.graph.rho)
        assert graph == truth.graph


class TestGroundTruthFiles:
    """Tests for the simulator's oracle files."""

    def test_files(self, small_sim, tmp_path):
        data, truth = small_sim
        csv_path, json_path = write_ground_truth(truth, data, tmp_path)
        assert csv_path.read_text().splitlines()[0] == "obs_id,region,z_1,z_2,pi1,pi2,eta1,eta2"
        coefficients = json.loads(json_path.read_text())
        assert coefficients["alpha"] == truth.alpha
        assert len(coefficients["beta2"]) == 2
