import numpy as np
import pytest

from core.errors import ShapeError
from ui.plots import plot_trajectories


def test_writes_every_format(tmp_path):
    positions = np.cumsum(np.random.default_rng(0).normal(size=(20, 3, 2)), axis=0)
    written = plot_trajectories([positions, positions + 0.5], tmp_path / "traj", names=["truth", "pred"],
                                node_labels=[0, 1, 0], energies=[0.1, 2.0, -1.0])
    assert [p.suffix for p in written] == [".png", ".svg"]
    assert all(p.stat().st_size > 0 for p in written)


def test_projects_three_dimensional_positions(tmp_path):
    positions = np.zeros((5, 2, 3))
    written = plot_trajectories([positions], tmp_path / "xz", coords=(0, 2), formats=("png",))
    assert written == [tmp_path / "xz.png"]


def test_shape_errors(tmp_path):
    with pytest.raises(ShapeError):
        plot_trajectories([], tmp_path / "empty")
    with pytest.raises(ShapeError):
        plot_trajectories([np.zeros((5, 2, 2)), np.zeros((5, 3, 2))], tmp_path / "mixed")
    with pytest.raises(ShapeError):
        plot_trajectories([np.zeros((5, 2, 2))], tmp_path / "coords", coords=(0, 2))
