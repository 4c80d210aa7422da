import numpy as np
import pytest

from meshsrr.mesh import FemMesh


@pytest.fixture
def square_mesh():
    """Two CCW triangles splitting [-1, 1]^2 along the main diagonal."""
    nodes = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    elements = np.array([[0, 1, 2], [0, 2, 3]])
    return FemMesh(nodes, elements)


@pytest.fixture
def one_triangle_mesh():
    """A single triangle covering all of [-1, 1]^2 (vertices on the square)."""
    nodes = np.array([[-1.0, -1.0], [1.0, -1.0], [0.0, 1.0]])
    return FemMesh(nodes, np.array([[0, 1, 2]]))
