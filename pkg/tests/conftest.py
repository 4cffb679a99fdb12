import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from luxmin.domain_grid import DomainSpec, ScalarField, build_grid


@pytest.fixture(scope="session")
def grid16():
    return build_grid(DomainSpec.rectangle(1, 1, 16))


@pytest.fixture(scope="session")
def grid24():
    return build_grid(DomainSpec.rectangle(1, 1, 24))


@pytest.fixture(scope="session")
def disk24():
    return build_grid(DomainSpec.disk(1, 24))


def random_field(grid, rng, zero_trace=True):
    vals = rng.standard_normal(grid.n_nodes)
    if zero_trace:
        vals[~grid.interior_mask] = 0.0
    return ScalarField(grid, vals, zero_trace=zero_trace)


def smooth_random_field(grid, rng, width=2.0, zero_trace=True):
    """Random field low-passed on the lattice; keeps the trace condition."""
    arr = grid.to_lattice_array(rng.standard_normal(grid.n_nodes))
    arr = gaussian_filter(arr, sigma=width, mode="constant", cval=0.0)
    vals = arr[grid.lattice_ij[:, 1], grid.lattice_ij[:, 0]].copy()
    if zero_trace:
        vals[~grid.interior_mask] = 0.0
    if np.all(vals == 0.0):
        vals[grid.interior_indices[0]] = 1.0
    return ScalarField(grid, vals, zero_trace=zero_trace)
