import numpy as np
import pytest

from src.errors import GridFormatError
from src.field_store import FieldStore, load_grid_function, read_gridtxt, write_gridtxt
from src.models import GridFunction2D
from src.sample_fields import domain_mask


def test_gridtxt_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.standard_normal((7, 5)) * 10.0 ** rng.integers(-12, 12, size=(7, 5))
    path = tmp_path / "field.gridtxt"
    write_gridtxt(path, values, (-1.0, -0.5), (1.0 / 3.0, 0.25))
    back, origin, spacing = read_gridtxt(path)
    assert np.array_equal(back, values)
    assert origin == (-1.0, -0.5)
    assert spacing == (1.0 / 3.0, 0.25)


def test_store_keeps_values_and_mask(tmp_path):
    mask = domain_mask(17, domain="disk")
    phi = GridFunction2D.square(lambda x1, x2: np.exp(x1) * np.cos(x2), 17, mask=mask)
    store = FieldStore(str(tmp_path))
    store.save("phi", phi)
    store.save_array("phi_x1x1", phi.values * 2.0, phi)

    reopened = FieldStore(str(tmp_path))
    assert reopened.names() == ["phi", "phi_x1x1"]
    loaded = reopened.load("phi")
    assert np.array_equal(loaded.mask, mask)
    assert np.array_equal(loaded.values[mask], phi.values[mask])
    assert loaded.origin == phi.origin and loaded.spacing == phi.spacing
    assert (tmp_path / "fields" / "manifest.txt").read_text().splitlines()[0] == "phi = phi.gridtxt"
    with pytest.raises(KeyError):
        reopened.load("psi")


@pytest.mark.parametrize("text", [
    "",
    "2 2 0 0 1\n1 2\n3 4\n",
    "two 2 0 0 1 1\n1 2\n3 4\n",
    "2 2 0 0 -1 1\n1 2\n3 4\n",
    "2 2 0 0 1 1\n1 2\n",
    "2 2 0 0 1 1\n1 2\n3\n",
    "2 2 0 0 1 1\n1 2\n3 x\n",
])
def test_malformed_gridtxt(tmp_path, text):
    path = tmp_path / "bad.gridtxt"
    path.write_text(text)
    with pytest.raises(GridFormatError):
        read_gridtxt(path)


def test_missing_gridtxt(tmp_path):
    with pytest.raises(GridFormatError):
        read_gridtxt(tmp_path / "absent.gridtxt")


def test_mask_must_match_grid(tmp_path):
    values = np.ones((3, 3))
    write_gridtxt(tmp_path / "phi.gridtxt", values, (0.0, 0.0), (0.5, 0.5))
    write_gridtxt(tmp_path / "shifted.mask", np.ones((3, 3)), (0.1, 0.0), (0.5, 0.5), integer=True)
    write_gridtxt(tmp_path / "twos.mask", 2 * np.ones((3, 3)), (0.0, 0.0), (0.5, 0.5), integer=True)
    with pytest.raises(GridFormatError):
        load_grid_function(str(tmp_path / "phi.gridtxt"), str(tmp_path / "shifted.mask"))
    with pytest.raises(GridFormatError):
        load_grid_function(str(tmp_path / "phi.gridtxt"), str(tmp_path / "twos.mask"))


def test_nan_marks_nodes_outside_domain(tmp_path):
    values = np.array([[1.0, np.nan], [2.0, 3.0]])
    write_gridtxt(tmp_path / "phi.gridtxt", values, (0.0, 0.0), (1.0, 1.0))
    grid = load_grid_function(str(tmp_path / "phi.gridtxt"))
    assert grid.mask.tolist() == [[True, False], [True, True]]
    assert grid.values[0, 1] == 0.0
