import numpy as np
import pytest

from quanteit import textio
from quanteit.errors import LoadError


def test_matrix_roundtrip_exact(tmp_path):
    a = np.random.default_rng(0).normal(size=(3, 5)) * 1e-7
    textio.write_matrix(tmp_path / "a.mat", a)
    assert textio.read_matrix(tmp_path / "a.mat").tobytes() == a.tobytes()
    lines = (tmp_path / "a.mat").read_text().split("\n")
    assert lines[0] == "3 5" and len(lines[1].split()) == 5


def test_vector_is_a_column(tmp_path):
    textio.write_vector(tmp_path / "v.vec", [1.5, 2.5])
    assert (tmp_path / "v.vec").read_text() == "2 1\n1.5\n2.5\n"
    np.testing.assert_array_equal(textio.read_vector(tmp_path / "v.vec"), [1.5, 2.5])


@pytest.mark.parametrize(
    "text, line",
    [("", 1), ("2\n1\n", 1), ("a b\n", 1), ("2 2\n1 2\n", 2), ("2 2\n1 2\n3\n", 3), ("1 2\n1 nan\n", 2)],
)
def test_malformed(tmp_path, text, line):
    (tmp_path / "bad.mat").write_text(text)
    with pytest.raises(LoadError) as exc:
        textio.read_matrix(tmp_path / "bad.mat")
    assert exc.value.line == line


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError, match="missing.mat"):
        textio.read_matrix(tmp_path / "missing.mat")


def test_pgm(tmp_path):
    textio.write_pgm(tmp_path / "x.pgm", np.array([[0.0, 0.5], [1.0, -1.0]]))
    assert (tmp_path / "x.pgm").read_text() == "P2\n2 2\n255\n0 128\n255 0\n"


def test_atomic_write_leaves_no_temp(tmp_path):
    textio.write_json(tmp_path / "c.json", {"b": 1, "a": [1, 2]})
    assert [p.name for p in tmp_path.iterdir()] == ["c.json"]
