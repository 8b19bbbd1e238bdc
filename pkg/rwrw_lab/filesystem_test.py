import pytest

from rwrw_lab.errors import ErrKnown
from rwrw_lab.filesystem import (ensure_directory, find_file_in_folder,
                                 get_files_recursively, read_csv, write_csv)


def test_write_csv_uses_repr_for_floats(tmp_path):
    file = write_csv(tmp_path / "out.csv", ["t", "value"], [[1, 0.1], [2, 1 / 3]])
    assert file.read_text() == "t,value\n1,0.1\n2,0.3333333333333333\n"
    assert read_csv(file) == [["t", "value"], ["1", "0.1"], ["2", "0.3333333333333333"]]


def test_find_file_in_folder(tmp_path):
    nested = ensure_directory(tmp_path / "a" / "b")
    (nested / "summary.json").write_text("{}")
    assert find_file_in_folder(tmp_path, "summary.json") == (nested / "summary.json").resolve()
    assert get_files_recursively(tmp_path) == [nested / "summary.json"]
    with pytest.raises(ErrKnown):
        find_file_in_folder(tmp_path, "*.csv")
