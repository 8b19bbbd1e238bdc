import csv
import logging
from pathlib import Path
from typing import Iterable, List, Sequence

from rwrw_lab.errors import ErrKnown


def ensure_directory(directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def write_csv(file: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    """Rows are written in the order given; floats go through ``repr`` so reruns are byte-identical."""
    with open(file, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(value) if isinstance(value, float) else value for value in row])

    logging.info(f"Wrote {file}, with size = {file.stat().st_size} bytes")
    return file


def read_csv(file: Path) -> List[List[str]]:
    with open(file, newline="") as f:
        return [row for row in csv.reader(f)]


def get_files_recursively(directory: Path, pattern: str = "*") -> List[Path]:
    return sorted(path for path in directory.rglob(pattern) if path.is_file())


def find_file_in_folder(folder: Path, pattern: str) -> Path:
    files = sorted(folder.rglob(pattern))

    if len(files) == 0:
        raise ErrKnown(f"No file matches pattern [{pattern}] in folder {folder}")
    if len(files) > 1:
        logging.warning(f"More files match pattern [{pattern}] in folder {folder}. Will pick first:\n{files}")

    return files[0].resolve()
