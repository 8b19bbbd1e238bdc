import logging
from hashlib import blake2b
from pathlib import Path
from typing import Dict, Sequence


def compute_artifact_hash(file: Path) -> str:
    with open(file, "rb") as artifact:
        content = artifact.read()

    h = blake2b(digest_size=32)
    h.update(content)
    return h.hexdigest()


def hash_artifacts(files: Sequence[Path]) -> Dict[str, str]:
    hashes = dict()
    for file in files:
        hashes[file.name] = compute_artifact_hash(file)
        logging.info(f"Content hash of {file}: {hashes[file.name]}")
    return hashes
