import json
import subprocess
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List

from rwrw_lab.errors import ErrConfig

SUMMARY_FILE_NAME = "summary.json"


class AssertionOutcome:
    def __init__(self, name: str, passed: bool, detail: str = "") -> None:
        self.name = name
        self.passed = bool(passed)
        self.detail = detail

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


class RunManifest:
    def __init__(self) -> None:
        self.experiment = ""
        self.config = ""
        self.seed = 0
        self.streams: List[str] = []
        self.wall_time = 0.0
        self.outputs: Dict[str, str] = dict()
        self.assertions: List[AssertionOutcome] = []
        self.summary: Dict[str, Any] = dict()
        self.library_version = get_library_version()
        self.build = get_git_describe()

    @classmethod
    def from_file(cls, file: Path) -> 'RunManifest':
        try:
            with open(file) as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as error:
            raise ErrConfig(f"cannot read run manifest {file}: {error}")

        manifest = RunManifest()
        manifest.experiment = data.get("experiment", "")
        manifest.config = data.get("config", "")
        manifest.seed = int(data.get("seed", 0))
        manifest.streams = list(data.get("streams", []))
        manifest.wall_time = float(data.get("wallTime", 0.0))
        manifest.outputs = dict(data.get("outputs", dict()))
        manifest.assertions = [AssertionOutcome(entry["name"], entry["passed"], entry.get("detail", "")) for entry in data.get("assertions", [])]
        manifest.summary = dict(data.get("summary", dict()))
        manifest.library_version = data.get("libraryVersion", "")
        manifest.build = data.get("build", "")
        return manifest

    @property
    def passed(self) -> bool:
        return all(assertion.passed for assertion in self.assertions)

    def failed_assertions(self) -> List[AssertionOutcome]:
        return [assertion for assertion in self.assertions if not assertion.passed]

    def save_to_file(self, file: Path):
        data = self.to_dict()

        with open(file, "w") as f:
            json.dump(data, f, indent=4)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "seed": self.seed,
            "streams": self.streams,
            "wallTime": self.wall_time,
            "outputs": self.outputs,
            "assertions": [assertion.to_dict() for assertion in self.assertions],
            "passed": self.passed,
            "summary": self.summary,
            "libraryVersion": self.library_version,
            "build": self.build
        }


def get_library_version() -> str:
    try:
        return metadata.version("rwrw-lab")
    except metadata.PackageNotFoundError:
        return "unknown"


def get_git_describe() -> str:
    try:
        result = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                                cwd=Path(__file__).parent, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return ""
    return result.stdout.strip() if result.returncode == 0 else ""
