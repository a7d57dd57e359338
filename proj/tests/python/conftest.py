"""Puts the compiled extension and the package sources on sys.path.

The ctest wrapper exports STSEG_PYMODULE_DIR (directory holding the built
_stseg module) and STSEG_CLI (path to the command-line binary); running
pytest by hand falls back to scanning the in-tree build directory.
"""

import os
import sys
from pathlib import Path

_repo = Path(__file__).resolve().parents[2]


def _module_dirs():
    env = os.environ.get("STSEG_PYMODULE_DIR")
    if env:
        yield Path(env)
    yield _repo / "build"
    for sub in sorted((_repo / "build").glob("*")):
        if sub.is_dir():
            yield sub


for _d in _module_dirs():
    if list(_d.glob("_stseg*.so")) or list(_d.glob("_stseg*.pyd")):
        sys.path.insert(0, str(_d))
        break

sys.path.insert(0, str(_repo / "python"))
