import os
import sys

# Development builds leave the extension in the CMake build tree and the
# package source under python/; put both on the path.
_here = os.path.dirname(os.path.abspath(__file__))
_repo = os.path.dirname(os.path.dirname(_here))

module_dir = os.environ.get("CHNS_MODULE_DIR")
if module_dir:
    sys.path.insert(0, module_dir)
else:
    for candidate in ("build/python", "build"):
        path = os.path.join(_repo, candidate)
        if os.path.isdir(path):
            sys.path.insert(0, path)

sys.path.insert(0, os.path.join(_repo, "python"))
