"""curiobot: curiosity-driven co-development of action and language, desk scale.

The compiled core links against libtorch, so torch must be imported first to
bring the shared libraries into the process.
"""

import importlib.util as _importlib_util
import os as _os
import sys as _sys

import torch as _torch  # noqa: F401  (loads libtorch for the extension)

try:
    from ._core import *  # noqa: F401,F403
    from ._core import __version__  # noqa: F401
except ImportError:  # development layout: extension lives in the build tree
    _core_dir = _os.environ.get("CURIO_CORE_DIR")
    if not _core_dir:
        raise
    for _name in sorted(_os.listdir(_core_dir)):
        if _name.startswith("_core") and _name.endswith(".so"):
            _spec = _importlib_util.spec_from_file_location(
                __name__ + "._core", _os.path.join(_core_dir, _name)
            )
            _mod = _importlib_util.module_from_spec(_spec)
            _spec.loader.exec_module(_mod)
            _sys.modules[__name__ + "._core"] = _mod
            for _k, _v in vars(_mod).items():
                if not _k.startswith("_") or _k == "__version__":
                    globals()[_k] = _v
            break
    else:
        raise
