import os
import sys

# The build drives these tests before the package is installed: point the
# import machinery at the freshly built extension and the in-tree package.
for var in ("UAT_MODULE_DIR", "UAT_PKG_DIR"):
    path = os.environ.get(var)
    if path and path not in sys.path:
        sys.path.insert(0, path)
