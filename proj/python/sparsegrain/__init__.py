"""Granularity-aware pruning, sparse encoding, and dataflow simulation.

Everything lives in the compiled extension; this package re-exports it. The
fallback import covers CMake builds, where the extension sits directly on
sys.path instead of inside the package.
"""

try:
    from . import _core
except ImportError:  # pragma: no cover - cmake build layout
    import _core  # type: ignore[no-redef]

globals().update(
    {name: getattr(_core, name) for name in dir(_core) if not name.startswith("_")}
)
__all__ = sorted(name for name in dir(_core) if not name.startswith("_"))
__version__ = "0.1.0"
