"""DNP3 link-layer CRC with backend selection.

The compiled kernel (``_crc_core``) is used when it was built; otherwise the
pure-Python implementation is used.  Set ``SCADASIM_PURE_PYTHON=1`` to force
the fallback.
"""
import os

from . import _crc_fallback

if os.environ.get("SCADASIM_PURE_PYTHON"):
    _impl = _crc_fallback
    BACKEND = "python"
else:
    try:
        from . import _crc_core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _crc_fallback
        BACKEND = "python"

crc_dnp = _impl.crc_dnp
add_block_crcs = _impl.add_block_crcs
strip_block_crcs = _impl.strip_block_crcs

__all__ = ["BACKEND", "crc_dnp", "add_block_crcs", "strip_block_crcs"]
