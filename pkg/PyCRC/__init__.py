# -*- coding: utf-8 -*-
"""CRC helpers vendored from PyCRC, reduced to the CRC-32 used for configuration hashes."""

from PyCRC.CRC32 import CRC32

__all__ = ['CRC32']
