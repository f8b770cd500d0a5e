# -*- coding: utf8 -*-

#
# CRC32 MODULE
#
# Table driven CRC-32 (reflected, polynomial 0xEDB88320). Used to fingerprint the
# effective scenario configuration of every result row.
#

from typing import Union


class CRC32:
    crc32_tab = []

    # reflected form of the CRC-32 polynomial 0x04C11DB7
    crc32_constant = 0xEDB88320

    def __init__(self):
        if not self.crc32_tab:
            self.init_crc32()

    def calculate(self, input_data: Union[str, bytes, bytearray]) -> int:
        if isinstance(input_data, str):
            input_data = input_data.encode('utf-8')
        elif not isinstance(input_data, (bytes, bytearray)):
            raise TypeError('CRC32 takes str or bytes, got {}'.format(type(input_data).__name__))

        crc_value = 0xFFFFFFFF
        for byte in input_data:
            crc_value = (crc_value >> 8) ^ self.crc32_tab[(crc_value ^ byte) & 0xFF]

        # final one's complement
        return crc_value ^ 0xFFFFFFFF

    def hexdigest(self, input_data: Union[str, bytes, bytearray]) -> str:
        return '{:08x}'.format(self.calculate(input_data))

    @classmethod
    def init_crc32(cls):
        """The algorithm uses a table of precalculated values, one per byte"""
        for i in range(256):
            crc = i
            for _ in range(8):
                if crc & 1:
                    crc = (crc >> 1) ^ cls.crc32_constant
                else:
                    crc >>= 1
            cls.crc32_tab.append(crc)
