import unittest

from PyCRC.CRC32 import CRC32


class TestCRC32(unittest.TestCase):

    def setUp(self):
        self.crc = CRC32()

    def test_check_value(self):
        self.assertEqual(self.crc.calculate('123456789'), 0xCBF43926)
        self.assertEqual(self.crc.hexdigest('123456789'), 'cbf43926')

    def test_bytes(self):
        self.assertEqual(self.crc.calculate(b'123456789'), self.crc.calculate(bytearray(b'123456789')))

    def test_empty(self):
        self.assertEqual(self.crc.calculate(''), 0)
        self.assertEqual(self.crc.hexdigest(b''), '00000000')

    def test_table_built_once(self):
        CRC32()
        self.assertEqual(len(CRC32.crc32_tab), 256)

    def test_rejects_int(self):
        with self.assertRaises(TypeError):
            self.crc.calculate(42)


if __name__ == '__main__':
    unittest.main()
