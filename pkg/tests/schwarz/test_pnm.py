# pylint: disable=missing-docstring

import numpy as np

from inpaint.schwarz.core import (ImageBuffer, InpaintingError, InpaintingMask,
                                  InvalidInput, PnmFormatError)
from inpaint.schwarz.pnm import (quantise, read_mask_pbm, read_pnm,
                                 write_mask_pbm, write_pnm)

import tests.schwarz.util as util


class TestPnm(util.TestWithTempDirectory):
    def write_raw(self, name: str, data: bytes):
        path = self.output_path(name)
        with open(path, 'wb') as output_file:
            output_file.write(data)
        return path

    def read_raw(self, path) -> bytes:
        with open(path, 'rb') as input_file:
            return input_file.read()

    def test_write_pgm(self):
        path = self.output_path('grey.pgm')
        write_pnm(ImageBuffer([[0.0, 1.0]]), path)
        self.assertEqual(self.read_raw(path), b'P5\n2 1\n255\n\x00\xff')

    def test_write_ppm(self):
        path = self.output_path('colour.ppm')
        image = ImageBuffer(np.array([1.0, 0.0, 0.5]).reshape(3, 1, 1))
        write_pnm(image, path)
        self.assertEqual(self.read_raw(path), b'P6\n1 1\n255\n\xff\x00\x80')

    def test_read_ppm(self):
        path = self.write_raw('in.ppm', b'P6\n2 1\n255\n\x00\x33\xff'
                                        b'\x80\x00\x01')
        image = read_pnm(path)
        self.assertEqual((image.channels, image.width, image.height),
                         (3, 2, 1))
        np.testing.assert_array_equal(image.data[:, 0, 0],
                                      [0.0, 0x33 / 255, 1.0])
        np.testing.assert_array_equal(image.data[:, 0, 1],
                                      [0x80 / 255, 0.0, 1 / 255])

    def test_byte_round_trip(self):
        rng = np.random.default_rng(2)
        for i in range(100):
            width, height = (int(v) for v in rng.integers(1, 20, size=2))
            magic, channels = (b'P5', 1) if i % 2 else (b'P6', 3)
            data = (magic + f"\n{width} {height}\n255\n".encode('ascii') +
                    rng.integers(0, 256, size=width * height * channels,
                                 dtype=np.uint8).tobytes())
            source = self.write_raw(f"in{i}.pnm", data)
            target = self.output_path(f"out{i}.pnm")
            write_pnm(read_pnm(source), target)
            self.assertEqual(self.read_raw(target), data)

    def test_quantise(self):
        image = ImageBuffer([[0.5, 1.2, -0.1, 0.998]])
        np.testing.assert_array_equal(quantise(image)[0], [[128, 255, 0, 254]])

    def test_comments(self):
        path = self.write_raw('comments.pgm',
                              b'P5\n# drawn by hand\n2 1\n# 8 bit\n255\n'
                              b'\x10\x20')
        np.testing.assert_array_equal(read_pnm(path).data[0, 0],
                                      [16 / 255, 32 / 255])

    def test_unsupported_maxval(self):
        path = self.write_raw('deep.pgm', b'P5\n1 1\n65535\n\x00\x00')
        with self.assertRaises(PnmFormatError):
            read_pnm(path)

    def test_truncated_payload(self):
        path = self.write_raw('short.pgm', b'P5\n2 2\n255\n\x00\x01\x02')
        with self.assertRaisesRegex(PnmFormatError, 'byte 14'):
            read_pnm(path)

    def test_truncated_header(self):
        path = self.write_raw('header.pgm', b'P5\n2 2\n')
        with self.assertRaisesRegex(PnmFormatError, 'byte 7'):
            read_pnm(path)

    def test_bad_magic(self):
        path = self.write_raw('ascii.ppm', b'P3\n1 1\n255\n0 0 0\n')
        with self.assertRaisesRegex(PnmFormatError, 'byte 0'):
            read_pnm(path)

    def test_missing_file(self):
        with self.assertRaises(InpaintingError):
            read_pnm(self.output_path('missing.ppm'))

    def test_unwritable(self):
        with self.assertRaises(InpaintingError):
            write_pnm(ImageBuffer([[0.0]]),
                      self.output_path('no/such/dir/out.pgm'))


class TestPbm(util.TestWithTempDirectory):
    def test_all_known(self):
        path = self.output_path('full.pbm')
        write_mask_pbm(InpaintingMask(np.ones((2, 3), dtype=bool)), path)
        with open(path, 'rb') as input_file:
            self.assertEqual(input_file.read(), b'P4\n3 2\n\xe0\xe0')

    def test_row_padding(self):
        known = np.zeros((2, 9), dtype=bool)
        known[0, 0] = known[1, 8] = True
        path = self.output_path('wide.pbm')
        write_mask_pbm(InpaintingMask(known), path)
        with open(path, 'rb') as input_file:
            self.assertEqual(input_file.read(),
                             b'P4\n9 2\n\x80\x00\x00\x80')

    def test_round_trip(self):
        mask = util.random_problem(37, 11, 0.2, seed=3)[1]
        path = self.output_path('mask.pbm')
        write_mask_pbm(mask, path)
        np.testing.assert_array_equal(read_mask_pbm(path).known, mask.known)

    def test_byte_round_trip(self):
        rng = np.random.default_rng(4)
        for i in range(100):
            width, height = (int(v) for v in rng.integers(1, 40, size=2))
            known = rng.uniform(size=(height, width)) < rng.uniform(0.05, 0.9)
            known[0, 0] = True
            # packbits leaves the padding bits of every row zero
            data = (f"P4\n{width} {height}\n".encode('ascii') +
                    np.packbits(known, axis=1).tobytes())
            source = self.output_path(f"in{i}.pbm")
            with open(source, 'wb') as output_file:
                output_file.write(data)
            target = self.output_path(f"out{i}.pbm")
            write_mask_pbm(read_mask_pbm(source), target)
            with open(target, 'rb') as input_file:
                self.assertEqual(input_file.read(), data, (width, height))

    def test_size_mismatch(self):
        path = self.output_path('mask.pbm')
        write_mask_pbm(InpaintingMask(np.ones((4, 4), dtype=bool)), path)
        with self.assertRaises(InvalidInput):
            read_mask_pbm(path, expected=util.random_image(5, 4))

    def test_empty_mask(self):
        path = self.output_path('empty.pbm')
        with open(path, 'wb') as output_file:
            output_file.write(b'P4\n8 1\n\x00')
        with self.assertRaises(InvalidInput):
            read_mask_pbm(path)

    def test_not_a_pbm(self):
        path = self.output_path('image.pgm')
        write_pnm(ImageBuffer([[0.5]]), path)
        with self.assertRaises(PnmFormatError):
            read_mask_pbm(path)
