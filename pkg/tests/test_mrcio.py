import struct

import numpy as np
import pytest

from empm.mrcio import HEADER_SIZE, read_mrc, write_mrc


class TestRoundTrip:
    def test_float32_lossless(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.standard_normal((5, 7, 9)).astype(np.float32)
        p = tmp_path / "v.mrc"
        write_mrc(p, data)
        back, voxel = read_mrc(p)
        assert np.array_equal(back, data)
        assert voxel == 1.0

    def test_voxel_size_recorded(self, tmp_path):
        p = tmp_path / "v.mrc"
        write_mrc(p, np.zeros((4, 4, 4), np.float32), voxel_size=1.5)
        _, voxel = read_mrc(p)
        assert voxel == pytest.approx(1.5)

    def test_2d_promoted_to_one_section(self, tmp_path):
        p = tmp_path / "s.mrc"
        write_mrc(p, np.ones((6, 6), np.float32))
        back, _ = read_mrc(p)
        assert back.shape == (1, 6, 6)


class TestHeader:
    def header(self, tmp_path, data, **kw):
        p = tmp_path / "h.mrc"
        write_mrc(p, data, **kw)
        return p.read_bytes()[:HEADER_SIZE]

    def test_dims_mode_tag_stamp(self, tmp_path):
        hdr = self.header(tmp_path, np.zeros((8, 32, 32), np.float32),
                          is_stack=True)
        nx, ny, nz, mode = struct.unpack_from("<4i", hdr, 0)
        assert (nx, ny, nz, mode) == (32, 32, 8, 2)
        assert hdr[208:212] == b"MAP "
        assert hdr[212:216] == b"\x44\x44\x00\x00"

    def test_spacegroup_volume_vs_stack(self, tmp_path):
        vol = self.header(tmp_path, np.zeros((4, 4, 4), np.float32))
        stk = self.header(tmp_path, np.zeros((4, 4, 4), np.float32),
                          is_stack=True)
        assert struct.unpack_from("<i", vol, 88)[0] == 1
        assert struct.unpack_from("<i", stk, 88)[0] == 0

    def test_statistics(self, tmp_path):
        data = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
        hdr = self.header(tmp_path, data)
        dmin, dmax, dmean = struct.unpack_from("<3f", hdr, 76)
        assert (dmin, dmax) == (0.0, 7.0)
        assert dmean == pytest.approx(3.5)


class TestErrors:
    def test_truncated_header(self, tmp_path):
        p = tmp_path / "bad.mrc"
        p.write_bytes(b"\x00" * 100)
        with pytest.raises(ValueError, match="truncated"):
            read_mrc(p)

    def test_missing_tag(self, tmp_path):
        p = tmp_path / "bad.mrc"
        p.write_bytes(b"\x00" * HEADER_SIZE)
        with pytest.raises(ValueError, match="MAP"):
            read_mrc(p)

    def test_wrong_mode(self, tmp_path):
        p = tmp_path / "bad.mrc"
        write_mrc(p, np.zeros((2, 2, 2), np.float32))
        raw = bytearray(p.read_bytes())
        struct.pack_into("<i", raw, 12, 1)   # int16 mode
        p.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="mode"):
            read_mrc(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "bad.mrc"
        write_mrc(p, np.zeros((4, 4, 4), np.float32))
        p.write_bytes(p.read_bytes()[:-16])
        with pytest.raises(ValueError, match="payload"):
            read_mrc(p)

    def test_4d_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_mrc(tmp_path / "x.mrc", np.zeros((2, 2, 2, 2), np.float32))
