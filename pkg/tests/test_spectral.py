import numpy as np
import pytest

from oracles import dct2_direct
from spectradec.errors import (
    CorruptDataError,
    CutoffRangeError,
    DimensionMismatchError,
    LengthMismatchError,
    PartitionMismatchError,
)
from spectradec.imgio import FEATURE, LUMA, PlanarImage
from spectradec.spectral import (
    BandMask,
    Spectrum,
    apply_zigzag,
    dc_reconstruct,
    dct2,
    dct2_tiled,
    exchange_band,
    high_mask,
    idct2,
    invert_zigzag,
    low_mask,
    read_spectrum,
    window_partition,
    window_reverse,
    write_spectrum,
    zero_mask,
    zigzag_order,
)

# Hand-derived zigzag of a 3x3 grid.
ZIGZAG_3X3 = [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (1, 2), (2, 1), (2, 2)]


class TestDct:
    def test_1x1_is_identity(self):
        img = PlanarImage(np.full((1, 1, 1), 0.7), LUMA)
        assert dct2(img).coeffs[0, 0, 0] == pytest.approx(0.7, abs=1e-15)

    def test_2x2_constant_dc_scale(self):
        img = PlanarImage(np.full((1, 2, 2), 0.3), LUMA)
        spec = dct2(img).coeffs[0]
        assert spec[0, 0] == pytest.approx(0.6, abs=1e-14)
        assert np.abs(spec).sum() == pytest.approx(0.6, abs=1e-14)

    @pytest.mark.parametrize("shape", [(16, 16), (8, 12), (5, 3)])
    def test_matches_direct_sum(self, rng, shape):
        plane = rng.random(shape)
        expect = dct2_direct(plane)
        img = PlanarImage(plane[None], LUMA)
        for method in ("matrix", "fft"):
            got = dct2(img, method=method).coeffs[0]
            assert np.abs(got - expect).max() < 1e-5

    def test_methods_agree_on_large_plane(self, rng):
        plane = rng.random((96, 80))
        img = PlanarImage(plane[None], LUMA)
        a = dct2(img, method="matrix").coeffs
        b = dct2(img, method="fft").coeffs
        assert np.abs(a - b).max() < 1e-10

    def test_zero_spectrum_reconstructs_zero(self):
        img = idct2(Spectrum(np.zeros((1, 6, 6))))
        assert np.array_equal(img.data, np.zeros((1, 6, 6)))

    def test_dc_only_2x2(self):
        spec = np.zeros((1, 2, 2))
        spec[0, 0, 0] = 0.6
        assert np.allclose(idct2(Spectrum(spec)).data, 0.3, atol=1e-14)

    @pytest.mark.parametrize("shape", [(512, 512), (37, 61), (1, 9), (64, 1)])
    def test_roundtrip(self, rng, shape):
        img = PlanarImage(rng.random((1,) + shape), LUMA)
        back = idct2(dct2(img))
        assert np.abs(back.data - img.data).max() < 1e-4
        assert back.colorspace == img.colorspace

    def test_parseval(self, rng):
        for _ in range(10):
            h, w = rng.integers(1, 80, size=2)
            x = rng.random((3, h, w))
            y = rng.random((3, h, w))
            spatial = ((x - y) ** 2).sum()
            a = dct2(PlanarImage(x, FEATURE)).coeffs
            b = dct2(PlanarImage(y, FEATURE)).coeffs
            spectral = ((a - b) ** 2).sum()
            assert abs(spatial - spectral) / spatial < 1e-6

    def test_tiled_differs_from_global(self, rng):
        img = PlanarImage(rng.random((1, 32, 32)), LUMA)
        tiled = dct2_tiled(img, tile=8).coeffs
        whole = dct2(img).coeffs
        assert not np.allclose(tiled, whole)
        # but each tile's DC matches the tile mean
        assert tiled[0, 0, 0] == pytest.approx(img.data[0, :8, :8].mean() * 8, rel=1e-12)


class TestDcReconstruct:
    def test_constant(self):
        img = PlanarImage(np.full((1, 5, 4), 0.42), LUMA)
        assert np.allclose(dc_reconstruct(dct2(img)).data, 0.42, atol=1e-13)

    def test_equals_channel_mean(self, make_image):
        img = make_image(12, 18, channels=3)
        rec = dc_reconstruct(dct2(img))
        means = img.data.mean(axis=(1, 2))
        for c in range(3):
            assert np.allclose(rec.data[c], means[c], atol=1e-12)

    def test_zero(self):
        img = PlanarImage(np.zeros((1, 4, 4)), LUMA)
        assert np.allclose(dc_reconstruct(dct2(img)).data, 0.0, atol=1e-15)


class TestBandMasks:
    @pytest.mark.parametrize("h,w,k", [(8, 8, 0), (8, 8, 3), (8, 8, 7),
                                       (4, 16, 8), (16, 4, 2), (1, 1, 0)])
    def test_coverage(self, h, w, k):
        union = (zero_mask(h, w).to_mask() | low_mask(k, h, w).to_mask()
                 | high_mask(k, h, w).to_mask())
        assert union.all()

    def test_low_excludes_dc(self):
        m = low_mask(2, 8, 8).to_mask()
        assert not m[0, 0]
        assert m[0, 1] and m[2, 2]
        assert not m[3, 0]

    def test_boundary_overlap_preserved(self):
        # indices with i == k or j == k inside the box sit in both bands
        k = 3
        low = low_mask(k, 8, 8).to_mask()
        high = high_mask(k, 8, 8).to_mask()
        assert low[3, 1] and high[3, 1]
        assert low[2, 3] and high[2, 3]

    def test_zero_is_only_dc(self):
        m = zero_mask(5, 6).to_mask()
        assert m[0, 0] and m.sum() == 1

    def test_cutoff_out_of_range(self):
        with pytest.raises(CutoffRangeError):
            low_mask(8, 8, 8)
        with pytest.raises(CutoffRangeError):
            BandMask("high", -1, 8, 8)

    def test_rectangular_clamp(self):
        # k exceeds the row range but is valid for columns
        m = low_mask(8, 4, 16).to_mask()
        assert m[3, 8] and not m[3, 9]


class TestExchangeBand:
    def test_full_swap(self, rng):
        a = Spectrum(rng.random((2, 6, 6)))
        b = Spectrum(rng.random((2, 6, 6)))
        mask = high_mask(0, 6, 6)  # i>=0 or j>=0 covers every index
        sa, sb = exchange_band(a, b, mask)
        assert np.array_equal(sa.coeffs, b.coeffs)
        assert np.array_equal(sb.coeffs, a.coeffs)

    def test_involution(self, rng):
        a = Spectrum(rng.random((1, 8, 8)))
        b = Spectrum(rng.random((1, 8, 8)))
        for mask in (zero_mask(8, 8), low_mask(3, 8, 8), high_mask(5, 8, 8)):
            x, y = exchange_band(a, b, mask)
            x2, y2 = exchange_band(x, y, mask)
            assert np.array_equal(x2.coeffs, a.coeffs)
            assert np.array_equal(y2.coeffs, b.coeffs)

    def test_zero_mask_moves_only_dc(self, rng):
        a = Spectrum(rng.random((1, 4, 4)))
        b = Spectrum(rng.random((1, 4, 4)))
        sa, sb = exchange_band(a, b, zero_mask(4, 4))
        assert sa.coeffs[0, 0, 0] == b.coeffs[0, 0, 0]
        assert sb.coeffs[0, 0, 0] == a.coeffs[0, 0, 0]
        assert np.array_equal(sa.coeffs[0, 1:], a.coeffs[0, 1:])
        assert np.array_equal(sa.coeffs[0, 0, 1:], a.coeffs[0, 0, 1:])

    def test_conserves_per_index_sum(self, rng):
        a = Spectrum(rng.random((1, 8, 8)))
        b = Spectrum(rng.random((1, 8, 8)))
        sa, sb = exchange_band(a, b, low_mask(4, 8, 8))
        assert np.array_equal(sa.coeffs + sb.coeffs, a.coeffs + b.coeffs)

    def test_dimension_mismatch(self, rng):
        a = Spectrum(rng.random((1, 8, 8)))
        b = Spectrum(rng.random((1, 8, 9)))
        with pytest.raises(DimensionMismatchError):
            exchange_band(a, b, zero_mask(8, 8))


class TestZigzag:
    def test_2x2_order(self):
        assert zigzag_order(2, 2).pairs().tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]

    def test_3x3_matches_hand_derivation(self):
        assert [tuple(p) for p in zigzag_order(3, 3).pairs()] == ZIGZAG_3X3

    @pytest.mark.parametrize("h,w", [(1, 1), (1, 7), (5, 1), (4, 6), (7, 3), (8, 8)])
    def test_bijection_and_monotone_diagonals(self, h, w):
        order = zigzag_order(h, w)
        pairs = order.pairs()
        assert sorted(map(tuple, pairs)) == [(i, j) for i in range(h) for j in range(w)]
        sums = pairs.sum(axis=1)
        assert np.all(np.diff(sums) >= 0)
        assert tuple(pairs[0]) == (0, 0)
        assert tuple(pairs[-1]) == (h - 1, w - 1)

    def test_apply_invert_roundtrip(self, rng):
        spec = Spectrum(rng.random((3, 8, 8)))
        order = zigzag_order(8, 8)
        seq = apply_zigzag(spec, order)
        back = invert_zigzag(seq, order)
        assert np.array_equal(back.coeffs, spec.coeffs)

    def test_sequence_starts_at_dc(self, rng):
        spec = Spectrum(rng.random((1, 5, 9)))
        seq = apply_zigzag(spec, zigzag_order(5, 9))
        assert seq[0, 0] == spec.coeffs[0, 0, 0]
        assert seq[0, -1] == spec.coeffs[0, 4, 8]

    def test_length_mismatch(self, rng):
        order = zigzag_order(4, 4)
        with pytest.raises(LengthMismatchError):
            invert_zigzag(rng.random((1, 15)), order)
        with pytest.raises(LengthMismatchError):
            apply_zigzag(Spectrum(rng.random((1, 4, 5))), order)


class TestWindowPartition:
    def test_exact_fit(self):
        windows, part = window_partition(np.arange(6.0), 3)
        assert windows.shape == (2, 3)
        assert part == type(part)(3, 2, 0)

    def test_padding(self):
        windows, part = window_partition(np.arange(1.0, 6.0), 3)
        assert (part.count, part.pad) == (2, 1)
        assert windows[1, 2] == 0.0

    def test_roundtrip_many_lengths(self, rng):
        for length in list(range(1, 40)) + [997]:
            seq = rng.random(length)
            wl = int(rng.integers(1, 12))
            windows, part = window_partition(seq, wl)
            assert np.array_equal(window_reverse(windows, part), seq)

    def test_channel_axis_preserved(self, rng):
        seq = rng.random((3, 10))
        windows, part = window_partition(seq, 4)
        assert windows.shape == (3, 3, 4)
        assert np.array_equal(window_reverse(windows, part), seq)

    def test_metadata_mismatch(self, rng):
        windows, part = window_partition(rng.random(10), 4)
        with pytest.raises(PartitionMismatchError):
            window_reverse(windows[:, :2], part)


class TestSpectrumFile:
    def test_roundtrip_and_header(self, tmp_path, rng):
        spec = Spectrum(rng.standard_normal((3, 5, 7)))
        path = tmp_path / "dump.spec"
        write_spectrum(spec, path)
        raw = path.read_bytes()
        assert raw[:4] == b"SPEC"
        assert len(raw) == 16 + 4 * 3 * 5 * 7
        back = read_spectrum(path)
        assert (back.height, back.width, back.channels) == (5, 7, 3)
        assert np.array_equal(back.coeffs, spec.coeffs.astype("<f4").astype(np.float64))

    def test_corrupt_header(self, tmp_path):
        (tmp_path / "bad.spec").write_bytes(b"NOPE" + b"\x00" * 12)
        with pytest.raises(CorruptDataError):
            read_spectrum(tmp_path / "bad.spec")

    def test_truncated_payload(self, tmp_path, rng):
        spec = Spectrum(rng.random((1, 4, 4)))
        path = tmp_path / "trunc.spec"
        write_spectrum(spec, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CorruptDataError):
            read_spectrum(path)
