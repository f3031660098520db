import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semlink.channel import H_FLOOR
from semlink.link_budget import LinkBudget
from semlink.qam import (
    BITS_PER_SYMBOL,
    CONSTELLATION,
    RAW8_BITS,
    BitStream,
    SymbolBlock,
    baseline_transmit,
    jpeg_decode,
    qam16_demodulate,
    qam16_modulate,
    raw8_decode,
    received_to_dataset,
    source_encode,
    symbol_error_rate_awgn,
)

# 16-QAM closed-form SER at the two frozen checkpoints (1.5 Q(sqrt(g/5)) per
# axis), pinned against a 40-digit mpmath evaluation
SER_15DB = 0.01778184224180583
SER_18DB = 0.0005726413192270235

# transmit power that makes channel noise negligible for chain round trips
CLEAN_POWER_DBM = 150.0


def random_bits(n, seed):
    return np.random.default_rng(seed).integers(0, 2, size=n).astype(np.uint8)


class TestConstellation:
    def test_sixteen_distinct_unit_energy_points(self):
        assert len(CONSTELLATION) == 16
        assert len(set(np.round(CONSTELLATION, 12))) == 16
        assert np.mean(np.abs(CONSTELLATION) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_levels_on_scaled_grid(self):
        scaled = CONSTELLATION * np.sqrt(10.0)
        for part in (scaled.real, scaled.imag):
            assert set(np.round(part).astype(int)) == {-3, -1, 1, 3}

    def test_nibble_zero_is_lower_left(self):
        assert CONSTELLATION[0] == pytest.approx((-3 - 3j) / np.sqrt(10.0), abs=1e-12)

    def test_gray_property_exhaustive(self):
        # horizontally or vertically adjacent points differ in exactly one bit
        step = 2.0 / np.sqrt(10.0)
        violations = 0
        for a in range(16):
            for b in range(a + 1, 16):
                gap = CONSTELLATION[a] - CONSTELLATION[b]
                adjacent = (
                    abs(gap.real) < 1e-9 and abs(abs(gap.imag) - step) < 1e-9
                ) or (abs(gap.imag) < 1e-9 and abs(abs(gap.real) - step) < 1e-9)
                if adjacent and bin(a ^ b).count("1") != 1:
                    violations += 1
        assert violations == 0


class TestBitStream:
    def test_raw8_length_enforced(self):
        BitStream(np.zeros(RAW8_BITS, dtype=np.uint8), "raw8")
        with pytest.raises(ValueError, match="raw8"):
            BitStream(np.zeros(100, dtype=np.uint8), "raw8")

    def test_jpeg_byte_alignment_enforced(self):
        BitStream(np.zeros(64, dtype=np.uint8), "jpeg")
        with pytest.raises(ValueError, match="byte-aligned"):
            BitStream(np.zeros(63, dtype=np.uint8), "jpeg")

    def test_content_and_origin_validated(self):
        with pytest.raises(ValueError, match="0 and 1"):
            BitStream(np.full(RAW8_BITS, 2, dtype=np.uint8), "raw8")
        with pytest.raises(ValueError, match="origin"):
            BitStream(np.zeros(8, dtype=np.uint8), "morse")
        with pytest.raises(ValueError, match="1-D"):
            BitStream(np.zeros((8, 8), dtype=np.uint8), "jpeg")


class TestModem:
    def test_round_trip_whole_nibbles(self):
        bits = random_bits(4000, seed=1)
        block = qam16_modulate(BitStream(np.concatenate([bits, np.zeros(RAW8_BITS - 4000, dtype=np.uint8)]), "raw8"))
        assert block.pad_bits == 0
        np.testing.assert_array_equal(qam16_demodulate(block)[:4000], bits)

    def test_padding_recorded_and_stripped(self):
        # the modulator itself accepts any bit count and pads to whole nibbles
        from types import SimpleNamespace

        bits = np.array([1, 0, 1, 1, 1, 0], dtype=np.uint8)
        block = qam16_modulate(SimpleNamespace(bits=bits))
        assert block.pad_bits == 2
        assert block.symbols.size == 2
        np.testing.assert_array_equal(qam16_demodulate(block), bits)

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_noiseless_round_trip_random_streams(self, seed):
        n_bytes = np.random.default_rng(seed).integers(1, 40)
        bits = random_bits(int(n_bytes) * 8, seed)
        block = qam16_modulate(BitStream(bits, "jpeg"))
        np.testing.assert_array_equal(qam16_demodulate(block), bits)

    def test_tie_breaks_to_lowest_nibble(self):
        # the origin is equidistant from every point; nibble 5 = 0101 wins
        got = qam16_demodulate(SymbolBlock(np.array([0.0 + 0.0j])))
        np.testing.assert_array_equal(got, [0, 1, 0, 1])
        # midpoint between nibbles 5 (-1,-1) and 7 (-1,+1) also picks 5
        midpoint = (CONSTELLATION[5] + CONSTELLATION[7]) / 2.0
        got = qam16_demodulate(SymbolBlock(np.array([midpoint])))
        np.testing.assert_array_equal(got, [0, 1, 0, 1])

    def test_demodulate_quantizes_to_nearest(self):
        noisy = CONSTELLATION + (0.05 - 0.07j)
        nibbles = qam16_demodulate(SymbolBlock(noisy))
        expected = np.zeros(64, dtype=np.uint8)
        for i in range(16):
            expected[4 * i : 4 * i + 4] = [(i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1]
        np.testing.assert_array_equal(nibbles, expected)


class TestSourceCoding:
    def test_raw8_bit_budget(self, small_corpus):
        stream = source_encode(small_corpus.items[0], "raw8")
        assert stream.bits.size == RAW8_BITS == 9248

    def test_raw8_round_trip_within_quantization(self, small_corpus):
        img = small_corpus.items[3]
        back = raw8_decode(source_encode(img, "raw8").bits)
        np.testing.assert_allclose(back, img.pixels, atol=0.5 / 255.0 + 1e-12)

    def test_jpeg_round_trip_is_lossy_but_close(self, small_corpus):
        img = small_corpus.items[5]
        stream = source_encode(img, "jpeg")
        assert stream.bits.size % 8 == 0
        back = jpeg_decode(stream.bits)
        assert back is not None
        assert np.mean(np.abs(back - img.pixels)) < 0.05

    def test_jpeg_smaller_than_raw(self, small_corpus):
        stream = source_encode(small_corpus.items[0], "jpeg")
        assert stream.bits.size < RAW8_BITS

    def test_corrupt_jpeg_returns_none(self):
        assert jpeg_decode(random_bits(256, seed=0)) is None

    def test_bad_inputs(self, small_corpus):
        with pytest.raises(ValueError, match="mode"):
            source_encode(small_corpus.items[0], "png")
        with pytest.raises(ValueError):
            source_encode(np.zeros((32, 32)), "raw8")
        with pytest.raises(ValueError):
            raw8_decode(np.zeros(100, dtype=np.uint8))


class TestSymbolErrorRate:
    def test_closed_form_frozen_values(self):
        assert symbol_error_rate_awgn(15.0) == pytest.approx(SER_15DB, rel=1e-12)
        assert symbol_error_rate_awgn(18.0) == pytest.approx(SER_18DB, rel=1e-12)

    def test_monotone_decreasing(self):
        snrs = np.arange(0.0, 25.0, 3.0)
        sers = [symbol_error_rate_awgn(s) for s in snrs]
        assert all(a > b for a, b in zip(sers, sers[1:]))
        assert 0.0 < sers[-1] < sers[0] < 1.0
        # past ~26 dB the per-axis error drops under double resolution
        assert symbol_error_rate_awgn(40.0) == 0.0

    @pytest.mark.parametrize("snr_db,expected", [(15.0, SER_15DB), (18.0, SER_18DB)])
    def test_monte_carlo_matches_closed_form(self, snr_db, expected):
        rng = np.random.default_rng(2024)
        n = 1_000_000
        tx = CONSTELLATION[rng.integers(0, 16, size=n)]
        sigma = np.sqrt(10 ** (-snr_db / 10.0) / 2.0)
        noisy = tx + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        wrong = 0
        for start in range(0, n, 100_000):
            block = noisy[start : start + 100_000]
            d2 = np.abs(block[:, None] - CONSTELLATION[None, :]) ** 2
            wrong += int(np.sum(CONSTELLATION[d2.argmin(axis=1)] != tx[start : start + 100_000]))
        assert wrong / n == pytest.approx(expected, rel=0.2)


class TestBaselineTransmit:
    def test_clean_raw8_chain_is_quantization_exact(self, small_corpus):
        img = small_corpus.items[7]
        link = LinkBudget().with_tx_power(CLEAN_POWER_DBM)
        rec = baseline_transmit(img, link, "raw8", np.random.default_rng(0))
        assert not rec.fade_erased and not rec.decode_failed
        assert rec.label == img.label
        assert rec.payload_bits == RAW8_BITS
        np.testing.assert_allclose(rec.pixels, img.pixels, atol=0.5 / 255.0 + 1e-12)

    def test_clean_jpeg_chain_decodes(self, small_corpus):
        img = small_corpus.items[2]
        link = LinkBudget().with_tx_power(CLEAN_POWER_DBM)
        rec = baseline_transmit(img, link, "jpeg", np.random.default_rng(1))
        assert not rec.decode_failed
        assert rec.payload_bits % 8 == 0
        assert np.mean(np.abs(rec.pixels - img.pixels)) < 0.05

    def test_noisy_jpeg_fails_closed(self, small_corpus):
        img = small_corpus.items[2]
        link = LinkBudget().with_tx_power(1.0)
        failures = 0
        for seed in range(6):
            rec = baseline_transmit(img, link, "jpeg", np.random.default_rng(seed))
            if rec.decode_failed:
                failures += 1
                np.testing.assert_array_equal(rec.pixels, 0.0)
        assert failures >= 5  # at -4 dB SNR virtually every jpeg stream dies

    def test_deep_fade_flagged(self, small_corpus, monkeypatch):
        from semlink import qam as qam_module

        monkeypatch.setattr(
            qam_module.ch, "sample_fading", lambda rng, kind: H_FLOOR / 3.0 + 0.0j
        )
        rec = baseline_transmit(
            small_corpus.items[0], LinkBudget(), "raw8", np.random.default_rng(0)
        )
        assert rec.fade_erased
        assert rec.pixels.shape == (34, 34)

    def test_pixel_error_shrinks_with_power(self, small_corpus):
        img = small_corpus.items[9]
        errs = []
        for p_t in (1.0, 15.0, 30.0):
            rng = np.random.default_rng(42)
            link = LinkBudget().with_tx_power(p_t)
            rec = baseline_transmit(img, link, "raw8", rng)
            errs.append(float(np.mean(np.abs(rec.pixels - img.pixels))))
        assert errs[0] > errs[1] > errs[2]

    def test_received_to_dataset_preserves_labels(self, small_corpus):
        link = LinkBudget().with_tx_power(CLEAN_POWER_DBM)
        rng = np.random.default_rng(3)
        received = [
            baseline_transmit(item, link, "raw8", rng)
            for item in small_corpus.items[:10]
        ]
        ds = received_to_dataset(received)
        assert len(ds) == 10
        np.testing.assert_array_equal(
            ds.labels(), [it.label for it in small_corpus.items[:10]]
        )
        assert ds.split_tag == "received"
