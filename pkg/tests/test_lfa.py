import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lingagg.lfa import (
    HEADER_SIZE,
    BadMagicError,
    LayeredDataset,
    NonFiniteFeaturesError,
    SplitSpec,
    TruncatedFileError,
    UnsupportedVersionError,
    ValidationError,
    dataset_hash,
    datasets_equal,
    group_by_snr,
    read_lfa,
    split,
    validate,
    write_lfa,
)


def make_dataset(n=6, l=3, d=4, k=3, snr=True, seed=0):
    rng = np.random.default_rng(seed)
    return LayeredDataset(
        features=rng.standard_normal((n, l, d)).astype(np.float32),
        labels=rng.integers(0, k, n),
        vocab=[f"c{i}" for i in range(k)],
        snr_db=rng.uniform(-10, 20, n).astype(np.float32) if snr else None,
        meta={"model": "test", "layers": [f"L{i}" for i in range(l)]},
    )


class TestRoundTrip:
    def test_round_trip_identity(self, tmp_path):
        ds = make_dataset()
        path = tmp_path / "a.lfa"
        write_lfa(ds, path)
        back = read_lfa(path)
        assert datasets_equal(ds, back)
        assert back.features.dtype == np.float32
        assert back.labels.dtype == np.uint32
        assert back.meta["model"] == "test"

    def test_round_trip_without_snr(self, tmp_path):
        ds = make_dataset(snr=False)
        path = tmp_path / "a.lfa"
        write_lfa(ds, path)
        back = read_lfa(path)
        assert back.snr_db is None
        assert datasets_equal(ds, back)

    def test_identical_inputs_identical_bytes(self, tmp_path):
        ds = make_dataset()
        p1, p2 = tmp_path / "a.lfa", tmp_path / "b.lfa"
        write_lfa(ds, p1)
        write_lfa(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_file_size_matches_layout(self, tmp_path):
        # fixed header (25 bytes) + JSON + N*L*D f32 + N u32 (+ N f32 snr)
        for snr in (False, True):
            ds = make_dataset(n=2, l=3, d=4, snr=snr)
            path = tmp_path / f"s{snr}.lfa"
            write_lfa(ds, path)
            size = path.stat().st_size
            json_len = size - HEADER_SIZE - 2 * 3 * 4 * 4 - 2 * 4 - (2 * 4 if snr else 0)
            assert json_len > 0
            # re-derive json_len from the header and check it closes the budget
            import struct
            raw = path.read_bytes()
            declared = struct.unpack("<I", raw[21:25])[0]
            assert declared == json_len

    @settings(max_examples=25, deadline=None)
    @given(
        n=st.integers(1, 8), l=st.integers(1, 4), d=st.integers(1, 5),
        k=st.integers(1, 4), snr=st.booleans(), seed=st.integers(0, 10_000),
    )
    def test_round_trip_property(self, tmp_path_factory, n, l, d, k, snr, seed):
        ds = make_dataset(n=n, l=l, d=d, k=k, snr=snr, seed=seed)
        path = tmp_path_factory.mktemp("rt") / "x.lfa"
        write_lfa(ds, path)
        assert datasets_equal(ds, read_lfa(path))


class TestErrors:
    def test_label_outside_vocab_rejected(self, tmp_path):
        ds = make_dataset()
        ds.labels[0] = 5  # vocab has 3 entries
        with pytest.raises(ValidationError):
            write_lfa(ds, tmp_path / "bad.lfa")

    def test_nan_features_rejected_on_write(self, tmp_path):
        ds = make_dataset()
        ds.features[1, 0, 0] = np.nan
        with pytest.raises(NonFiniteFeaturesError):
            write_lfa(ds, tmp_path / "bad.lfa")

    def test_bad_magic(self, tmp_path):
        ds = make_dataset()
        path = tmp_path / "a.lfa"
        write_lfa(ds, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(BadMagicError):
            read_lfa(path)

    def test_unsupported_version(self, tmp_path):
        ds = make_dataset()
        path = tmp_path / "a.lfa"
        write_lfa(ds, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedVersionError):
            read_lfa(path)

    def test_truncation_names_expected_and_actual(self, tmp_path):
        ds = make_dataset()
        path = tmp_path / "a.lfa"
        write_lfa(ds, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 40])
        with pytest.raises(TruncatedFileError, match=r"expected \d+ bytes, got \d+"):
            read_lfa(path)

    def test_nan_features_detected_on_read(self, tmp_path):
        ds = make_dataset(snr=False)
        path = tmp_path / "a.lfa"
        write_lfa(ds, path)
        raw = bytearray(path.read_bytes())
        # overwrite the first feature float with a NaN payload
        offset = len(raw) - ds.n_frames * 4 - ds.features.size * 4
        raw[offset:offset + 4] = np.float32(np.nan).tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(NonFiniteFeaturesError):
            read_lfa(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        ds = make_dataset()
        path = tmp_path / "a.lfa"
        write_lfa(ds, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ValidationError):
            read_lfa(path)


class TestSplit:
    def test_sizes(self):
        ds = make_dataset(n=10)
        train, evl = split(ds, SplitSpec(eval_fraction=0.2, seed=7))
        assert train.n_frames == 8 and evl.n_frames == 2

    def test_deterministic(self):
        ds = make_dataset(n=50)
        a = split(ds, SplitSpec(0.3, seed=9))
        b = split(ds, SplitSpec(0.3, seed=9))
        assert datasets_equal(a[0], b[0]) and datasets_equal(a[1], b[1])

    def test_partition(self):
        ds = make_dataset(n=37)
        train, evl = split(ds, SplitSpec(0.25, seed=3))
        assert train.n_frames + evl.n_frames == 37
        # frames are all distinct rows; reconstruct the union by hashing rows
        rows = {r.tobytes() for r in ds.features}
        got = {r.tobytes() for r in train.features} | {r.tobytes() for r in evl.features}
        assert rows == got

    def test_degenerate_fraction_rejected(self):
        ds = make_dataset(n=2)
        with pytest.raises(ValueError, match="degenerate"):
            split(ds, SplitSpec(0.999, seed=0))

    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            SplitSpec(0.0, seed=0)
        with pytest.raises(ValueError):
            SplitSpec(1.0, seed=0)

    def test_split_carries_tags(self):
        ds = make_dataset(n=20)
        train, evl = split(ds, SplitSpec(0.2, seed=1))
        assert train.meta["split_tag"].endswith("train")
        assert evl.meta["split_tag"].endswith("eval")


class TestGroupBySnr:
    EDGES = (-10, -5, 0, 5, 10, 15, 20)

    def test_exact_edge_values(self):
        ds = make_dataset(n=3)
        ds.snr_db = np.array([-10.0, 0.0, 20.0], dtype=np.float32)
        bins = group_by_snr(ds, self.EDGES)
        assert [label for label, _ in bins] == ["-10", "-5", "0", "5", "10", "15", "20"]
        nonempty = {label for label, idx in bins if idx.size}
        assert nonempty == {"-10", "0", "20"}

    def test_single_bin_catches_all(self):
        ds = make_dataset(n=9)
        ds.snr_db = np.full(9, 5.0, dtype=np.float32)
        bins = group_by_snr(ds, self.EDGES)
        sizes = {label: idx.size for label, idx in bins}
        assert sizes["5"] == 9
        assert sum(sizes.values()) == 9

    def test_missing_snr_is_an_error(self):
        ds = make_dataset(snr=False)
        with pytest.raises(ValueError, match="snr"):
            group_by_snr(ds, self.EDGES)

    def test_partition_property(self):
        for seed in range(5):
            ds = make_dataset(n=64, seed=seed)
            bins = group_by_snr(ds, self.EDGES)
            all_idx = np.concatenate([idx for _, idx in bins])
            assert all_idx.size == 64
            assert np.array_equal(np.sort(all_idx), np.arange(64))

    def test_below_first_edge_lands_in_first_bin(self):
        ds = make_dataset(n=2)
        ds.snr_db = np.array([-40.0, 2.5], dtype=np.float32)
        bins = dict((label, idx) for label, idx in group_by_snr(ds, self.EDGES))
        assert 0 in bins["-10"]
        assert 1 in bins["0"]


def test_dataset_hash_tracks_content():
    a = make_dataset(seed=0)
    b = make_dataset(seed=0)
    c = make_dataset(seed=1)
    assert dataset_hash(a) == dataset_hash(b)
    assert dataset_hash(a) != dataset_hash(c)


def test_validate_passes_clean_dataset():
    validate(make_dataset())
