import numpy as np
import pytest

from ssanc.errors import ConfigError
from ssanc.io import (
    read_band_table,
    read_control_filter,
    read_fir,
    read_reirs,
    read_wav,
    write_control_filter,
    write_fir,
    write_reirs,
    write_wav,
)
from ssanc.sigcore import Fir


def test_fir_round_trip(tmp_path, rng):
    f = Fir(rng.standard_normal(17))
    write_fir(tmp_path / "g.txt", f)
    assert np.array_equal(read_fir(tmp_path / "g.txt").taps, f.taps)


def test_fir_from_wav(tmp_path):
    write_wav(tmp_path / "g.wav", np.array([1.0, 0.5, 0.25]), 8000)
    assert np.array_equal(read_fir(tmp_path / "g.wav").taps, [1.0, 0.5, 0.25])
    write_wav(tmp_path / "st.wav", np.ones((2, 3)), 8000)
    with pytest.raises(ConfigError, match="mono"):
        read_fir(tmp_path / "st.wav")


def test_reir_round_trip(tmp_path, rng):
    reirs = [Fir(rng.standard_normal(9), anticausal_len=3) for _ in range(3)]
    write_reirs(tmp_path / "r.txt", reirs, reference_mic=1)
    back, ref = read_reirs(tmp_path / "r.txt")
    assert ref == 1
    for a, b in zip(back, reirs):
        assert a.anticausal_len == 3 and np.array_equal(a.taps, b.taps)
    assert (tmp_path / "r.txt").read_text().splitlines()[0] == "3 6 3 2"


def test_control_filter_round_trip(tmp_path, rng):
    w = rng.standard_normal((3, 7))
    write_control_filter(tmp_path / "w.txt", w)
    assert np.array_equal(read_control_filter(tmp_path / "w.txt"), w)


def test_wav_round_trip_float32(tmp_path, rng):
    x = rng.uniform(-1, 1, (2, 500))
    assert write_wav(tmp_path / "a.wav", x, 16000) == 1.0
    y, rate = read_wav(tmp_path / "a.wav")
    assert rate == 16000 and y.shape == x.shape
    assert np.array_equal(y, x.astype(np.float32).astype(float))
    gain = write_wav(tmp_path / "n.wav", 4 * x[0], 16000, normalize=True)
    y, _ = read_wav(tmp_path / "n.wav")
    assert gain == pytest.approx(1 / np.max(np.abs(4 * x[0])))
    assert np.max(np.abs(y)) == pytest.approx(1.0)


def test_int16_wav_scaled(tmp_path):
    import scipy.io.wavfile

    scipy.io.wavfile.write(tmp_path / "i.wav", 8000, np.array([0, 16384, -32768], np.int16))
    y, _ = read_wav(tmp_path / "i.wav")
    assert np.array_equal(y, [0.0, 0.5, -1.0])


def test_band_table(tmp_path):
    (tmp_path / "b.txt").write_text("500 0.5\n1000 0.5\n")
    c, w = read_band_table(tmp_path / "b.txt")
    assert np.array_equal(c, [500, 1000]) and np.array_equal(w, [0.5, 0.5])


@pytest.mark.parametrize(
    "reader,text,match",
    [
        (read_reirs, "1 2 3\n", "header"),
        (read_reirs, "1 2 2 1\n0 1 0\n", "expected 2 rows"),
        (read_control_filter, "2\n", "header"),
        (read_control_filter, "2 3\n1 2 3\n", "expected 2 rows"),
        (read_band_table, "500 0.5 1\n", "center_hz"),
        (read_fir, "1.0 abc\n", "not numeric"),
        (read_fir, "# only a comment\n", "no taps"),
    ],
)
def test_bad_files(tmp_path, reader, text, match):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ConfigError, match=match):
        reader(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        read_fir(tmp_path / "nope.txt")
