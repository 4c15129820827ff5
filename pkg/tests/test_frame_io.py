import math

import numpy as np
import pytest

from qtmtlab.frame_io import (
    FrameBuffer,
    VideoFormatError,
    VideoSequence,
    load_raw,
    load_y4m,
    psnr,
    write_y4m,
)


def y4m_bytes(width, height, frames, chroma="mono", rng=None):
    header = f"YUV4MPEG2 W{width} H{height} F25:1 Ip A1:1 C{chroma}\n".encode()
    chunks = [header]
    payloads = []
    rng = rng or np.random.default_rng(0)
    for _ in range(frames):
        luma = rng.integers(0, 256, size=height * width, dtype=np.uint8).tobytes()
        payloads.append(luma)
        chunks.append(b"FRAME\n")
        chunks.append(luma)
        if chroma.startswith("420"):
            chunks.append(bytes(width * height // 2))
    return b"".join(chunks), payloads


def test_load_y4m_mono(tmp_path):
    data, payloads = y4m_bytes(64, 64, 3)
    path = tmp_path / "clip.y4m"
    path.write_bytes(data)
    seq = load_y4m(path)
    assert len(seq.frames) == 3
    for frame, payload in zip(seq.frames, payloads):
        assert frame.samples.size == 4096
        assert frame.samples.tobytes() == payload


def test_load_y4m_420_skips_chroma(tmp_path):
    data, payloads = y4m_bytes(32, 16, 2, chroma="420jpeg")
    path = tmp_path / "clip.y4m"
    path.write_bytes(data)
    seq = load_y4m(path)
    assert len(seq.frames) == 2
    assert seq.frames[1].samples.tobytes() == payloads[1]


def test_load_y4m_rejects_non_multiple_of_8(tmp_path):
    data, _ = y4m_bytes(104, 64, 1)
    path = tmp_path / "bad.y4m"
    path.write_bytes(data.replace(b"W104", b"W100"))
    with pytest.raises(VideoFormatError, match="multiples of 8"):
        load_y4m(path)


def test_load_y4m_truncated_names_frame(tmp_path):
    data, _ = y4m_bytes(32, 32, 2)
    path = tmp_path / "trunc.y4m"
    path.write_bytes(data[:-100])
    with pytest.raises(VideoFormatError, match="frame 1"):
        load_y4m(path)


def test_load_y4m_rejects_garbage(tmp_path):
    path = tmp_path / "junk.y4m"
    path.write_bytes(b"MPEG4\n" + bytes(100))
    with pytest.raises(VideoFormatError, match="YUV4MPEG2"):
        load_y4m(path)


def test_load_y4m_rejects_unknown_colourspace(tmp_path):
    data, _ = y4m_bytes(32, 32, 1, chroma="444")
    path = tmp_path / "c444.y4m"
    path.write_bytes(data)
    with pytest.raises(VideoFormatError, match="C444"):
        load_y4m(path)


def test_load_raw_420(tmp_path):
    rng = np.random.default_rng(2)
    stride = 32 * 32 + 32 * 32 // 2
    path = tmp_path / "clip.yuv"
    path.write_bytes(rng.integers(0, 256, size=2 * stride, dtype=np.uint8).tobytes())
    seq = load_raw(path, 32, 32, 2, "420")
    assert len(seq.frames) == 2
    assert seq.frames[0].samples.shape == (32, 32)


def test_load_raw_size_mismatch(tmp_path):
    stride = 32 * 32 + 32 * 32 // 2
    path = tmp_path / "short.yuv"
    path.write_bytes(bytes(2 * stride - 1))
    with pytest.raises(VideoFormatError, match="size mismatch"):
        load_raw(path, 32, 32, 2, "420")


def test_load_raw_monochrome(tmp_path):
    path = tmp_path / "mono.yuv"
    path.write_bytes(bytes(range(256)))
    seq = load_raw(path, 16, 16, 1, "400")
    assert len(seq.frames) == 1
    assert seq.frames[0].samples[15, 15] == 255


def test_load_raw_rejects_unknown_chroma(tmp_path):
    path = tmp_path / "c.yuv"
    path.write_bytes(bytes(256))
    with pytest.raises(VideoFormatError, match="chroma"):
        load_raw(path, 16, 16, 1, "422")


def test_load_is_reproducible(tmp_path):
    data, _ = y4m_bytes(64, 32, 2)
    path = tmp_path / "clip.y4m"
    path.write_bytes(data)
    a = load_y4m(path)
    b = load_y4m(path)
    for fa, fb in zip(a.frames, b.frames):
        assert np.array_equal(fa.samples, fb.samples)


def test_write_y4m_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    frames = [
        FrameBuffer(40, 24, rng.integers(0, 256, size=(24, 40), dtype=np.uint8))
        for _ in range(3)
    ]
    seq = VideoSequence(frames=frames, frame_rate=25.0)
    path = tmp_path / "out.y4m"
    write_y4m(path, seq)
    back = load_y4m(path)
    assert len(back.frames) == 3
    for fa, fb in zip(seq.frames, back.frames):
        assert np.array_equal(fa.samples, fb.samples)


def test_sequence_rejects_mixed_dimensions():
    a = FrameBuffer(16, 16, np.zeros((16, 16), dtype=np.uint8))
    b = FrameBuffer(32, 16, np.zeros((16, 32), dtype=np.uint8))
    with pytest.raises(VideoFormatError):
        VideoSequence(frames=[a, b])


def flat(width, height, value):
    return FrameBuffer(width, height, np.full((height, width), value, dtype=np.uint8))


def test_psnr_lossless_cap():
    a = flat(64, 64, 57)
    assert psnr(a, a) == 100.0


def test_psnr_unit_error():
    a = flat(64, 64, 100)
    b = flat(64, 64, 101)
    assert psnr(a, b) == pytest.approx(10 * math.log10(255**2), abs=1e-9)


def test_psnr_full_scale_error():
    a = flat(64, 64, 0)
    b = flat(64, 64, 255)
    assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)


def test_psnr_symmetric_and_monotone():
    base = flat(32, 32, 60)
    previous = None
    for err in (1, 2, 5, 17, 80):
        other = flat(32, 32, 60 + err)
        fwd = psnr(base, other)
        assert fwd == psnr(other, base)
        if previous is not None:
            assert fwd < previous
        previous = fwd


def test_psnr_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        psnr(flat(32, 32, 0), flat(64, 32, 0))
